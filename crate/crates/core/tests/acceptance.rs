//! Acceptance criteria. Runs as a plain binary (no libtest harness) so every criterion
//! prints a PASS/FAIL line; exits nonzero if any fails.

use std::path::Path;
use std::process::{Command, ExitCode};

use bitpower::alloc::{
    activation_threshold, allocate, closed_form_continuous, continuous_bits,
};
use bitpower::channel::{self, ChannelModelConfig};
use bitpower::harness::{
    compare_to_oracle, run_sweep, AllocatorKind, OracleComparisonSpec, SweepResult, SweepSpec,
    SweepVariable,
};
use bitpower::math::{
    ber_estimate, ber_log_margin, power_for_ber_real, PowerThreshold, SystemConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo.log10()..hi.log10()))
}

/// 1. Grid search along the BER-equality curve lands within 2e-3 of the closed form.
fn closed_form_stationarity() -> Outcome {
    const GRID_LO: f64 = 2.0;
    const GRID_HI: f64 = 25.0;
    const STEP: f64 = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut accepted = 0;
    let mut resampled = 0;
    while accepted < 1000 {
        let c = log_uniform(&mut rng, 20.0, 1e10);
        let alpha = rng.random_range(0.05..0.95);
        let t = log_uniform(&mut rng, 1e-6, 1e-3);
        if c < activation_threshold(alpha, t) {
            resampled += 1;
            continue;
        }
        let b_star = closed_form_continuous(&[c], alpha, &[t]).bits[0];
        if b_star > GRID_HI {
            // the grid cannot contain a minimizer beyond its upper end
            resampled += 1;
            continue;
        }
        let steps = ((GRID_HI - GRID_LO) / STEP).round() as usize;
        let mut best = (f64::INFINITY, GRID_LO);
        for k in 0..=steps {
            let b = GRID_LO + k as f64 * STEP;
            let f = alpha * power_for_ber_real(b, c, t).unwrap() - (1.0 - alpha) * b;
            if f < best.0 {
                best = (f, b);
            }
        }
        let err = (best.1 - b_star).abs();
        worst = worst.max(err);
        ensure(err <= 2e-3, || {
            format!("C={c:e} alpha={alpha} t={t:e}: grid {} vs b*={b_star}", best.1)
        })?;
        accepted += 1;
    }
    Ok(format!(
        "1000 instances, max |grid - b*| = {worst:.2e} (resampled {resampled})"
    ))
}

/// 2. b*(C_min) = 2 and the activation test flips across C_min * (1 -/+ 1e-6).
fn activation_boundary() -> Outcome {
    let c_min = activation_threshold(0.5, 1e-4);
    let expected = 2.5 * std::f64::consts::LN_2 * 2000f64.ln();
    ensure((c_min - expected).abs() < 1e-12, || format!("C_min = {c_min}"))?;
    ensure((c_min - 13.1714).abs() < 1e-4, || format!("C_min = {c_min}"))?;
    let b = continuous_bits(c_min, 0.5, 1e-4);
    ensure((b - 2.0).abs() <= 1e-9, || format!("b*(C_min) = {b}"))?;
    let below = closed_form_continuous(&[c_min * (1.0 - 1e-6)], 0.5, &[1e-4]);
    let above = closed_form_continuous(&[c_min * (1.0 + 1e-6)], 0.5, &[1e-4]);
    ensure(!below.active[0], || "C_min(1-1e-6) activated".into())?;
    ensure(above.active[0], || "C_min(1+1e-6) not activated".into())?;
    Ok(format!("C_min = {c_min:.6}, |b*(C_min) - 2| = {:.1e}", (b - 2.0).abs()))
}

/// 3. Every active subcarrier sits at its BER target; total power respects the limit.
fn ber_feasibility() -> Outcome {
    let cm = ChannelModelConfig::reference();
    let noise = [1e-1, 1e-4, 1e-9];
    let limits = [
        PowerThreshold::Unbounded,
        PowerThreshold::Absolute(1e-4),
        PowerThreshold::Relative(0.5),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_ber = 0.0f64;
    let mut active_total = 0usize;
    for k in 0..100 {
        let sigma2 = noise[k % 3];
        let limit = limits[(k / 3) % 3];
        let cfg = SystemConfig::reference()
            .with_power_threshold(limit);
        let cfg = SystemConfig { noise_variance: sigma2, ..cfg };
        let real = channel::ChannelRealization::generate(&cm, sigma2, &mut rng).unwrap();
        let (alloc, trace) = allocate(&real.cnrs, &cfg);
        for i in 0..128 {
            if alloc.bits[i] == 0 {
                ensure(alloc.powers[i] == 0.0, || format!("null subcarrier {i} has power"))?;
                continue;
            }
            active_total += 1;
            let ber = ber_estimate(alloc.powers[i], alloc.bits[i] as f64, real.cnrs[i]).unwrap();
            let rel = ((ber - 1e-4) / 1e-4).abs();
            worst_ber = worst_ber.max(rel);
            ensure(rel <= 1e-10, || format!("trial {k} sc {i}: BER {ber:e}"))?;
        }
        if let Some(p_th) = trace.power_limit {
            let total = alloc.total_power();
            ensure(total <= p_th * (1.0 + 1e-12 * 128.0), || {
                format!("trial {k}: total {total:e} > limit {p_th:e}")
            })?;
        }
    }
    Ok(format!(
        "100 realizations, {active_total} active subcarriers, max rel BER error {worst_ber:.1e}"
    ))
}

/// 4. Budget loop: strictly decreasing power, greedy max-release choice, bounded steps.
fn budget_loop_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut total_steps = 0usize;
    for k in 0..1000 {
        let n = rng.random_range(1..=64usize);
        let taps = rng.random_range(1..=n.min(5));
        let cm = ChannelModelConfig {
            num_taps: taps,
            decay_factor: 0.2,
            num_subcarriers: n,
        };
        let sigma2 = log_uniform(&mut rng, 1e-9, 1e-2);
        let frac: f64 = rng.random_range(0.0..0.9);
        let t = log_uniform(&mut rng, 1e-6, 1e-2);
        let alpha = rng.random_range(0.1..0.9);
        let real = channel::ChannelRealization::generate(&cm, sigma2, &mut rng).unwrap();
        let cfg = SystemConfig::new(n, alpha, t, sigma2, PowerThreshold::Relative(frac.max(1e-12)))
            .unwrap();
        let (alloc, trace) = allocate(&real.cnrs, &cfg);
        let limit = trace.power_limit.unwrap();
        let margin = ber_log_margin(t);

        let mut bits = trace.initial.bits.clone();
        let mut prev_total = trace.initial.total_power();
        for (s, step) in trace.steps.iter().enumerate() {
            // independent recomputation of every candidate's release
            let release = |i: usize, b: u32| -> f64 {
                let c = real.cnrs[i];
                if b == 2 {
                    3.0 * margin / (1.6 * c)
                } else {
                    2f64.powi(b as i32 - 1) * margin / (1.6 * c)
                }
            };
            let max = (0..n)
                .filter(|&i| bits[i] > 0)
                .map(|i| release(i, bits[i]))
                .fold(f64::NEG_INFINITY, f64::max);
            let chosen = release(step.subcarrier_index, bits[step.subcarrier_index]);
            ensure(bits[step.subcarrier_index] == step.bits_before, || {
                format!("instance {k} step {s}: bits_before mismatch")
            })?;
            ensure(chosen >= max * (1.0 - 1e-9), || {
                format!("instance {k} step {s}: released {chosen:e} < max {max:e}")
            })?;
            ensure(((step.power_released - chosen) / chosen).abs() < 1e-9, || {
                format!("instance {k} step {s}: recorded release differs")
            })?;
            bits[step.subcarrier_index] = step.bits_after;
            let total: f64 = bits
                .iter()
                .enumerate()
                .map(|(i, &b)| {
                    if b == 0 {
                        0.0
                    } else {
                        (2f64.powi(b as i32) - 1.0) * margin / (1.6 * real.cnrs[i])
                    }
                })
                .sum();
            ensure(total < prev_total, || {
                format!("instance {k} step {s}: total power did not decrease")
            })?;
            prev_total = total;
        }
        ensure(bits == alloc.bits, || format!("instance {k}: replay mismatch"))?;
        ensure(trace.steps.len() as u64 <= trace.initial.total_bits(), || {
            format!("instance {k}: too many steps")
        })?;
        ensure(alloc.total_power() <= limit, || format!("instance {k}: over budget"))?;
        total_steps += trace.steps.len();
    }
    Ok(format!("1000 instances, {total_steps} removal steps checked"))
}

/// 5. Oracle dominance at N = 8, b_max = 12, P_th = 5 uW; median gap reported.
fn oracle_dominance() -> Outcome {
    let mut spec = OracleComparisonSpec::reference();
    spec.num_realizations = 200;
    spec.master_seed = 505;
    ensure(spec.system.num_subcarriers == 8 && spec.b_max == 12, || "bad setup".into())?;
    ensure(spec.system.power_threshold == PowerThreshold::Absolute(5e-6), || {
        "bad threshold".into()
    })?;
    let cmp = compare_to_oracle(&spec).map_err(|e| e.to_string())?;
    for t in &cmp.trials {
        ensure(t.oracle_objective <= t.proposed_objective + 1e-9, || {
            format!(
                "trial {}: oracle {} > proposed {}",
                t.trial_index, t.oracle_objective, t.proposed_objective
            )
        })?;
    }
    Ok(format!(
        "200 realizations, median rel gap {:.3e}, mean {:.3e}, max {:.3e}, optimal in {}",
        cmp.median_relative_gap, cmp.mean_relative_gap, cmp.max_relative_gap, cmp.num_optimal
    ))
}

fn desk_sweep(
    variable: SweepVariable,
    values: Vec<f64>,
    system: SystemConfig,
    allocators: Vec<AllocatorKind>,
) -> Result<SweepResult, String> {
    let mut spec = SweepSpec::new(variable, values, system);
    spec.num_realizations = 500;
    spec.master_seed = 606;
    spec.allocators = allocators;
    spec.feasibility_stride = 1;
    let res = run_sweep(&spec).map_err(|e| e.to_string())?;
    ensure(res.feasibility_violations == 0, || {
        format!("{} infeasible trials", res.feasibility_violations)
    })?;
    Ok(res)
}

fn noise_grid() -> Vec<f64> {
    vec![
        1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 2e-1, 3e-1, 5e-1,
    ]
}

/// 6a. Unconstrained SNR sweep: throughput rises; power flat once every subcarrier is on.
fn snr_sweep_shape() -> Outcome {
    let res = desk_sweep(
        SweepVariable::NoiseVariance,
        noise_grid(),
        SystemConfig::reference(),
        vec![AllocatorKind::ProposedUnconstrained],
    )?;
    // descending noise = ascending SNR
    let mut s = res.series(AllocatorKind::ProposedUnconstrained);
    s.reverse();
    for w in s.windows(2) {
        ensure(w[1].avg_throughput >= w[0].avg_throughput, || {
            format!("throughput fell from {} to {}", w[0].avg_throughput, w[1].avg_throughput)
        })?;
        ensure(w[1].avg_reported_snr_db >= w[0].avg_reported_snr_db, || {
            "reported SNR not ascending".into()
        })?;
    }
    let all_on: Vec<_> = s.iter().filter(|x| x.avg_active_subcarriers == 128.0).collect();
    ensure(all_on.len() >= 2, || "fewer than two fully active sweep points".into())?;
    let powers: Vec<f64> = all_on.iter().map(|x| x.avg_transmit_power).collect();
    let mean = powers.iter().sum::<f64>() / powers.len() as f64;
    let spread = powers.iter().fold(0.0f64, |m, p| m.max(((p - mean) / mean).abs()));
    ensure(spread < 0.02, || format!("power varies {:.2}% when fully active", spread * 100.0))?;
    for w in all_on.windows(2) {
        ensure(w[1].avg_throughput > w[0].avg_throughput, || {
            "throughput not strictly increasing when fully active".into()
        })?;
    }
    Ok(format!(
        "{} fully active points from {:.1} dB, power spread {:.3}%",
        all_on.len(),
        all_on[0].avg_reported_snr_db,
        spread * 100.0
    ))
}

/// 6b. Alpha sweep: non-increasing averages; the 0.1 mW limit saturates both.
fn alpha_sweep_shape() -> Outcome {
    let alphas: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    let system = SystemConfig::reference().with_power_threshold(PowerThreshold::Absolute(1e-4));
    let res = desk_sweep(
        SweepVariable::Alpha,
        alphas,
        system,
        vec![AllocatorKind::Proposed, AllocatorKind::ProposedUnconstrained],
    )?;
    let free = res.series(AllocatorKind::ProposedUnconstrained);
    let capped = res.series(AllocatorKind::Proposed);
    for s in [&free, &capped] {
        for w in s.windows(2) {
            ensure(w[1].avg_throughput <= w[0].avg_throughput, || {
                format!("throughput rose at alpha {}", w[1].sweep_value)
            })?;
            ensure(w[1].avg_transmit_power <= w[0].avg_transmit_power, || {
                format!("power rose at alpha {}", w[1].sweep_value)
            })?;
        }
    }
    let saturated: Vec<_> = free
        .iter()
        .zip(&capped)
        .filter(|(f, _)| f.avg_transmit_power > 1e-4)
        .map(|(_, c)| *c)
        .collect();
    ensure(!saturated.is_empty(), || "no alpha where the limit binds".into())?;
    let spread = |v: Vec<f64>| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().fold(0.0f64, |m, x| m.max(((x - mean) / mean).abs()))
    };
    let tp = spread(saturated.iter().map(|c| c.avg_throughput).collect());
    let pw = spread(saturated.iter().map(|c| c.avg_transmit_power).collect());
    ensure(saturated.iter().all(|c| c.avg_transmit_power <= 1e-4), || "over limit".into())?;
    ensure(tp < 0.02 && pw < 0.02, || {
        format!("constrained averages not saturated: throughput {tp:.3}, power {pw:.3}")
    })?;
    Ok(format!(
        "unconstrained {:.0}->{:.0} bits; {} saturated points at {:.1} bits, {:.3e} W",
        free[0].avg_throughput,
        free[free.len() - 1].avg_throughput,
        saturated.len(),
        saturated[0].avg_throughput,
        saturated[0].avg_transmit_power
    ))
}

/// 6c. Power threshold sweep: power tracks min(P_th, unconstrained) and saturates.
fn threshold_sweep_shape() -> Outcome {
    let limits = vec![
        1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 150.0, 1e3, 1e4,
    ];
    let res = desk_sweep(
        SweepVariable::PowerThreshold,
        limits,
        SystemConfig::reference(),
        vec![AllocatorKind::Proposed, AllocatorKind::ProposedUnconstrained],
    )?;
    let capped = res.series(AllocatorKind::Proposed);
    let free = res.series(AllocatorKind::ProposedUnconstrained);
    for (c, f) in capped.iter().zip(&free) {
        let bound = c.sweep_value.min(f.avg_transmit_power);
        ensure(c.avg_transmit_power <= bound * (1.0 + 1e-12), || {
            format!("P_th {}: power {} > {}", c.sweep_value, c.avg_transmit_power, bound)
        })?;
    }
    for w in capped.windows(2) {
        ensure(w[1].avg_transmit_power >= w[0].avg_transmit_power, || {
            "power decreased with P_th".into()
        })?;
        ensure(w[1].avg_throughput >= w[0].avg_throughput, || {
            "throughput decreased with P_th".into()
        })?;
    }
    let (last_c, last_f) = (capped[capped.len() - 1], free[free.len() - 1]);
    let prev_c = capped[capped.len() - 2];
    ensure(last_c.avg_transmit_power == last_f.avg_transmit_power, || {
        "no saturation at the unconstrained average".into()
    })?;
    ensure(last_c.avg_throughput == last_f.avg_throughput, || {
        "throughput not saturated".into()
    })?;
    ensure(prev_c.avg_throughput == last_c.avg_throughput, || {
        "last two points differ".into()
    })?;
    Ok(format!(
        "saturates at {:.2} W / {:.1} bits",
        last_c.avg_transmit_power, last_c.avg_throughput
    ))
}

/// 6d. Proposed throughput >= uniform-power baseline at low SNR, strictly at the lowest.
fn baseline_comparison() -> Outcome {
    let mut notes = Vec::new();
    for limit in [PowerThreshold::Unbounded, PowerThreshold::Absolute(1e-4)] {
        let res = desk_sweep(
            SweepVariable::NoiseVariance,
            noise_grid(),
            SystemConfig::reference().with_power_threshold(limit),
            vec![
                AllocatorKind::Proposed,
                AllocatorKind::ProposedUnconstrained,
                AllocatorKind::Baseline,
            ],
        )?;
        let prop = res.series(AllocatorKind::Proposed);
        let free = res.series(AllocatorKind::ProposedUnconstrained);
        let base = res.series(AllocatorKind::Baseline);
        // low SNR: the activation test nulls at least one subcarrier somewhere
        let low: Vec<usize> = (0..prop.len())
            .filter(|&k| free[k].avg_active_subcarriers < 128.0)
            .collect();
        ensure(!low.is_empty(), || "no low-SNR points".into())?;
        for &k in &low {
            ensure(prop[k].avg_throughput >= base[k].avg_throughput, || {
                format!(
                    "noise {}: proposed {} < baseline {}",
                    prop[k].sweep_value, prop[k].avg_throughput, base[k].avg_throughput
                )
            })?;
        }
        // lowest two points (highest noise) where the proposed allocator carries data
        let lowest: Vec<usize> = low
            .iter()
            .rev()
            .copied()
            .filter(|&k| prop[k].avg_throughput > 0.0)
            .take(2)
            .collect();
        ensure(lowest.len() == 2, || "fewer than two loaded low-SNR points".into())?;
        for &k in &lowest {
            ensure(prop[k].avg_throughput > base[k].avg_throughput, || {
                format!("noise {}: no strict improvement", prop[k].sweep_value)
            })?;
        }
        let k = lowest[0];
        notes.push(format!(
            "{}: {} low points, at noise {} proposed {:.2} vs baseline {:.2} bits",
            if limit.is_bounded() { "P_th=0.1mW" } else { "unbounded" },
            low.len(),
            prop[k].sweep_value,
            prop[k].avg_throughput,
            base[k].avg_throughput
        ));
    }
    Ok(notes.join("; "))
}

/// 7. Tap variances and per-subcarrier energy over 1e5 realizations.
fn channel_statistics() -> Outcome {
    let cm = ChannelModelConfig::reference();
    let expected = cm.tap_variances();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let draws = 100_000;
    let mut tap_energy = vec![0.0; cm.num_taps];
    let mut sc_energy = vec![0.0; cm.num_subcarriers];
    for _ in 0..draws {
        let taps = channel::generate_impulse_response(&cm, &mut rng);
        for (acc, h) in tap_energy.iter_mut().zip(&taps) {
            *acc += h.norm_sqr();
        }
        for (acc, h) in sc_energy
            .iter_mut()
            .zip(channel::frequency_response(&taps, cm.num_subcarriers))
        {
            *acc += h.norm_sqr();
        }
    }
    let mut worst_tap = 0.0f64;
    for (n, (e, want)) in tap_energy.iter().zip(&expected).enumerate() {
        let rel = (e / draws as f64 / want - 1.0).abs();
        worst_tap = worst_tap.max(rel);
        ensure(rel < 0.02, || format!("tap {n} off by {:.2}%", rel * 100.0))?;
    }
    let mut worst_sc = 0.0f64;
    for (i, e) in sc_energy.iter().enumerate() {
        let rel = (e / draws as f64 - 1.0).abs();
        worst_sc = worst_sc.max(rel);
        ensure(rel < 0.02, || format!("subcarrier {i} energy off by {:.2}%", rel * 100.0))?;
    }
    Ok(format!(
        "max tap error {:.2}%, max subcarrier error {:.2}%",
        worst_tap * 100.0,
        worst_sc * 100.0
    ))
}

/// 8. Every workflow reruns to byte-identical files.
fn determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_bitpower");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs: [&[&str]; 3] = [
        &["alloc", "--seed", "11"],
        &["sweep", "--realizations", "40", "--seed", "12", "--allocators",
          "proposed,proposed_unconstrained,baseline,oracle", "--subcarriers", "8",
          "--sweep-values", "1e-9,1e-6,1e-3"],
        &["oracle", "--realizations", "30", "--seed", "13"],
    ];
    let mut files = 0;
    for (k, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = dir.path().join(format!("w{k}_{rep}"));
            let status = Command::new(exe)
                .args(*args)
                .arg("--out")
                .arg(&out)
                .output()
                .map_err(|e| e.to_string())?;
            ensure(status.status.success(), || {
                format!("{args:?} failed: {}", String::from_utf8_lossy(&status.stderr))
            })?;
            outputs.push(out);
        }
        let names = list(&outputs[0])?;
        ensure(names == list(&outputs[1])?, || "different file sets".into())?;
        for name in names {
            let a = std::fs::read(outputs[0].join(&name)).map_err(|e| e.to_string())?;
            let b = std::fs::read(outputs[1].join(&name)).map_err(|e| e.to_string())?;
            ensure(a == b, || format!("{:?}: {name} differs between runs", args[0]))?;
            files += 1;
        }
    }
    Ok(format!("{files} output files byte-identical across reruns"))
}

fn list(dir: &Path) -> Result<Vec<String>, String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    Ok(v)
}

fn main() -> ExitCode {
    let criteria: [(&str, &str, fn() -> Outcome); 11] = [
        ("AC1", "closed-form stationarity", closed_form_stationarity),
        ("AC2", "activation boundary", activation_boundary),
        ("AC3", "BER feasibility everywhere", ber_feasibility),
        ("AC4", "budget-loop correctness", budget_loop_correctness),
        ("AC5", "oracle dominance and gap", oracle_dominance),
        ("AC6a", "SNR sweep shape", snr_sweep_shape),
        ("AC6b", "alpha sweep shape", alpha_sweep_shape),
        ("AC6c", "power-threshold sweep shape", threshold_sweep_shape),
        ("AC6d", "proposed vs uniform-power baseline", baseline_comparison),
        ("AC7", "channel statistics", channel_statistics),
        ("AC8", "determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| id.contains(f.as_str())) {
            continue;
        }
        let start = std::time::Instant::now();
        match check() {
            Ok(detail) => println!(
                "[PASS] {id} {name}: {detail} ({:.1}s)",
                start.elapsed().as_secs_f64()
            ),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {id} {name}: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
