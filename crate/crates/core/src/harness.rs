//! Monte Carlo sweeps over noise variance, alpha or the power threshold.
//!
//! Trial `k` of a sweep draws its channel from `derive_trial_seed(master_seed, k)`, and
//! the same channels are reused at every sweep point so trends are not masked by
//! resampling noise. Trials run in parallel but are reduced in trial order, which
//! keeps the output independent of scheduling.

use std::fmt::{self, Write as _};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::alloc::{allocate, exhaustive_oracle, uniform_power_baseline, DEFAULT_ORACLE_MAX_BITS};
use crate::channel::{self, ChannelModelConfig, ChannelRealization, RNG_NAME};
use crate::error::{Error, Result};
use crate::math::{
    constraint_residuals, residuals_feasible, to_db, Allocation, PowerThreshold, SystemConfig,
};

/// Human-readable form of [`derive_trial_seed`], recorded in metadata.
pub const SEED_RULE: &str =
    "trial_seed = splitmix64(master_seed ^ splitmix64(trial_index)); same trials at every sweep point";

/// Mean BER convention of the uniform-power baseline, recorded in metadata.
pub const BASELINE_NOTE: &str = "uniform power = proposed per-realization total / N; \
     mean BER averaged over active subcarriers";

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the channel of trial `trial_index`.
pub fn derive_trial_seed(master_seed: u64, trial_index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(trial_index))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    NoiseVariance,
    Alpha,
    PowerThreshold,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::NoiseVariance => "noise_variance",
            SweepVariable::Alpha => "alpha",
            SweepVariable::PowerThreshold => "power_threshold",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "noise_variance" => Some(SweepVariable::NoiseVariance),
            "alpha" => Some(SweepVariable::Alpha),
            "power_threshold" => Some(SweepVariable::PowerThreshold),
            _ => None,
        }
    }

    fn apply(self, base: &SystemConfig, value: f64) -> Result<SystemConfig> {
        let mut cfg = base.clone();
        match self {
            SweepVariable::NoiseVariance => cfg.noise_variance = value,
            SweepVariable::Alpha => cfg.alpha = value,
            SweepVariable::PowerThreshold => {
                cfg.power_threshold = PowerThreshold::Absolute(value)
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocatorKind {
    /// Full pipeline under the configured power threshold.
    Proposed,
    /// Rounded closed form with no power threshold.
    ProposedUnconstrained,
    /// Uniform power (proposed total / N) with mean-BER incremental loading.
    Baseline,
    /// Exhaustive discrete optimum.
    Oracle,
}

impl AllocatorKind {
    pub const ALL: [AllocatorKind; 4] = [
        AllocatorKind::Proposed,
        AllocatorKind::ProposedUnconstrained,
        AllocatorKind::Baseline,
        AllocatorKind::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AllocatorKind::Proposed => "proposed",
            AllocatorKind::ProposedUnconstrained => "proposed_unconstrained",
            AllocatorKind::Baseline => "baseline",
            AllocatorKind::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for AllocatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    /// Template; the swept field is overwritten at each point.
    pub system: SystemConfig,
    pub channel: ChannelModelConfig,
    pub num_realizations: usize,
    pub master_seed: u64,
    pub allocators: Vec<AllocatorKind>,
    pub oracle_max_bits: u32,
    pub force_oracle: bool,
    /// Check constraint residuals on every `feasibility_stride`-th trial (1 = all).
    pub feasibility_stride: usize,
}

impl SweepSpec {
    pub fn new(variable: SweepVariable, values: Vec<f64>, system: SystemConfig) -> Self {
        let channel = ChannelModelConfig {
            num_subcarriers: system.num_subcarriers,
            ..ChannelModelConfig::reference()
        };
        SweepSpec {
            variable,
            values,
            system,
            channel,
            num_realizations: 500,
            master_seed: 1,
            allocators: vec![AllocatorKind::Proposed, AllocatorKind::ProposedUnconstrained],
            oracle_max_bits: DEFAULT_ORACLE_MAX_BITS,
            force_oracle: false,
            feasibility_stride: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::config("sweep_values", "must not be empty"));
        }
        if self.values.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::config("sweep_values", "must be sorted ascending"));
        }
        if self.num_realizations == 0 {
            return Err(Error::config("realizations", "must be a positive integer"));
        }
        if self.allocators.is_empty() {
            return Err(Error::config("allocators", "must name at least one allocator"));
        }
        if self.feasibility_stride == 0 {
            return Err(Error::config("feasibility_stride", "must be a positive integer"));
        }
        if self.channel.num_subcarriers != self.system.num_subcarriers {
            return Err(Error::config(
                "num_subcarriers",
                "channel and system subcarrier counts differ",
            ));
        }
        self.channel.validate()?;
        for &v in &self.values {
            self.variable.apply(&self.system, v)?;
        }
        if self.allocators.contains(&AllocatorKind::Oracle) {
            crate::alloc::check_oracle_size(
                self.system.num_subcarriers,
                self.oracle_max_bits,
                self.force_oracle,
            )?;
        }
        Ok(())
    }
}

/// Averages over the realizations of one sweep point for one allocator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub sweep_value: f64,
    /// Bits per OFDM symbol.
    pub avg_throughput: f64,
    /// Watts.
    pub avg_transmit_power: f64,
    /// Linear mean of `P_i |H_i|^2 / noise` over all subcarriers and realizations, in dB.
    pub avg_reported_snr_db: f64,
    pub avg_objective: f64,
    pub avg_active_subcarriers: f64,
    pub num_realizations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub allocator: AllocatorKind,
    pub summary: TrialSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    /// Ordered by sweep value, then by the allocator order in the spec.
    pub rows: Vec<SweepRow>,
    pub feasibility_checked: usize,
    pub feasibility_violations: usize,
}

impl SweepResult {
    /// Summaries for one allocator in sweep order.
    pub fn series(&self, kind: AllocatorKind) -> Vec<&TrialSummary> {
        self.rows
            .iter()
            .filter(|r| r.allocator == kind)
            .map(|r| &r.summary)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "sweep_variable,sweep_value,allocator,avg_snr_db,avg_throughput_bits,avg_power_w,avg_objective,num_realizations,master_seed\n",
        );
        for row in &self.rows {
            let s = &row.summary;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                self.spec.variable,
                s.sweep_value,
                row.allocator,
                s.avg_reported_snr_db,
                s.avg_throughput,
                s.avg_transmit_power,
                s.avg_objective,
                s.num_realizations,
                self.spec.master_seed
            );
        }
        out
    }

    pub fn metadata_json(&self) -> String {
        let meta = serde_json::json!({
            "tool": "bitpower",
            "version": VERSION,
            "workflow": "sweep",
            "rng": RNG_NAME,
            "seed_rule": SEED_RULE,
            "baseline": BASELINE_NOTE,
            "reported_snr": "linear mean of P_i*|H_i|^2/noise over all N subcarriers and realizations, in dB",
            "spec": self.spec,
            "feasibility_checked": self.feasibility_checked,
            "feasibility_violations": self.feasibility_violations,
        });
        serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n"
    }
}

/// Per-trial tallies for one allocator.
#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    bits: f64,
    power: f64,
    snr_sum: f64,
    objective: f64,
    active: f64,
}

impl Tally {
    fn of(alloc: &Allocation, cnrs: &[f64]) -> Self {
        Tally {
            bits: alloc.total_bits() as f64,
            power: alloc.total_power(),
            snr_sum: received_snr_sum(alloc, cnrs),
            objective: alloc.objective_value,
            active: alloc.num_active() as f64,
        }
    }
}

fn received_snr_sum(alloc: &Allocation, cnrs: &[f64]) -> f64 {
    alloc.powers.iter().zip(cnrs).map(|(p, c)| p * c).sum()
}

/// Mean of `P_i |H_i|^2 / noise_variance` over every subcarrier of every realization,
/// in dB. Nulled subcarriers count as zero; an all-null batch gives `-inf`.
pub fn reported_average_snr(
    allocations: &[Allocation],
    realizations: &[ChannelRealization],
    noise_variance: f64,
) -> f64 {
    assert_eq!(allocations.len(), realizations.len());
    let mut sum = 0.0;
    let mut count = 0usize;
    for (a, r) in allocations.iter().zip(realizations) {
        for (p, h) in a.powers.iter().zip(&r.gains) {
            sum += p * h.norm_sqr() / noise_variance;
        }
        count += a.len();
    }
    mean_snr_db(sum, count)
}

fn mean_snr_db(sum: f64, count: usize) -> f64 {
    if count == 0 || sum <= 0.0 {
        f64::NEG_INFINITY
    } else {
        to_db(sum / count as f64)
    }
}

/// Draws the gains of every trial once; they are shared by all sweep points.
pub fn trial_gains(
    channel: &ChannelModelConfig,
    master_seed: u64,
    num_realizations: usize,
) -> Vec<Vec<Complex64>> {
    (0..num_realizations)
        .into_par_iter()
        .map(|k| {
            let mut rng = channel::trial_rng(derive_trial_seed(master_seed, k as u64));
            let taps = channel::generate_impulse_response(channel, &mut rng);
            channel::frequency_response(&taps, channel.num_subcarriers)
        })
        .collect()
}

struct TrialOutcome {
    tallies: Vec<Tally>,
    checked: bool,
    feasible: bool,
}

fn run_trial(
    spec: &SweepSpec,
    cfg: &SystemConfig,
    gains: &[Complex64],
    check: bool,
) -> Result<TrialOutcome> {
    let cnrs = channel::channel_to_noise(gains, cfg.noise_variance)?;
    let (proposed, trace) = allocate(&cnrs, cfg);
    let mut feasible = true;
    if check {
        for (alloc, limit) in [
            (&proposed, trace.power_limit),
            (&trace.initial, None),
        ] {
            let r = constraint_residuals(alloc, &cnrs, &cfg.ber_targets, limit);
            feasible &= residuals_feasible(&r, limit);
        }
    }
    let mut tallies = Vec::with_capacity(spec.allocators.len());
    for kind in &spec.allocators {
        let tally = match kind {
            AllocatorKind::Proposed => Tally::of(&proposed, &cnrs),
            AllocatorKind::ProposedUnconstrained => Tally::of(&trace.initial, &cnrs),
            AllocatorKind::Baseline => {
                let b = uniform_power_baseline(&cnrs, cfg, proposed.total_power());
                Tally::of(&b, &cnrs)
            }
            AllocatorKind::Oracle => {
                let o = exhaustive_oracle(&cnrs, cfg, spec.oracle_max_bits, spec.force_oracle)?;
                if check {
                    let limit = trace.power_limit;
                    let r = constraint_residuals(&o, &cnrs, &cfg.ber_targets, limit);
                    feasible &= residuals_feasible(&r, limit);
                }
                Tally::of(&o, &cnrs)
            }
        };
        tallies.push(tally);
    }
    Ok(TrialOutcome {
        tallies,
        checked: check,
        feasible,
    })
}

/// Runs every allocator in `spec` at every sweep point.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let gains = trial_gains(&spec.channel, spec.master_seed, spec.num_realizations);
    let n = spec.system.num_subcarriers;
    let r = spec.num_realizations;
    let mut rows = Vec::with_capacity(spec.values.len() * spec.allocators.len());
    let mut checked = 0;
    let mut violations = 0;

    for &value in &spec.values {
        let cfg = spec.variable.apply(&spec.system, value)?;
        let outcomes: Vec<TrialOutcome> = gains
            .par_iter()
            .enumerate()
            .map(|(k, g)| run_trial(spec, &cfg, g, k % spec.feasibility_stride == 0))
            .collect::<Result<_>>()?;

        for o in &outcomes {
            checked += usize::from(o.checked);
            violations += usize::from(o.checked && !o.feasible);
        }
        for (slot, &kind) in spec.allocators.iter().enumerate() {
            // sequential reduction in trial order
            let mut acc = Tally::default();
            for o in &outcomes {
                let t = o.tallies[slot];
                acc.bits += t.bits;
                acc.power += t.power;
                acc.snr_sum += t.snr_sum;
                acc.objective += t.objective;
                acc.active += t.active;
            }
            let rf = r as f64;
            rows.push(SweepRow {
                allocator: kind,
                summary: TrialSummary {
                    sweep_value: value,
                    avg_throughput: acc.bits / rf,
                    avg_transmit_power: acc.power / rf,
                    avg_reported_snr_db: mean_snr_db(acc.snr_sum, n * r),
                    avg_objective: acc.objective / rf,
                    avg_active_subcarriers: acc.active / rf,
                    num_realizations: r,
                },
            });
        }
    }

    Ok(SweepResult {
        spec: spec.clone(),
        rows,
        feasibility_checked: checked,
        feasibility_violations: violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleComparisonSpec {
    /// Power threshold and N for the comparison; the bit cap is applied to both allocators.
    pub system: SystemConfig,
    pub channel: ChannelModelConfig,
    pub num_realizations: usize,
    pub master_seed: u64,
    pub b_max: u32,
    pub force: bool,
}

impl OracleComparisonSpec {
    /// N = 8, alpha = 0.5, BER target 1e-4, P_th = 5 uW, b_max = 12, 100 realizations.
    pub fn reference() -> Self {
        let system = SystemConfig::reference()
            .with_num_subcarriers(8)
            .with_power_threshold(PowerThreshold::Absolute(5e-6));
        OracleComparisonSpec {
            channel: ChannelModelConfig {
                num_subcarriers: 8,
                ..ChannelModelConfig::reference()
            },
            system,
            num_realizations: 100,
            master_seed: 1,
            b_max: DEFAULT_ORACLE_MAX_BITS,
            force: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleTrial {
    pub trial_index: usize,
    pub trial_seed: u64,
    pub proposed_objective: f64,
    pub oracle_objective: f64,
    /// `(F_proposed - F_oracle) / |F_oracle|`; zero when both are zero.
    pub relative_gap: f64,
    pub proposed_bits: Vec<u32>,
    pub oracle_bits: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleComparison {
    pub spec: OracleComparisonSpec,
    pub trials: Vec<OracleTrial>,
    pub median_relative_gap: f64,
    pub max_relative_gap: f64,
    pub mean_relative_gap: f64,
    /// Trials where the proposed allocation matched the oracle objective.
    pub num_optimal: usize,
    /// Trials with `F_oracle > F_proposed + 1e-9`; always zero for a correct oracle.
    pub num_dominance_violations: usize,
}

/// Absolute slack for the oracle dominance check.
pub const DOMINANCE_TOL: f64 = 1e-9;

fn relative_gap(proposed: f64, oracle: f64) -> f64 {
    let diff = proposed - oracle;
    if diff == 0.0 {
        0.0
    } else if oracle == 0.0 {
        f64::INFINITY
    } else {
        diff / oracle.abs()
    }
}

/// Proposed allocator against the exhaustive optimum, realization by realization.
pub fn compare_to_oracle(spec: &OracleComparisonSpec) -> Result<OracleComparison> {
    spec.system.validate()?;
    spec.channel.validate()?;
    crate::alloc::check_oracle_size(spec.system.num_subcarriers, spec.b_max, spec.force)?;
    let cfg = spec.system.clone().with_max_bits(Some(spec.b_max));
    let gains = trial_gains(&spec.channel, spec.master_seed, spec.num_realizations);

    let trials: Vec<OracleTrial> = gains
        .par_iter()
        .enumerate()
        .map(|(k, g)| {
            let cnrs = channel::channel_to_noise(g, cfg.noise_variance)?;
            let (proposed, _) = allocate(&cnrs, &cfg);
            let oracle = exhaustive_oracle(&cnrs, &cfg, spec.b_max, spec.force)?;
            Ok(OracleTrial {
                trial_index: k,
                trial_seed: derive_trial_seed(spec.master_seed, k as u64),
                proposed_objective: proposed.objective_value,
                oracle_objective: oracle.objective_value,
                relative_gap: relative_gap(proposed.objective_value, oracle.objective_value),
                proposed_bits: proposed.bits,
                oracle_bits: oracle.bits,
            })
        })
        .collect::<Result<_>>()?;

    let mut gaps: Vec<f64> = trials.iter().map(|t| t.relative_gap).collect();
    gaps.sort_by(f64::total_cmp);
    let median = if gaps.is_empty() {
        0.0
    } else if gaps.len() % 2 == 1 {
        gaps[gaps.len() / 2]
    } else {
        0.5 * (gaps[gaps.len() / 2 - 1] + gaps[gaps.len() / 2])
    };
    let mean = gaps.iter().sum::<f64>() / gaps.len().max(1) as f64;
    Ok(OracleComparison {
        spec: spec.clone(),
        median_relative_gap: median,
        max_relative_gap: gaps.last().copied().unwrap_or(0.0),
        mean_relative_gap: mean,
        num_optimal: trials
            .iter()
            .filter(|t| t.proposed_objective == t.oracle_objective)
            .count(),
        num_dominance_violations: trials
            .iter()
            .filter(|t| t.oracle_objective > t.proposed_objective + DOMINANCE_TOL)
            .count(),
        trials,
    })
}

impl OracleComparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "trial_index,trial_seed,f_proposed,f_oracle,relative_gap,bits_proposed,bits_oracle\n",
        );
        let join = |b: &[u32]| b.iter().map(u32::to_string).collect::<Vec<_>>().join(" ");
        for t in &self.trials {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                t.trial_index,
                t.trial_seed,
                t.proposed_objective,
                t.oracle_objective,
                t.relative_gap,
                join(&t.proposed_bits),
                join(&t.oracle_bits)
            );
        }
        out
    }

    pub fn metadata_json(&self) -> String {
        let meta = serde_json::json!({
            "tool": "bitpower",
            "version": VERSION,
            "workflow": "oracle",
            "rng": RNG_NAME,
            "seed_rule": SEED_RULE,
            "spec": self.spec,
            "median_relative_gap": self.median_relative_gap,
            "mean_relative_gap": self.mean_relative_gap,
            "max_relative_gap": self.max_relative_gap,
            "num_optimal": self.num_optimal,
            "num_dominance_violations": self.num_dominance_violations,
        });
        serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub num_subcarriers: usize,
    pub avg_initial_bits: f64,
    pub avg_budget_iterations: f64,
    pub avg_delta_evaluations: f64,
}

/// Instrumented budget-loop counts for several subcarrier counts. Channels follow the
/// reference delay profile; `template` supplies alpha, BER target, noise and threshold.
pub fn operation_count_scaling(
    subcarrier_counts: &[usize],
    template: &SystemConfig,
    num_realizations: usize,
    master_seed: u64,
) -> Result<Vec<ScalingRow>> {
    subcarrier_counts
        .iter()
        .map(|&n| {
            let cfg = template.clone().with_num_subcarriers(n);
            cfg.validate()?;
            let channel = ChannelModelConfig {
                num_subcarriers: n,
                ..ChannelModelConfig::reference()
            };
            channel.validate()?;
            let gains = trial_gains(&channel, master_seed, num_realizations);
            let counts: Vec<(u64, u64, u64)> = gains
                .par_iter()
                .map(|g| {
                    let cnrs = channel::channel_to_noise(g, cfg.noise_variance)?;
                    let (_, trace) = allocate(&cnrs, &cfg);
                    Ok((
                        trace.initial.total_bits(),
                        trace.steps.len() as u64,
                        trace.delta_evaluations,
                    ))
                })
                .collect::<Result<_>>()?;
            let rf = num_realizations.max(1) as f64;
            let sum = |f: fn(&(u64, u64, u64)) -> u64| counts.iter().map(f).sum::<u64>() as f64 / rf;
            Ok(ScalingRow {
                num_subcarriers: n,
                avg_initial_bits: sum(|c| c.0),
                avg_budget_iterations: sum(|c| c.1),
                avg_delta_evaluations: sum(|c| c.2),
            })
        })
        .collect()
}
