use crate::math::{ber_unchecked, Allocation, SystemConfig, MIN_BITS};

/// Incremental bit loading under uniform power.
///
/// Every subcarrier is offered `total_power / N` watts. Bits are granted one at a time
/// (a nulled subcarrier starts at 2) to the candidate whose grant raises the mean BER of
/// the active subcarriers the least, as long as that mean stays within the mean of their
/// BER targets. Loading stops when no grant is feasible. Only active subcarriers carry
/// power in the result.
pub fn uniform_power_baseline(cnrs: &[f64], cfg: &SystemConfig, total_power: f64) -> Allocation {
    let n = cnrs.len();
    assert_eq!(n, cfg.ber_targets.len());
    let per_carrier = total_power / n as f64;
    if !(per_carrier > 0.0) {
        return Allocation::null(n);
    }

    let cap = cfg.max_bits.unwrap_or(u32::MAX);
    let mut bits = vec![0u32; n];
    let mut ber = vec![0.0f64; n];
    let next_bits = |b: u32| if b == 0 { MIN_BITS } else { b + 1 };
    let mut next_ber: Vec<f64> = cnrs
        .iter()
        .map(|&c| ber_unchecked(per_carrier, MIN_BITS as f64, c))
        .collect();

    let mut active = 0usize;
    let mut ber_sum = 0.0;
    let mut target_sum = 0.0;
    loop {
        let mean = if active == 0 { 0.0 } else { ber_sum / active as f64 };
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if next_bits(bits[i]) > cap {
                continue;
            }
            let (count, sum, limit) = if bits[i] == 0 {
                (active + 1, ber_sum + next_ber[i], target_sum + cfg.ber_targets[i])
            } else {
                (active, ber_sum - ber[i] + next_ber[i], target_sum)
            };
            let new_mean = sum / count as f64;
            if new_mean > limit / count as f64 {
                continue;
            }
            let increase = new_mean - mean;
            if best.is_none_or(|(_, inc)| increase < inc) {
                best = Some((i, increase));
            }
        }
        let Some((i, _)) = best else {
            break;
        };
        if bits[i] == 0 {
            active += 1;
            ber_sum += next_ber[i];
            target_sum += cfg.ber_targets[i];
        } else {
            ber_sum += next_ber[i] - ber[i];
        }
        bits[i] = next_bits(bits[i]);
        ber[i] = next_ber[i];
        next_ber[i] = ber_unchecked(per_carrier, next_bits(bits[i]) as f64, cnrs[i]);
    }

    let powers = bits
        .iter()
        .map(|&b| if b > 0 { per_carrier } else { 0.0 })
        .collect();
    Allocation::new(bits, powers, cfg.alpha)
}
