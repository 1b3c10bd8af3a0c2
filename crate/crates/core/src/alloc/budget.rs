use crate::math::{ber_log_margin, required_power, Allocation, MIN_BITS};

use super::{AllocationTrace, RemovalStep};

/// Strips bits until the total power is at most `power_limit`.
///
/// Each pass computes, for every active subcarrier, the power released by dropping one
/// bit (`P(b) - P(b - 1)`, or all of `P(2)` when a 2-bit subcarrier is nulled), then
/// applies the largest release. Ties go to the lowest index. The input must hold every
/// active subcarrier at BER equality; the output does too.
pub fn enforce_power_budget(
    alloc: Allocation,
    cnrs: &[f64],
    ber_targets: &[f64],
    alpha: f64,
    power_limit: f64,
) -> (Allocation, AllocationTrace) {
    let initial = alloc.clone();
    let mut cur = alloc;
    let margins: Vec<f64> = ber_targets.iter().map(|&t| ber_log_margin(t)).collect();
    let mut steps = Vec::new();
    let mut evaluations = 0u64;
    let mut total = cur.total_power();

    while total > power_limit {
        let mut best: Option<(usize, f64, f64)> = None;
        for i in 0..cur.len() {
            let b = cur.bits[i];
            if b == 0 {
                continue;
            }
            evaluations += 1;
            let reduced = if b - 1 < MIN_BITS {
                0.0
            } else {
                required_power((b - 1) as f64, cnrs[i], margins[i])
            };
            let delta = cur.powers[i] - reduced;
            if best.is_none_or(|(_, d, _)| delta > d) {
                best = Some((i, delta, reduced));
            }
        }
        let Some((i, delta, reduced)) = best else {
            break;
        };
        let before = cur.bits[i];
        let after = if before - 1 < MIN_BITS { 0 } else { before - 1 };
        cur.bits[i] = after;
        cur.powers[i] = reduced;
        steps.push(RemovalStep {
            subcarrier_index: i,
            bits_before: before,
            bits_after: after,
            power_released: delta,
        });
        total = cur.total_power();
    }

    cur.refresh_objective(alpha);
    let trace = AllocationTrace {
        initial,
        steps,
        final_allocation: cur.clone(),
        power_limit: Some(power_limit),
        delta_evaluations: evaluations,
    };
    (cur, trace)
}
