//! Joint bit and power allocation.
//!
//! The proposed allocator runs in three stages:
//!
//! 1. [`closed_form_continuous`] gives the unconstrained stationary point of
//!    `alpha * P_i - (1 - alpha) * b_i` along the BER-equality curve, nulling
//!    subcarriers whose channel-to-noise ratio cannot support 4-QAM.
//! 2. [`discretize`] rounds the loading to integers and recomputes the power that
//!    holds each subcarrier exactly at its BER target.
//! 3. [`enforce_power_budget`] repeatedly strips one bit from the subcarrier that
//!    releases the most power until the total fits under the limit.
//!
//! [`uniform_power_baseline`] and [`exhaustive_oracle`] are the comparison points.

mod baseline;
mod budget;
mod oracle;

use std::f64::consts::LN_2;
use std::fmt::Write as _;

use serde::Serialize;

pub use baseline::uniform_power_baseline;
pub use budget::enforce_power_budget;
pub use oracle::{check_oracle_size, exhaustive_oracle, ORACLE_LOG2_LIMIT};

use crate::math::{
    ber_log_margin, required_power, Allocation, ContinuousAllocation, SystemConfig,
    BER_EXPONENT, MIN_BITS,
};

/// Default bit cap for the exhaustive oracle.
pub const DEFAULT_ORACLE_MAX_BITS: u32 = 12;

/// One pass of the budget loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RemovalStep {
    pub subcarrier_index: usize,
    pub bits_before: u32,
    /// `bits_before - 1`, or 0 when a 2-bit subcarrier is nulled.
    pub bits_after: u32,
    /// Power released by the step, in watts.
    pub power_released: f64,
}

/// Audit trail of one call to [`allocate`] or [`enforce_power_budget`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationTrace {
    /// Rounded allocation before any budget enforcement.
    pub initial: Allocation,
    pub steps: Vec<RemovalStep>,
    pub final_allocation: Allocation,
    /// Resolved power limit in watts, if any.
    pub power_limit: Option<f64>,
    /// Number of per-subcarrier power-release evaluations made by the budget loop.
    pub delta_evaluations: u64,
}

/// `(1 - alpha) / (alpha * ln 2)`: the asymptotic per-subcarrier power of the stationary point.
#[inline]
pub fn power_scale(alpha: f64) -> f64 {
    (1.0 - alpha) / (alpha * LN_2)
}

/// Smallest channel-to-noise ratio at which the stationary point carries at least 2 bits.
pub fn activation_threshold(alpha: f64, ber_target: f64) -> f64 {
    (4.0 / BER_EXPONENT) * (alpha * LN_2 / (1.0 - alpha)) * ber_log_margin(ber_target)
}

/// Unclamped stationary loading `log2(scale * 1.6 C / -ln(5 t))`. May be below 2 or
/// non-finite for inactive subcarriers.
pub fn continuous_bits(cnr: f64, alpha: f64, ber_target: f64) -> f64 {
    (power_scale(alpha) * BER_EXPONENT * cnr / ber_log_margin(ber_target)).log2()
}

/// Stationary power matching `bits` on the BER-equality curve.
pub fn continuous_power(bits: f64, alpha: f64) -> f64 {
    power_scale(alpha) * (1.0 - (-bits).exp2())
}

/// Unconstrained optimum of the weighted objective for each subcarrier.
pub fn closed_form_continuous(
    cnrs: &[f64],
    alpha: f64,
    ber_targets: &[f64],
) -> ContinuousAllocation {
    assert_eq!(cnrs.len(), ber_targets.len());
    let n = cnrs.len();
    let mut out = ContinuousAllocation {
        bits: vec![0.0; n],
        powers: vec![0.0; n],
        active: vec![false; n],
    };
    for (i, (&c, &t)) in cnrs.iter().zip(ber_targets).enumerate() {
        if c >= activation_threshold(alpha, t) {
            // the threshold and the log can disagree by an ulp right at the boundary
            let b = continuous_bits(c, alpha, t).max(MIN_BITS as f64);
            out.bits[i] = b;
            out.powers[i] = continuous_power(b, alpha);
            out.active[i] = true;
        }
    }
    out
}

/// Rounds active loadings half away from zero and recomputes each power at BER equality.
pub fn discretize(
    cont: &ContinuousAllocation,
    cnrs: &[f64],
    ber_targets: &[f64],
    alpha: f64,
    max_bits: Option<u32>,
) -> Allocation {
    let n = cnrs.len();
    let mut bits = vec![0u32; n];
    let mut powers = vec![0.0; n];
    for i in 0..n {
        if !cont.active[i] {
            continue;
        }
        let rounded = cont.bits[i].round();
        assert!(rounded >= MIN_BITS as f64, "active subcarrier {i} rounded below 2 bits");
        let mut b = if rounded >= u32::MAX as f64 {
            u32::MAX
        } else {
            rounded as u32
        };
        if let Some(cap) = max_bits {
            b = b.min(cap);
        }
        bits[i] = b;
        powers[i] = required_power(b as f64, cnrs[i], ber_log_margin(ber_targets[i]));
    }
    Allocation::new(bits, powers, alpha)
}

/// Full proposed pipeline. A relative power threshold is resolved against the total
/// power of the rounded unconstrained allocation.
pub fn allocate(cnrs: &[f64], cfg: &SystemConfig) -> (Allocation, AllocationTrace) {
    assert_eq!(cnrs.len(), cfg.num_subcarriers, "cnr count != num_subcarriers");
    let cont = closed_form_continuous(cnrs, cfg.alpha, &cfg.ber_targets);
    let initial = discretize(&cont, cnrs, &cfg.ber_targets, cfg.alpha, cfg.max_bits);
    match cfg.power_threshold.resolve(initial.total_power()) {
        Some(limit) => enforce_power_budget(initial, cnrs, &cfg.ber_targets, cfg.alpha, limit),
        None => {
            let trace = AllocationTrace {
                initial: initial.clone(),
                steps: Vec::new(),
                final_allocation: initial.clone(),
                power_limit: None,
                delta_evaluations: 0,
            };
            (initial, trace)
        }
    }
}

/// Per-subcarrier table: `index,cnr,bits_unconstrained,power_unconstrained_W,bits_final,power_final_W`.
pub fn format_allocation_table(cnrs: &[f64], trace: &AllocationTrace) -> String {
    let mut out =
        String::from("index,cnr,bits_unconstrained,power_unconstrained_W,bits_final,power_final_W\n");
    let (a, b) = (&trace.initial, &trace.final_allocation);
    for i in 0..cnrs.len() {
        let _ = writeln!(
            out,
            "{i},{:e},{},{:e},{},{:e}",
            cnrs[i], a.bits[i], a.powers[i], b.bits[i], b.powers[i]
        );
    }
    out
}
