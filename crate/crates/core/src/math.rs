//! Scalar link model: the exponential M-QAM BER approximation, its inversion
//! for power, the weighted objective, constraint residuals and the per-subcarrier
//! Lagrange multiplier.
//!
//! All powers are in watts and all channel-to-noise ratios in 1/W.

use serde::Serialize;

use crate::error::{Error, Result};

/// Leading constant of the BER approximation.
pub const BER_SCALE: f64 = 0.2;
/// SNR scaling inside the exponent of the BER approximation.
pub const BER_EXPONENT: f64 = 1.6;
/// Smallest loading the model covers (4-QAM).
pub const MIN_BITS: u32 = 2;

/// Absolute tolerance on per-subcarrier BER residuals.
pub const BER_RESIDUAL_TOL: f64 = 1e-12;
/// Tolerance on the total-power residual, scaled by `N * P_th`.
pub const POWER_RESIDUAL_REL_TOL: f64 = 1e-15;

/// Total transmit power limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum PowerThreshold {
    Unbounded,
    /// Fixed limit in watts.
    Absolute(f64),
    /// Fraction of the total power the unconstrained allocation would use,
    /// resolved separately for every channel realization.
    Relative(f64),
}

impl PowerThreshold {
    /// Resolves the limit in watts given the unconstrained total power.
    pub fn resolve(&self, unconstrained_total: f64) -> Option<f64> {
        match *self {
            PowerThreshold::Unbounded => None,
            PowerThreshold::Absolute(w) => Some(w),
            PowerThreshold::Relative(f) => Some(f * unconstrained_total),
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, PowerThreshold::Unbounded)
    }
}

/// Link-level parameters shared by every allocator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemConfig {
    pub num_subcarriers: usize,
    /// Weight on total power; `1 - alpha` weighs total bits.
    pub alpha: f64,
    /// Per-subcarrier BER targets, one entry per subcarrier.
    pub ber_targets: Vec<f64>,
    /// AWGN variance in watts.
    pub noise_variance: f64,
    pub power_threshold: PowerThreshold,
    /// Optional cap on bits per subcarrier. `None` leaves loading uncapped.
    pub max_bits: Option<u32>,
}

impl SystemConfig {
    /// Builds a validated configuration with a uniform BER target.
    pub fn new(
        num_subcarriers: usize,
        alpha: f64,
        ber_target: f64,
        noise_variance: f64,
        power_threshold: PowerThreshold,
    ) -> Result<Self> {
        let cfg = SystemConfig {
            num_subcarriers,
            alpha,
            ber_targets: vec![ber_target; num_subcarriers],
            noise_variance,
            power_threshold,
            max_bits: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 128 subcarriers, alpha = 0.5, BER target 1e-4, noise variance 1e-9 W, no power limit.
    pub fn reference() -> Self {
        SystemConfig {
            num_subcarriers: 128,
            alpha: 0.5,
            ber_targets: vec![1e-4; 128],
            noise_variance: 1e-9,
            power_threshold: PowerThreshold::Unbounded,
            max_bits: None,
        }
    }

    pub fn with_max_bits(mut self, max_bits: Option<u32>) -> Self {
        self.max_bits = max_bits;
        self
    }

    pub fn with_power_threshold(mut self, threshold: PowerThreshold) -> Self {
        self.power_threshold = threshold;
        self
    }

    /// Replaces the number of subcarriers, broadcasting the first BER target.
    pub fn with_num_subcarriers(mut self, n: usize) -> Self {
        let t = self.ber_targets.first().copied().unwrap_or(1e-4);
        self.num_subcarriers = n;
        self.ber_targets = vec![t; n];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_subcarriers == 0 {
            return Err(Error::config("num_subcarriers", "must be a positive integer"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(
                "alpha",
                format!("{} is outside the open interval (0, 1)", self.alpha),
            ));
        }
        if self.ber_targets.len() != self.num_subcarriers {
            return Err(Error::config(
                "ber_target",
                format!(
                    "{} targets given for {} subcarriers",
                    self.ber_targets.len(),
                    self.num_subcarriers
                ),
            ));
        }
        if let Some(t) = self.ber_targets.iter().find(|t| !(**t > 0.0 && **t < BER_SCALE)) {
            return Err(Error::config(
                "ber_target",
                format!("{t} is outside the open interval (0, 0.2)"),
            ));
        }
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::config(
                "noise_variance",
                format!("{} must be a positive number of watts", self.noise_variance),
            ));
        }
        match self.power_threshold {
            PowerThreshold::Absolute(w) if !(w > 0.0) => {
                return Err(Error::config(
                    "power_threshold",
                    format!("{w} must be a positive number of watts"),
                ));
            }
            PowerThreshold::Relative(f) if !(f > 0.0 && f.is_finite()) => {
                return Err(Error::config(
                    "power_threshold_frac",
                    format!("{f} must be a positive fraction"),
                ));
            }
            _ => {}
        }
        if let Some(m) = self.max_bits {
            if m < MIN_BITS {
                return Err(Error::config("max_bits", format!("{m} is below the 2-bit floor")));
            }
        }
        Ok(())
    }
}

/// Integer bit loading with the power needed to hold each subcarrier at its BER target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Allocation {
    pub bits: Vec<u32>,
    pub powers: Vec<f64>,
    pub objective_value: f64,
}

impl Allocation {
    pub fn new(bits: Vec<u32>, powers: Vec<f64>, alpha: f64) -> Self {
        debug_assert_eq!(bits.len(), powers.len());
        let objective_value = weighted_objective(&bits, &powers, alpha);
        Allocation {
            bits,
            powers,
            objective_value,
        }
    }

    /// Every subcarrier nulled.
    pub fn null(n: usize) -> Self {
        Allocation {
            bits: vec![0; n],
            powers: vec![0.0; n],
            objective_value: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }

    pub fn total_bits(&self) -> u64 {
        self.bits.iter().map(|&b| u64::from(b)).sum()
    }

    pub fn num_active(&self) -> usize {
        self.bits.iter().filter(|&&b| b > 0).count()
    }

    pub(crate) fn refresh_objective(&mut self, alpha: f64) {
        self.objective_value = weighted_objective(&self.bits, &self.powers, alpha);
    }
}

/// Real-valued loading from the closed-form stationary point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuousAllocation {
    pub bits: Vec<f64>,
    pub powers: Vec<f64>,
    pub active: Vec<bool>,
}

/// `ln(0.2 / target)`, written as `-ln(5 * target)`. Positive for targets below 0.2.
#[inline]
pub fn ber_log_margin(ber_target: f64) -> f64 {
    -(5.0 * ber_target).ln()
}

/// Approximate BER of a subcarrier carrying `bits` with `power` watts.
pub fn ber_estimate(power: f64, bits: f64, cnr: f64) -> Result<f64> {
    if !(bits >= MIN_BITS as f64) {
        return Err(Error::domain(format!(
            "BER model needs at least {MIN_BITS} bits, got {bits}"
        )));
    }
    if !(cnr > 0.0) {
        return Err(Error::domain(format!("cnr must be positive, got {cnr}")));
    }
    if !(power >= 0.0) {
        return Err(Error::domain(format!("power must be nonnegative, got {power}")));
    }
    Ok(ber_unchecked(power, bits, cnr))
}

#[inline]
pub(crate) fn ber_unchecked(power: f64, bits: f64, cnr: f64) -> f64 {
    BER_SCALE * (-BER_EXPONENT * power * cnr / (bits.exp2() - 1.0)).exp()
}

/// Minimum power that holds `bits` at `ber_target`, i.e. the BER model solved at equality.
pub fn power_for_ber(bits: u32, cnr: f64, ber_target: f64) -> Result<f64> {
    if bits < MIN_BITS {
        return Err(Error::domain(format!(
            "BER model needs at least {MIN_BITS} bits, got {bits}"
        )));
    }
    power_for_ber_real(bits as f64, cnr, ber_target)
}

/// Real-bit variant of [`power_for_ber`], used along the continuous BER-equality curve.
pub fn power_for_ber_real(bits: f64, cnr: f64, ber_target: f64) -> Result<f64> {
    if !(bits >= MIN_BITS as f64) {
        return Err(Error::domain(format!(
            "BER model needs at least {MIN_BITS} bits, got {bits}"
        )));
    }
    if !(cnr > 0.0) {
        return Err(Error::domain(format!("cnr must be positive, got {cnr}")));
    }
    if !(ber_target > 0.0 && ber_target < BER_SCALE) {
        return Err(Error::domain(format!(
            "BER target must lie in (0, 0.2), got {ber_target}"
        )));
    }
    Ok(required_power(bits, cnr, ber_log_margin(ber_target)))
}

/// `(2^bits - 1) * margin / (1.6 * cnr)` without argument checks.
#[inline]
pub(crate) fn required_power(bits: f64, cnr: f64, log_margin: f64) -> f64 {
    (bits.exp2() - 1.0) * log_margin / (BER_EXPONENT * cnr)
}

/// `alpha * sum(P) - (1 - alpha) * sum(b)`.
pub fn objective(alloc: &Allocation, alpha: f64) -> f64 {
    weighted_objective(&alloc.bits, &alloc.powers, alpha)
}

fn weighted_objective(bits: &[u32], powers: &[f64], alpha: f64) -> f64 {
    let p: f64 = powers.iter().sum();
    let b: f64 = bits.iter().map(|&b| b as f64).sum();
    alpha * p - (1.0 - alpha) * b
}

/// The `N + 1` feasibility residuals `g_j <= 0`: one BER residual per subcarrier,
/// then the total-power residual. An unbounded limit yields `f64::MIN` in the last slot.
pub fn constraint_residuals(
    alloc: &Allocation,
    cnrs: &[f64],
    ber_targets: &[f64],
    power_limit: Option<f64>,
) -> Vec<f64> {
    let mut out: Vec<f64> = alloc
        .bits
        .iter()
        .zip(&alloc.powers)
        .zip(cnrs.iter().zip(ber_targets))
        .map(|((&b, &p), (&c, &t))| {
            if b == 0 {
                -t
            } else {
                ber_unchecked(p, b as f64, c) - t
            }
        })
        .collect();
    out.push(match power_limit {
        Some(limit) => alloc.total_power() - limit,
        None => f64::MIN,
    });
    out
}

/// Checks residuals from [`constraint_residuals`] against the feasibility tolerances.
pub fn residuals_feasible(residuals: &[f64], power_limit: Option<f64>) -> bool {
    let Some((power, ber)) = residuals.split_last() else {
        return true;
    };
    let ber_ok = ber.iter().all(|&r| r <= BER_RESIDUAL_TOL);
    let power_tol = power_limit.map_or(0.0, |p| POWER_RESIDUAL_REL_TOL * ber.len() as f64 * p);
    ber_ok && *power <= power_tol
}

/// BER-constraint multiplier at a stationary point:
/// `alpha / (0.2 * 1.6 C / (2^b - 1) * exp(-1.6 C P / (2^b - 1)))`.
pub fn kkt_multiplier(power: f64, bits: f64, cnr: f64, alpha: f64) -> Result<f64> {
    if !(cnr > 0.0) {
        return Err(Error::domain(format!("cnr must be positive, got {cnr}")));
    }
    if !(bits >= MIN_BITS as f64) {
        return Err(Error::domain(format!(
            "BER model needs at least {MIN_BITS} bits, got {bits}"
        )));
    }
    if !(power >= 0.0) {
        return Err(Error::domain(format!("power must be nonnegative, got {power}")));
    }
    let levels = bits.exp2() - 1.0;
    let slope = BER_SCALE * BER_EXPONENT * cnr / levels;
    Ok(alpha / slope * (BER_EXPONENT * cnr * power / levels).exp())
}

/// Linear power ratio to decibels.
pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
