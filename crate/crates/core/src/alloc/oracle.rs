//! Exact discrete optimum by depth-first enumeration with branch-and-bound.
//!
//! The search visits bit vectors in lexicographic order over `{0, 2, 3, ..., b_max}^N`
//! and only replaces the incumbent on a strictly smaller objective, so ties resolve to
//! the lexicographically smallest vector. Pruning only discards subtrees that cannot
//! hold a strictly better feasible vector, so the result equals plain enumeration.

use crate::error::{Error, Result};
use crate::math::{
    ber_log_margin, required_power, Allocation, PowerThreshold, SystemConfig, MIN_BITS,
};

use super::allocate;

/// Refuse searches spanning more than `2^ORACLE_LOG2_LIMIT` vectors unless forced.
pub const ORACLE_LOG2_LIMIT: u32 = 40;

/// Size guard: `N * log2(b_max + 1)` must not exceed [`ORACLE_LOG2_LIMIT`].
pub fn check_oracle_size(num_subcarriers: usize, b_max: u32, force: bool) -> Result<()> {
    let log2_size = num_subcarriers as f64 * (b_max as f64 + 1.0).log2();
    if !force && log2_size > ORACLE_LOG2_LIMIT as f64 {
        return Err(Error::OracleTooLarge {
            num_subcarriers,
            b_max,
            log2_size,
            limit: ORACLE_LOG2_LIMIT,
        });
    }
    Ok(())
}

/// Minimizes the weighted objective over every bit vector with entries in
/// `{0} ∪ {2..=b_max}`, each active subcarrier at its minimum BER-feasible power,
/// subject to the configured total power limit. A relative limit resolves against the
/// proposed allocator's rounded unconstrained total under the same cap.
pub fn exhaustive_oracle(
    cnrs: &[f64],
    cfg: &SystemConfig,
    b_max: u32,
    force: bool,
) -> Result<Allocation> {
    let n = cnrs.len();
    assert_eq!(n, cfg.ber_targets.len());
    if b_max < MIN_BITS {
        return Err(Error::config("b_max", format!("{b_max} is below the 2-bit floor")));
    }
    check_oracle_size(n, b_max, force)?;

    let limit = if cfg.power_threshold.is_bounded() {
        let unconstrained = cfg
            .clone()
            .with_max_bits(Some(b_max))
            .with_power_threshold(PowerThreshold::Unbounded);
        let (_, trace) = allocate(cnrs, &unconstrained);
        cfg.power_threshold.resolve(trace.initial.total_power())
    } else {
        None
    }
    .unwrap_or(f64::INFINITY);

    let alpha = cfg.alpha;
    // levels[i] = [(bits, power, cost)] in ascending bit order, starting with the null level
    let levels: Vec<Vec<(u32, f64, f64)>> = cnrs
        .iter()
        .zip(&cfg.ber_targets)
        .map(|(&c, &t)| {
            let margin = ber_log_margin(t);
            let mut v = vec![(0u32, 0.0, 0.0)];
            if c > 0.0 {
                for b in MIN_BITS..=b_max {
                    let p = required_power(b as f64, c, margin);
                    v.push((b, p, alpha * p - (1.0 - alpha) * b as f64));
                }
            }
            v
        })
        .collect();

    let mut search = Search {
        levels: &levels,
        alpha,
        limit,
        choice: vec![0; n],
        best_bits: vec![0; n],
        best_value: 0.0,
    };
    // the all-null incumbent (value 0) is always feasible and lexicographically first
    search.descend(0, 0.0, 0);

    let bits = search.best_bits.clone();
    let powers = bits
        .iter()
        .zip(cnrs.iter().zip(&cfg.ber_targets))
        .map(|(&b, (&c, &t))| {
            if b == 0 {
                0.0
            } else {
                required_power(b as f64, c, ber_log_margin(t))
            }
        })
        .collect();
    Ok(Allocation::new(bits, powers, alpha))
}

struct Search<'a> {
    levels: &'a [Vec<(u32, f64, f64)>],
    alpha: f64,
    limit: f64,
    choice: Vec<u32>,
    best_bits: Vec<u32>,
    best_value: f64,
}

impl Search<'_> {
    /// Cheapest cost the subcarriers from `depth` on could reach if each had the whole
    /// remaining budget to itself.
    fn bound(&self, depth: usize, budget: f64) -> f64 {
        self.levels[depth..]
            .iter()
            .map(|lv| {
                lv.iter()
                    .take_while(|l| l.1 <= budget)
                    .map(|l| l.2)
                    .fold(0.0, f64::min)
            })
            .sum()
    }

    fn descend(&mut self, depth: usize, power: f64, bits: u64) {
        if depth == self.levels.len() {
            let value = self.alpha * power - (1.0 - self.alpha) * bits as f64;
            if value < self.best_value {
                self.best_value = value;
                self.best_bits.copy_from_slice(&self.choice);
            }
            return;
        }
        let partial = self.alpha * power - (1.0 - self.alpha) * bits as f64;
        let slack = 1e-12 * (1.0 + self.best_value.abs());
        if partial + self.bound(depth, self.limit - power) > self.best_value + slack {
            return;
        }
        for k in 0..self.levels[depth].len() {
            let (b, p, _) = self.levels[depth][k];
            let next = power + p;
            if next > self.limit {
                // powers grow with bits, so every later level is infeasible too
                break;
            }
            self.choice[depth] = b;
            self.descend(depth + 1, next, bits + u64::from(b));
        }
        self.choice[depth] = 0;
    }
}
