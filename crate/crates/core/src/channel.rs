//! Frequency-selective Rayleigh fading with an exponential power delay profile.
//!
//! Tap `n` of the impulse response is circularly-symmetric complex Gaussian with
//! `E|h(n)|^2 = sigma_h^2 * exp(-n * decay)`, where `sigma_h^2` makes the taps sum to
//! unit energy so every subcarrier has `E|H_i|^2 = 1`. Normalization holds in
//! expectation only; individual realizations are not rescaled.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};

/// Name of the generator behind every random stream, recorded in output metadata.
pub const RNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.9)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelModelConfig {
    pub num_taps: usize,
    pub decay_factor: f64,
    pub num_subcarriers: usize,
}

impl ChannelModelConfig {
    /// Five taps, decay 1/5, 128 subcarriers.
    pub fn reference() -> Self {
        ChannelModelConfig {
            num_taps: 5,
            decay_factor: 0.2,
            num_subcarriers: 128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_taps == 0 {
            return Err(Error::config("num_taps", "must be a positive integer"));
        }
        if self.num_subcarriers == 0 {
            return Err(Error::config("num_subcarriers", "must be a positive integer"));
        }
        if self.num_taps > self.num_subcarriers {
            return Err(Error::config(
                "num_taps",
                format!(
                    "{} taps exceed {} subcarriers",
                    self.num_taps, self.num_subcarriers
                ),
            ));
        }
        if !(self.decay_factor >= 0.0 && self.decay_factor.is_finite()) {
            return Err(Error::config(
                "decay_factor",
                format!("{} must be a nonnegative number", self.decay_factor),
            ));
        }
        Ok(())
    }

    /// `1 / sum_n exp(-n * decay)`.
    pub fn normalization(&self) -> f64 {
        let total: f64 = (0..self.num_taps)
            .map(|n| (-(n as f64) * self.decay_factor).exp())
            .sum();
        1.0 / total
    }

    /// Expected energy of each tap.
    pub fn tap_variances(&self) -> Vec<f64> {
        let norm = self.normalization();
        (0..self.num_taps)
            .map(|n| norm * (-(n as f64) * self.decay_factor).exp())
            .collect()
    }
}

/// Per-subcarrier gains and the channel-to-noise ratios derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub gains: Vec<Complex64>,
    pub cnrs: Vec<f64>,
}

impl ChannelRealization {
    pub fn from_gains(gains: Vec<Complex64>, noise_variance: f64) -> Result<Self> {
        let cnrs = channel_to_noise(&gains, noise_variance)?;
        Ok(ChannelRealization { gains, cnrs })
    }

    /// Draws one realization from `rng`.
    pub fn generate<R: Rng + ?Sized>(
        cfg: &ChannelModelConfig,
        noise_variance: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let taps = generate_impulse_response(cfg, rng);
        Self::from_gains(frequency_response(&taps, cfg.num_subcarriers), noise_variance)
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }
}

/// Seeded stream for one channel trial.
pub fn trial_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws `num_taps` independent complex Gaussian taps following the delay profile.
pub fn generate_impulse_response<R: Rng + ?Sized>(
    cfg: &ChannelModelConfig,
    rng: &mut R,
) -> Vec<Complex64> {
    cfg.tap_variances()
        .into_iter()
        .map(|var| {
            let sd = (var / 2.0).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(sd * re, sd * im)
        })
        .collect()
}

/// `H_i = sum_n h_n exp(-j 2 pi n i / N)`, evaluated directly.
pub fn frequency_response(taps: &[Complex64], num_subcarriers: usize) -> Vec<Complex64> {
    assert!(
        taps.len() <= num_subcarriers,
        "impulse response longer than the DFT size"
    );
    let n = num_subcarriers as f64;
    (0..num_subcarriers)
        .map(|i| {
            taps.iter()
                .enumerate()
                .map(|(k, h)| {
                    // reduce k*i mod N first so the phase stays small and exact at quarter turns
                    let idx = (k * i) % num_subcarriers;
                    h * Complex64::from_polar(1.0, -2.0 * PI * idx as f64 / n)
                })
                .sum()
        })
        .collect()
}

/// `|H_i|^2 / noise_variance` for every subcarrier.
pub fn channel_to_noise(gains: &[Complex64], noise_variance: f64) -> Result<Vec<f64>> {
    if !(noise_variance > 0.0) {
        return Err(Error::domain(format!(
            "noise variance must be positive, got {noise_variance}"
        )));
    }
    Ok(gains.iter().map(|h| h.norm_sqr() / noise_variance).collect())
}

/// Writes gains as `index,re,im` rows under a header line.
pub fn format_gain_table(gains: &[Complex64]) -> String {
    let mut out = String::from("index,re,im\n");
    for (i, h) in gains.iter().enumerate() {
        let _ = writeln!(out, "{i},{:e},{:e}", h.re, h.im);
    }
    out
}

/// Parses an `index,re,im` table. Blank lines, `#` comments and a header row are
/// skipped; commas and whitespace both separate columns. Rows must cover
/// indices `0..N` exactly once.
pub fn parse_gain_table(text: &str, path: &Path) -> Result<Vec<Complex64>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {msg}"),
    };
    let mut rows: Vec<(usize, Complex64)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if rows.is_empty() && cols.first().is_some_and(|c| c.parse::<usize>().is_err()) {
            continue; // header
        }
        if cols.len() != 3 {
            return Err(err(lineno + 1, format!("expected 3 columns, found {}", cols.len())));
        }
        let index: usize = cols[0]
            .parse()
            .map_err(|_| err(lineno + 1, format!("bad index `{}`", cols[0])))?;
        let re: f64 = cols[1]
            .parse()
            .map_err(|_| err(lineno + 1, format!("bad real part `{}`", cols[1])))?;
        let im: f64 = cols[2]
            .parse()
            .map_err(|_| err(lineno + 1, format!("bad imaginary part `{}`", cols[2])))?;
        rows.push((index, Complex64::new(re, im)));
    }
    if rows.is_empty() {
        return Err(err(0, "no channel rows".into()));
    }
    rows.sort_by_key(|r| r.0);
    for (expect, (idx, _)) in rows.iter().enumerate() {
        if *idx != expect {
            return Err(err(0, format!("subcarrier indices must run 0..{}", rows.len())));
        }
    }
    Ok(rows.into_iter().map(|r| r.1).collect())
}

pub fn read_gain_table(path: &Path) -> Result<Vec<Complex64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_gain_table(&text, path)
}
