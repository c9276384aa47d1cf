//! Tail-index estimation with the Hill estimator.
//!
//! ```text
//! ξ̂ = (1/k) Σ_{i=1..k} ln( X_(i) / X_(k+1) ),   X_(1) ≥ X_(2) ≥ … ≥ X_(n)
//! ```
//!
//! [`estimate_tail_index`] picks one side of the data, applies Hill with
//! `k = ⌈m^(2/3)⌉` by default and clamps the result to
//! [`XI_MIN`]..=[`XI_MAX`] so the estimate can always parameterize a
//! signed-power output transform.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const XI_MIN: f64 = 0.05;
pub const XI_MAX: f64 = 10.0;
/// Fewest retained samples accepted by [`estimate_tail_index`].
pub const MIN_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailSide {
    /// Positive values.
    Positive,
    /// Negated negative values.
    Negative,
    /// Absolute values, zeros dropped.
    Magnitude,
}

impl TailSide {
    pub const ALL: [TailSide; 3] = [TailSide::Positive, TailSide::Negative, TailSide::Magnitude];

    /// The strictly positive values this side retains.
    pub fn filter(self, samples: &[f64]) -> Vec<f64> {
        match self {
            TailSide::Positive => samples.iter().copied().filter(|&x| x > 0.0).collect(),
            TailSide::Negative => samples.iter().filter(|&&x| x < 0.0).map(|&x| -x).collect(),
            TailSide::Magnitude => samples.iter().filter(|&&x| x != 0.0).map(|&x| x.abs()).collect(),
        }
    }
}

impl fmt::Display for TailSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TailSide::Positive => "positive",
            TailSide::Negative => "negative",
            TailSide::Magnitude => "magnitude",
        })
    }
}

impl FromStr for TailSide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pos" | "positive" => Ok(TailSide::Positive),
            "neg" | "negative" => Ok(TailSide::Negative),
            "mag" | "magnitude" | "abs" => Ok(TailSide::Magnitude),
            other => Err(Error::argument(format!("unknown tail side '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    /// Clamped estimate.
    pub xi_hat: f64,
    /// Hill estimate before clamping.
    pub xi_raw: f64,
    pub k_used: usize,
    /// Number of samples retained on this side.
    pub n: usize,
    pub side: TailSide,
}

/// Hill estimator over the `k` largest of `samples` (all must be positive).
pub fn hill_estimator(samples: &[f64], k: usize) -> Result<f64> {
    let n = samples.len();
    if k == 0 || k >= n {
        return Err(Error::argument(format!("Hill needs 1 <= k < n, got k={k}, n={n}")));
    }
    if let Some(&bad) = samples.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::domain(format!("Hill estimator needs positive finite samples, got {bad}")));
    }
    let mut sorted = samples.to_vec();
    // descending; only the top k+1 order statistics matter
    sorted.select_nth_unstable_by(k, |a, b| b.total_cmp(a));
    let threshold = sorted[k];
    let sum: f64 = sorted[..k].iter().map(|&x| (x / threshold).ln()).sum();
    Ok(sum / k as f64)
}

/// `⌈m^(2/3)⌉`, capped at `m - 1`.
pub fn default_k(m: usize) -> usize {
    let m2 = (m as u128) * (m as u128);
    let mut k = (m as f64).powf(2.0 / 3.0).ceil() as u128;
    while k > 0 && (k - 1).pow(3) >= m2 {
        k -= 1;
    }
    while k.pow(3) < m2 {
        k += 1;
    }
    (k as usize).min(m.saturating_sub(1)).max(1)
}

/// Tail index of one side of `samples`.
pub fn estimate_tail_index(samples: &[f64], side: TailSide, k: Option<usize>) -> Result<TailEstimate> {
    let retained = side.filter(samples);
    let m = retained.len();
    if m < MIN_SAMPLES {
        return Err(Error::InsufficientData { needed: MIN_SAMPLES, got: m });
    }
    let k = k.unwrap_or_else(|| default_k(m));
    let xi_raw = hill_estimator(&retained, k)?;
    Ok(TailEstimate { xi_hat: xi_raw.clamp(XI_MIN, XI_MAX), xi_raw, k_used: k, n: m, side })
}
