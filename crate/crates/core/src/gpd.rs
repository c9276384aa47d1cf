//! Generalized Pareto distribution: survival function, inverse-transform
//! sampling, and the empirical conditional excess distribution.
//!
//! ```text
//! S(z; ξ, σ) = (1 + ξ z / σ)^(-1/ξ)   ξ ≠ 0
//!            = exp(-z / σ)            ξ = 0
//! ```
//!
//! Both branches are evaluated through `ln_1p` / `exp_m1` so that the
//! survival function and the quantile stay accurate right up to the branch
//! threshold, where the naive `(u^-ξ - 1) / ξ` cancels catastrophically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SampleMatrix;
use crate::rng::{self, Rng};

/// `|ξ|` below this uses the exponential branch.
pub const BRANCH_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdParams {
    /// Tail index ξ.
    pub xi: f64,
    /// Scale σ > 0.
    pub sigma: f64,
}

impl GpdParams {
    pub fn new(xi: f64, sigma: f64) -> Result<Self> {
        if !xi.is_finite() {
            return Err(Error::domain(format!("tail index must be finite, got {xi}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::domain(format!("scale must be positive, got {sigma}")));
        }
        Ok(Self { xi, sigma })
    }

    /// Unit-scale GPD with tail index `xi`.
    pub fn standard(xi: f64) -> Result<Self> {
        Self::new(xi, 1.0)
    }
}

/// A probability in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Prob(f64);

impl Prob {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::domain(format!("probability out of [0, 1]: {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Survival function `S(z; ξ, σ)` for `z ≥ 0`.
///
/// For ξ < 0 the support ends at `-σ/ξ`; beyond it the result is 0.
pub fn ccdf(z: f64, params: GpdParams) -> Result<Prob> {
    if z.is_nan() || z < 0.0 {
        return Err(Error::domain(format!("GPD survival needs z >= 0, got {z}")));
    }
    let GpdParams { xi, sigma } = GpdParams::new(params.xi, params.sigma)?;
    let s = z / sigma;
    let p = if xi.abs() < BRANCH_THRESHOLD {
        (-s).exp()
    } else {
        let arg = xi * s;
        if arg <= -1.0 {
            0.0
        } else {
            (-arg.ln_1p() / xi).exp()
        }
    };
    Prob::new(p.clamp(0.0, 1.0))
}

/// Inverse survival function of the unit-scale GPD: `(u^-ξ - 1) / ξ`.
///
/// Maps `u ∈ (0, 1]` to a variate `z ≥ 0` with `S(z; ξ, 1) = u`.
pub fn quantile(u: f64, xi: f64) -> Result<f64> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::domain(format!("GPD quantile needs u in (0, 1], got {u}")));
    }
    if !xi.is_finite() {
        return Err(Error::domain(format!("tail index must be finite, got {xi}")));
    }
    let ln_u = u.ln();
    if xi.abs() < BRANCH_THRESHOLD {
        Ok(-ln_u)
    } else {
        Ok((-xi * ln_u).exp_m1() / xi)
    }
}

/// `n` i.i.d. draws from the unit-scale GPD with tail index `xi`, as an n×1
/// matrix. Uniforms are drawn on (0, 1] so every variate is finite.
pub fn sample(n: usize, xi: f64, rng: &mut Rng) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::argument("sample count must be at least 1"));
    }
    let values = sample_values(n, xi, rng)?;
    Ok(SampleMatrix::from_raw(n, 1, values))
}

pub(crate) fn sample_values(n: usize, xi: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    // validate once, then the hot loop uses the closed forms directly
    quantile(1.0, xi)?;
    let exponential = xi.abs() < BRANCH_THRESHOLD;
    Ok((0..n)
        .map(|_| {
            let ln_u = rng::uniform_left_open(rng).ln();
            if exponential {
                -ln_u
            } else {
                (-xi * ln_u).exp_m1() / xi
            }
        })
        .collect())
}

/// Empirical `F_u(y) = #{x : u < x ≤ u + y} / #{x : x > u}`.
pub fn empirical_conditional_excess(samples: &[f64], u: f64, y: f64) -> Result<Prob> {
    if y.is_nan() || y < 0.0 {
        return Err(Error::domain(format!("excess level must be >= 0, got {y}")));
    }
    let mut exceed = 0usize;
    let mut within = 0usize;
    for &x in samples {
        if x > u {
            exceed += 1;
            if x <= u + y {
                within += 1;
            }
        }
    }
    if exceed == 0 {
        return Err(Error::UndefinedConditional { threshold: u });
    }
    Prob::new(within as f64 / exceed as f64)
}
