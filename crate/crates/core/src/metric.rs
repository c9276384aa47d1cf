//! Ground metrics on R^d used by the energy loss and its diagnostics.
//!
//! All three kinds are functions of the Euclidean distance `r = ‖x − y‖₂`:
//!
//! | kind        | value            | ∂/∂x                                  |
//! |-------------|------------------|---------------------------------------|
//! | euclidean   | r                | (x − y) / r                           |
//! | bounded(α)  | r / (α + r)      | α / (α + r)² · (x − y) / r            |
//! | root(γ)     | r^(1/γ)          | (1/γ) r^(1/γ − 1) · (x − y) / r       |
//!
//! Gradients substitute `max(r, ε)` for `r`, so coincident points produce a
//! zero vector instead of NaN. Values are never clamped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MetricKind {
    Euclidean,
    Bounded { alpha: f64 },
    Root { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    #[serde(flatten)]
    pub kind: MetricKind,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl MetricSpec {
    pub fn euclidean() -> Self {
        Self { kind: MetricKind::Euclidean, epsilon: DEFAULT_EPSILON }
    }

    pub fn bounded(alpha: f64) -> Result<Self> {
        Self { kind: MetricKind::Bounded { alpha }, epsilon: DEFAULT_EPSILON }.validated()
    }

    pub fn root(gamma: f64) -> Result<Self> {
        Self { kind: MetricKind::Root { gamma }, epsilon: DEFAULT_EPSILON }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::argument(format!("metric epsilon must be positive, got {}", self.epsilon)));
        }
        match self.kind {
            MetricKind::Euclidean => {}
            MetricKind::Bounded { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                return Err(Error::argument(format!("bounded metric needs alpha > 0, got {alpha}")));
            }
            MetricKind::Root { gamma } if !(gamma >= 1.0 && gamma.is_finite()) => {
                return Err(Error::argument(format!("root metric needs gamma >= 1, got {gamma}")));
            }
            _ => {}
        }
        Ok(self)
    }

    /// Metric value for Euclidean distance `r`.
    #[inline]
    pub fn value_of_distance(&self, r: f64) -> f64 {
        match self.kind {
            MetricKind::Euclidean => r,
            MetricKind::Bounded { alpha } => r / (alpha + r),
            MetricKind::Root { gamma } => root_pow(r, gamma),
        }
    }

    /// Metric value together with the scalar `c` such that
    /// `∂d/∂x = c · (x − y)`.
    #[inline]
    pub fn value_and_coefficient(&self, r: f64) -> (f64, f64) {
        let rc = r.max(self.epsilon);
        match self.kind {
            MetricKind::Euclidean => (r, 1.0 / rc),
            MetricKind::Bounded { alpha } => {
                let s = alpha + rc;
                (r / (alpha + r), alpha / (s * s * rc))
            }
            MetricKind::Root { gamma } => {
                if r >= self.epsilon {
                    let p = root_pow(r, gamma);
                    (p, p / (gamma * r * r))
                } else {
                    let pc = root_pow(rc, gamma);
                    (root_pow(r, gamma), pc / (gamma * rc * rc))
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dims(x, y)?;
        Ok(self.value_of_distance(euclidean_distance(x, y)))
    }

    pub fn grad_x(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_dims(x, y)?;
        let (_, c) = self.value_and_coefficient(euclidean_distance(x, y));
        Ok(x.iter().zip(y).map(|(a, b)| c * (a - b)).collect())
    }
}

/// `r^(1/γ)` with the common exponents special-cased.
#[inline]
fn root_pow(r: f64, gamma: f64) -> f64 {
    if gamma == 1.0 {
        r
    } else if gamma == 2.0 {
        r.sqrt()
    } else {
        r.powf(1.0 / gamma)
    }
}

#[inline]
pub fn euclidean_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn check_dims(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::argument(format!("dimension mismatch: {} vs {}", x.len(), y.len())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn kinds() -> Vec<MetricSpec> {
        vec![
            MetricSpec::euclidean(),
            MetricSpec::bounded(1.0).unwrap(),
            MetricSpec::bounded(0.3).unwrap(),
            MetricSpec::root(1.0).unwrap(),
            MetricSpec::root(1.5).unwrap(),
            MetricSpec::root(2.0).unwrap(),
            MetricSpec::root(3.0).unwrap(),
        ]
    }

    #[test]
    fn value_examples() {
        for m in kinds() {
            assert_eq!(m.eval(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        }
        assert_eq!(MetricSpec::bounded(1.0).unwrap().eval(&[1.0], &[0.0]).unwrap(), 0.5);
        assert_eq!(MetricSpec::root(2.0).unwrap().eval(&[4.0], &[0.0]).unwrap(), 2.0);
        assert_eq!(MetricSpec::euclidean().eval(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), 5.0);
    }

    #[test]
    fn gradient_examples() {
        let g = MetricSpec::root(2.0).unwrap().grad_x(&[4.0], &[0.0]).unwrap();
        assert!((g[0] - 0.25).abs() < 1e-15);
        let g = MetricSpec::euclidean().grad_x(&[3.0, 4.0], &[0.0, 0.0]).unwrap();
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        for m in kinds() {
            let g = m.grad_x(&[2.0, 2.0], &[2.0, 2.0]).unwrap();
            assert_eq!(g, vec![0.0, 0.0]);
            // coincident-point coefficient is finite
            let (_, c) = m.value_and_coefficient(0.0);
            assert!(c.is_finite());
        }
    }

    #[test]
    fn dimension_mismatch() {
        assert!(MetricSpec::euclidean().eval(&[1.0], &[1.0, 2.0]).is_err());
        assert!(MetricSpec::euclidean().grad_x(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn invalid_parameters() {
        assert!(MetricSpec::bounded(0.0).is_err());
        assert!(MetricSpec::root(0.8).is_err());
        assert!(MetricSpec { kind: MetricKind::Euclidean, epsilon: 0.0 }.validated().is_err());
    }

    #[test]
    fn finite_difference_gradients() {
        let mut r = rng::stream(31, 0);
        for m in kinds() {
            for _ in 0..200 {
                let d = r.random_range(1..5);
                let x: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
                let y: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
                if euclidean_distance(&x, &y) < 10.0 * m.epsilon {
                    continue;
                }
                let g = m.grad_x(&x, &y).unwrap();
                for k in 0..d {
                    let h = 1e-6;
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[k] += h;
                    xm[k] -= h;
                    let fd = (m.eval(&xp, &y).unwrap() - m.eval(&xm, &y).unwrap()) / (2.0 * h);
                    let err = (fd - g[k]).abs() / g[k].abs().max(1e-3);
                    assert!(err < 1e-5, "{m:?} k={k} fd={fd} g={}", g[k]);
                }
            }
        }
    }

    #[test]
    fn bounded_metric_stays_below_one() {
        let mut r = rng::stream(32, 0);
        let m = MetricSpec::bounded(0.5).unwrap();
        for _ in 0..100_000 {
            let x = [r.random_range(-1e6..1e6), r.random_range(-1e6..1e6)];
            let y = [r.random_range(-1e6..1e6), r.random_range(-1e6..1e6)];
            assert!(m.eval(&x, &y).unwrap() < 1.0);
        }
    }

    #[test]
    fn root_metric_triangle_inequality() {
        let mut r = rng::stream(33, 0);
        for &gamma in &[1.0, 1.5, 2.0, 3.0] {
            let m = MetricSpec::root(gamma).unwrap();
            for _ in 0..100_000 {
                let a = [r.random_range(-100.0..100.0)];
                let b = [r.random_range(-100.0..100.0)];
                let c = [r.random_range(-100.0..100.0)];
                let lhs = m.eval(&a, &c).unwrap();
                let rhs = m.eval(&a, &b).unwrap() + m.eval(&b, &c).unwrap();
                assert!(lhs <= rhs * (1.0 + 1e-12), "gamma={gamma}");
            }
        }
    }

    proptest! {
        #[test]
        fn larger_gamma_orders_by_unit_distance(
            x in prop::collection::vec(-50.0f64..50.0, 3),
            y in prop::collection::vec(-50.0f64..50.0, 3),
            gamma in 1.0f64..4.0,
            extra in 0.01f64..3.0,
        ) {
            let lo = MetricSpec::root(gamma).unwrap().eval(&x, &y).unwrap();
            let hi = MetricSpec::root(gamma + extra).unwrap().eval(&x, &y).unwrap();
            if euclidean_distance(&x, &y) >= 1.0 {
                prop_assert!(hi <= lo * (1.0 + 1e-12));
            } else {
                prop_assert!(hi >= lo * (1.0 - 1e-12));
            }
        }

        #[test]
        fn symmetric(
            x in prop::collection::vec(-50.0f64..50.0, 2),
            y in prop::collection::vec(-50.0f64..50.0, 2),
        ) {
            for m in kinds() {
                prop_assert_eq!(m.eval(&x, &y).unwrap(), m.eval(&y, &x).unwrap());
            }
        }
    }
}
