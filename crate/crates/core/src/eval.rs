//! Evaluation statistics: two-sample KS, the log-log CCDF area metric, the
//! distance to a power-warped linear manifold, and CCDF curve export.
//!
//! The area metric compares the empirical CCDFs of a real sample (n values)
//! and a generated sample (m values) on log-log axes:
//!
//! ```text
//! A = Σ_{i=1..n} | ln R_(i) − ln G_(⌈i·m/n⌉) | · ln((i+1)/i)
//! ```
//!
//! where `R_(i)` and `G_(j)` are the i-th and j-th largest values.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::signed_power;
use crate::matrix::SampleMatrix;

/// Relative floor applied to non-positive values in [`loglog_area`].
pub const AREA_FLOOR: f64 = 1e-12;
/// Floor applied before taking `ln` of a manifold distance.
pub const MDIST_LOG_FLOOR: f64 = 1e-300;

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov–Smirnov statistic `sup_x |F̂_a(x) − F̂_b(x)|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::argument("KS statistic needs non-empty samples"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::domain("KS statistic got NaN samples"));
    }
    let (a, b) = (sorted(a), sorted(b));
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// One-sample KS statistic against a continuous CDF.
pub fn ks_statistic_vs_cdf(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::argument("KS statistic needs a non-empty sample"));
    }
    let s = sorted(samples);
    let n = s.len() as f64;
    Ok(s.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    }))
}

/// Area metric for one pair of positive samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaResult {
    pub area: f64,
    pub n_real: usize,
    pub n_gen: usize,
    /// Non-positive values raised to the floor, both sets combined.
    pub floor_events: usize,
}

/// Descending values with non-positive entries raised to
/// `AREA_FLOOR × median(positive values)`.
fn floored_descending(values: &[f64], what: &str) -> Result<(Vec<f64>, usize)> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain(format!("{what} sample has non-finite values")));
    }
    let pos = sorted(&values.iter().copied().filter(|&v| v > 0.0).collect::<Vec<_>>());
    if pos.len() < 2 {
        return Err(Error::argument(format!("{what} sample has {} positive values, need >= 2", pos.len())));
    }
    let k = pos.len();
    let median = if k % 2 == 1 { pos[k / 2] } else { 0.5 * (pos[k / 2 - 1] + pos[k / 2]) };
    let floor = AREA_FLOOR * median;
    let mut events = 0;
    let mut out: Vec<f64> = values
        .iter()
        .map(|&v| {
            if v > 0.0 {
                v
            } else {
                events += 1;
                floor
            }
        })
        .collect();
    out.sort_by(|a, b| b.total_cmp(a));
    Ok((out, events))
}

/// Log-log CCDF area between a real and a generated positive sample.
pub fn loglog_area(real: &[f64], gen: &[f64]) -> Result<AreaResult> {
    let (r, er) = floored_descending(real, "real")?;
    let (g, eg) = floored_descending(gen, "generated")?;
    let (n, m) = (r.len(), g.len());
    let mut area = 0.0;
    for i in 1..=n {
        // ⌈i·m/n⌉ in exact integer arithmetic
        let j = (i * m).div_ceil(n);
        let w = (1.0 / i as f64).ln_1p();
        area += (r[i - 1].ln() - g[j - 1].ln()).abs() * w;
    }
    Ok(AreaResult { area, n_real: n, n_gen: m, floor_events: er + eg })
}

/// Area metric on both tails of a univariate sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSidedArea {
    /// Mean over the sides that could be evaluated.
    pub area: f64,
    pub positive: Option<AreaResult>,
    pub negative: Option<AreaResult>,
    /// True when only one side had at least two values in both samples.
    pub one_sided: bool,
}

impl TwoSidedArea {
    pub fn floor_events(&self) -> usize {
        self.positive.map_or(0, |a| a.floor_events) + self.negative.map_or(0, |a| a.floor_events)
    }
}

/// Mean of [`loglog_area`] on the positive values and on the negated
/// negative values. A side with fewer than two values in either sample is
/// skipped and the result is flagged one-sided.
pub fn two_sided_area(real: &[f64], gen: &[f64]) -> Result<TwoSidedArea> {
    let pos = |x: &[f64]| x.iter().copied().filter(|&v| v > 0.0).collect::<Vec<_>>();
    let neg = |x: &[f64]| x.iter().filter(|&&v| v < 0.0).map(|&v| -v).collect::<Vec<_>>();
    let side = |r: Vec<f64>, g: Vec<f64>| -> Result<Option<AreaResult>> {
        if r.len() < 2 || g.len() < 2 {
            Ok(None)
        } else {
            loglog_area(&r, &g).map(Some)
        }
    };
    let positive = side(pos(real), pos(gen))?;
    let negative = side(neg(real), neg(gen))?;
    let area = match (positive, negative) {
        (Some(p), Some(n)) => 0.5 * (p.area + n.area),
        (Some(a), None) | (None, Some(a)) => a.area,
        (None, None) => {
            return Err(Error::argument("neither tail has two values in both samples"));
        }
    };
    Ok(TwoSidedArea { area, positive, negative, one_sided: positive.is_none() || negative.is_none() })
}

/// A power-warped linear manifold `x = pow(C y, t)` with `C` of size d×c.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ManifoldSpecData", into = "ManifoldSpecData")]
pub struct ManifoldSpec {
    d: usize,
    c: usize,
    /// d×c, row-major.
    c_matrix: Vec<f64>,
    t: Vec<f64>,
    /// Orthonormal basis of col(C), d×c column-major (column k contiguous).
    basis: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifoldSpecData {
    d: usize,
    c: usize,
    /// Rows of C.
    c_matrix: Vec<Vec<f64>>,
    t: Vec<f64>,
}

impl TryFrom<ManifoldSpecData> for ManifoldSpec {
    type Error = Error;

    fn try_from(raw: ManifoldSpecData) -> Result<Self> {
        if raw.c_matrix.len() != raw.d || raw.c_matrix.iter().any(|r| r.len() != raw.c) {
            return Err(Error::Format(format!("manifold matrix is not {}x{}", raw.d, raw.c)));
        }
        ManifoldSpec::new(raw.d, raw.c, raw.c_matrix.concat(), raw.t)
    }
}

impl From<ManifoldSpec> for ManifoldSpecData {
    fn from(s: ManifoldSpec) -> Self {
        Self { d: s.d, c: s.c, c_matrix: s.c_matrix.chunks(s.c).map(<[f64]>::to_vec).collect(), t: s.t }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl ManifoldSpec {
    /// `c_matrix` is d×c row-major; `t` has length d.
    pub fn new(d: usize, c: usize, c_matrix: Vec<f64>, t: Vec<f64>) -> Result<Self> {
        if d == 0 || c == 0 || c > d {
            return Err(Error::argument(format!("manifold needs 1 <= c <= d, got c={c}, d={d}")));
        }
        if c_matrix.len() != d * c || t.len() != d {
            return Err(Error::argument("manifold matrix or exponent vector has the wrong length"));
        }
        if c_matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("manifold matrix has non-finite entries"));
        }
        if let Some(x) = t.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(Error::domain(format!("manifold exponents must be positive, got {x}")));
        }
        // modified Gram-Schmidt with one reorthogonalization pass
        let mut basis: Vec<f64> = Vec::with_capacity(d * c);
        for k in 0..c {
            let col: Vec<f64> = (0..d).map(|i| c_matrix[i * c + k]).collect();
            let original = norm(&col);
            let mut v = col;
            for _ in 0..2 {
                for q in basis.chunks(d) {
                    let p = dot(q, &v);
                    for (vi, qi) in v.iter_mut().zip(q) {
                        *vi -= p * qi;
                    }
                }
            }
            let r = norm(&v);
            if r.is_nan() || r <= 1e-10 * original {
                return Err(Error::domain("manifold matrix is rank deficient"));
            }
            basis.extend(v.iter().map(|x| x / r));
        }
        Ok(Self { d, c, c_matrix, t, basis })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    /// Entry `(i, k)` of C.
    pub fn c_entry(&self, i: usize, k: usize) -> f64 {
        self.c_matrix[i * self.c + k]
    }

    /// `pow(C y, t)` for one latent vector.
    pub fn embed(&self, y: &[f64]) -> Vec<f64> {
        (0..self.d)
            .map(|i| {
                let cy = dot(&self.c_matrix[i * self.c..(i + 1) * self.c], y);
                signed_power(cy, self.t[i])
            })
            .collect()
    }

    /// Euclidean distance from `signed_power(x, 1/t)` to its orthogonal
    /// projection onto col(C).
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d {
            return Err(Error::argument(format!("point has {} dims, manifold has {}", x.len(), self.d)));
        }
        let mut v: Vec<f64> = x.iter().zip(&self.t).map(|(&xi, &ti)| signed_power(xi, 1.0 / ti)).collect();
        for _ in 0..2 {
            for q in self.basis.chunks(self.d) {
                let p = dot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= p * qi;
                }
            }
        }
        Ok(norm(&v))
    }
}

pub fn manifold_distance(x_hat: &[f64], spec: &ManifoldSpec) -> Result<f64> {
    spec.distance(x_hat)
}

/// Mean of `ln(max(MDist, 1e-300))` over the rows of `samples`.
pub fn mean_log_mdist(samples: &SampleMatrix, spec: &ManifoldSpec) -> Result<f64> {
    if samples.nrows() == 0 {
        return Err(Error::argument("no samples"));
    }
    let mut total = 0.0;
    for row in samples.rows_iter() {
        total += spec.distance(row)?.max(MDIST_LOG_FLOOR).ln();
    }
    Ok(total / samples.nrows() as f64)
}

/// Empirical CCDF: values in descending order with exceedance probability
/// `i/n` for the i-th largest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcdfCurve {
    pub points: Vec<(f64, f64)>,
}

impl CcdfCurve {
    /// CSV with header `value,exceedance_prob`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["value", "exceedance_prob"])?;
        for (v, p) in &self.points {
            w.write_record([v.to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn ccdf_export(samples: &[f64]) -> Result<CcdfCurve> {
    if samples.is_empty() {
        return Err(Error::argument("CCDF needs at least one sample"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("CCDF samples must be finite"));
    }
    let mut v = samples.to_vec();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    let n = v.len() as f64;
    Ok(CcdfCurve { points: v.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect() })
}
