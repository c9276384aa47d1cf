//! Minibatch energy distance and its gradient with respect to generated
//! samples.
//!
//! For a generated batch `G` (n rows) and a real batch `R` (m rows):
//!
//! ```text
//! Ê = 2 · (1/(n m)) Σ_{i,j} d(g_i, r_j)
//!       − (1/(n(n−1))) Σ_{i≠i'} d(g_i, g_i')
//!       − (1/(m(m−1))) Σ_{j≠j'} d(r_j, r_j')
//! ```
//!
//! The cross term averages over all pairs; the within-set terms average over
//! distinct ordered pairs. Per-row partial sums may be computed on several
//! threads, but they are always combined sequentially in row order, so the
//! result does not depend on the size of the thread pool.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SampleMatrix;
use crate::metric::MetricSpec;

/// The three averaged pair terms of the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyTerms {
    pub cross: f64,
    pub within_gen: f64,
    /// `None` when the caller asked to skip the generator-independent term.
    pub within_real: Option<f64>,
}

impl EnergyTerms {
    /// `2·cross − within_gen − within_real`, treating a skipped term as 0.
    pub fn value(&self) -> f64 {
        2.0 * self.cross - self.within_gen - self.within_real.unwrap_or(0.0)
    }
}

fn check_shapes(gen: &SampleMatrix, real: &SampleMatrix) -> Result<()> {
    if gen.ncols() != real.ncols() {
        return Err(Error::argument(format!(
            "dimension mismatch: generated batch has {} columns, real batch {}",
            gen.ncols(),
            real.ncols()
        )));
    }
    if gen.nrows() < 2 || real.nrows() < 2 {
        return Err(Error::argument(format!(
            "energy distance needs at least 2 rows per batch, got {} and {}",
            gen.nrows(),
            real.nrows()
        )));
    }
    Ok(())
}

#[inline]
fn dist(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == 1 {
        (a[0] - b[0]).abs()
    } else {
        crate::metric::euclidean_distance(a, b)
    }
}

/// Mean of `d(a_i, b_j)` over all `i, j`.
pub fn mean_cross(a: &SampleMatrix, b: &SampleMatrix, metric: &MetricSpec) -> f64 {
    let row_sums: Vec<f64> = (0..a.nrows())
        .into_par_iter()
        .map(|i| {
            let x = a.row(i);
            b.rows_iter().map(|y| metric.value_of_distance(dist(x, y))).sum::<f64>()
        })
        .collect();
    row_sums.iter().sum::<f64>() / (a.nrows() as f64 * b.nrows() as f64)
}

/// Mean of `d(a_i, a_i')` over distinct ordered pairs.
pub fn mean_within(a: &SampleMatrix, metric: &MetricSpec) -> f64 {
    let n = a.nrows();
    let row_sums: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = a.row(i);
            (i + 1..n).map(|j| metric.value_of_distance(dist(x, a.row(j)))).sum::<f64>()
        })
        .collect();
    2.0 * row_sums.iter().sum::<f64>() / (n as f64 * (n as f64 - 1.0))
}

/// Energy distance between a generated and a real batch.
pub fn energy_distance(gen: &SampleMatrix, real: &SampleMatrix, metric: &MetricSpec) -> Result<f64> {
    Ok(energy_terms(gen, real, metric, true)?.value())
}

/// The individual estimator terms; `include_real_within = false` skips the
/// term that does not depend on the generator.
pub fn energy_terms(
    gen: &SampleMatrix,
    real: &SampleMatrix,
    metric: &MetricSpec,
    include_real_within: bool,
) -> Result<EnergyTerms> {
    check_shapes(gen, real)?;
    Ok(EnergyTerms {
        cross: mean_cross(gen, real, metric),
        within_gen: mean_within(gen, metric),
        within_real: include_real_within.then(|| mean_within(real, metric)),
    })
}

/// Gradient of the energy distance with respect to each generated row.
pub fn energy_distance_grad(gen: &SampleMatrix, real: &SampleMatrix, metric: &MetricSpec) -> Result<SampleMatrix> {
    Ok(energy_value_and_grad(gen, real, metric, false)?.1)
}

/// Estimator terms and the gradient in one pass over the pairs.
///
/// ```text
/// ∂Ê/∂g_i = 2/(n m) Σ_j ∇ₓd(g_i, r_j) − 2/(n(n−1)) Σ_{i'≠i} ∇ₓd(g_i, g_i')
/// ```
pub fn energy_value_and_grad(
    gen: &SampleMatrix,
    real: &SampleMatrix,
    metric: &MetricSpec,
    include_real_within: bool,
) -> Result<(EnergyTerms, SampleMatrix)> {
    check_shapes(gen, real)?;
    let n = gen.nrows();
    let m = real.nrows();
    let d = gen.ncols();
    let cross_scale = 2.0 / (n as f64 * m as f64);
    let within_scale = 2.0 / (n as f64 * (n as f64 - 1.0));

    // Within-generator coefficients, upper triangle computed once per pair.
    let upper: Vec<(f64, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = gen.row(i);
            let mut sum = 0.0;
            let coefs = (i + 1..n)
                .map(|j| {
                    let (v, c) = metric.value_and_coefficient(dist(x, gen.row(j)));
                    sum += v;
                    c
                })
                .collect();
            (sum, coefs)
        })
        .collect();
    let within_gen = 2.0 * upper.iter().map(|(s, _)| s).sum::<f64>() / (n as f64 * (n as f64 - 1.0));

    let coef = |i: usize, j: usize| -> f64 {
        if i < j {
            upper[i].1[j - i - 1]
        } else {
            upper[j].1[i - j - 1]
        }
    };

    let rows: Vec<(f64, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = gen.row(i);
            let mut g_cross = vec![0.0; d];
            let mut g_within = vec![0.0; d];
            let mut cross_sum = 0.0;
            for y in real.rows_iter() {
                let (v, c) = metric.value_and_coefficient(dist(x, y));
                cross_sum += v;
                for k in 0..d {
                    g_cross[k] += c * (x[k] - y[k]);
                }
            }
            for j in 0..n {
                if j == i {
                    continue;
                }
                let c = coef(i, j);
                let y = gen.row(j);
                for k in 0..d {
                    g_within[k] += c * (x[k] - y[k]);
                }
            }
            let grad = (0..d).map(|k| cross_scale * g_cross[k] - within_scale * g_within[k]).collect();
            (cross_sum, grad)
        })
        .collect();

    let cross = rows.iter().map(|(s, _)| s).sum::<f64>() / (n as f64 * m as f64);
    let mut grad = Vec::with_capacity(n * d);
    for (_, g) in rows {
        grad.extend(g);
    }
    let terms = EnergyTerms { cross, within_gen, within_real: include_real_within.then(|| mean_within(real, metric)) };
    Ok((terms, SampleMatrix::from_raw(n, d, grad)))
}

/// Euclidean 1-Wasserstein distance between two equal-size 1-D samples via
/// sorted matching.
pub fn wasserstein1_1d(a: &SampleMatrix, b: &SampleMatrix) -> Result<f64> {
    if a.ncols() != 1 || b.ncols() != 1 {
        return Err(Error::argument("wasserstein1_1d needs single-column samples"));
    }
    if a.nrows() != b.nrows() || a.nrows() == 0 {
        return Err(Error::argument(format!(
            "wasserstein1_1d needs equal non-zero sample counts, got {} and {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let mut x = a.as_slice().to_vec();
    let mut y = b.as_slice().to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    Ok(x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum::<f64>() / x.len() as f64)
}
