//! Synthetic heavy-tailed datasets and CSV input/output.
//!
//! Every sampler has a pure row function taking the underlying draws, so
//! tests can inject exact values, and a seeded wrapper that draws them.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ManifoldSpec;
use crate::generator::signed_power;
use crate::matrix::SampleMatrix;
use crate::rng::{self, streams, Rng};

/// Cauchy quantile `location + scale·tan(π(u − ½))`.
#[inline]
pub fn cauchy_quantile(u: f64, location: f64, scale: f64) -> f64 {
    location + scale * (PI * (u - 0.5)).tan()
}

fn check_scale(scale: f64) -> Result<()> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::argument(format!("Cauchy scale must be positive, got {scale}")));
    }
    Ok(())
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::argument("sample count must be at least 1"));
    }
    Ok(())
}

/// `n` Cauchy draws as an n×1 matrix; uniforms of exactly 0 or 1 are
/// rejected.
pub fn sample_cauchy(n: usize, location: f64, scale: f64, rng: &mut Rng) -> Result<SampleMatrix> {
    check_n(n)?;
    check_scale(scale)?;
    let v = (0..n).map(|_| cauchy_quantile(rng::uniform_open(rng), location, scale)).collect();
    Ok(SampleMatrix::from_raw(n, 1, v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CauchyComponent {
    pub location: f64,
    pub scale: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CauchyMixtureSpec {
    pub components: Vec<CauchyComponent>,
}

impl Default for CauchyMixtureSpec {
    /// Two standard Cauchy components at ±5 with equal weights.
    fn default() -> Self {
        Self {
            components: vec![
                CauchyComponent { location: -5.0, scale: 1.0, weight: 0.5 },
                CauchyComponent { location: 5.0, scale: 1.0, weight: 0.5 },
            ],
        }
    }
}

impl CauchyMixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::argument("mixture needs at least one component"));
        }
        for c in &self.components {
            check_scale(c.scale)?;
            if !(c.weight >= 0.0 && c.weight.is_finite()) || !c.location.is_finite() {
                return Err(Error::argument("mixture weights must be >= 0 and locations finite"));
            }
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::argument(format!("mixture weights sum to {total}, expected 1")));
        }
        Ok(())
    }

    /// Component whose cumulative weight first exceeds `u ∈ [0, 1)`.
    pub fn component_for(&self, u: f64) -> &CauchyComponent {
        let mut acc = 0.0;
        for c in &self.components {
            acc += c.weight;
            if u < acc && c.weight > 0.0 {
                return c;
            }
        }
        self.components.iter().rev().find(|c| c.weight > 0.0).unwrap_or(&self.components[0])
    }
}

pub fn sample_cauchy_mixture(spec: &CauchyMixtureSpec, n: usize, rng: &mut Rng) -> Result<SampleMatrix> {
    spec.validate()?;
    check_n(n)?;
    if let [only] = spec.components.as_slice() {
        return sample_cauchy(n, only.location, only.scale, rng);
    }
    let v = (0..n)
        .map(|_| {
            let c = spec.component_for(rng.random::<f64>());
            cauchy_quantile(rng::uniform_open(rng), c.location, c.scale)
        })
        .collect();
    Ok(SampleMatrix::from_raw(n, 1, v))
}

/// One row of the 2-D joint distribution: `(A + B, sign(A − B)·|A − B|^½)`.
#[inline]
pub fn joint2d_row(a: f64, b: f64) -> [f64; 2] {
    [a + b, signed_power(a - b, 0.5)]
}

/// `n` rows of [`joint2d_row`] with independent standard Cauchy A and B.
pub fn sample_joint2d(n: usize, rng: &mut Rng) -> Result<SampleMatrix> {
    check_n(n)?;
    let mut v = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let a = cauchy_quantile(rng::uniform_open(rng), 0.0, 1.0);
        let b = cauchy_quantile(rng::uniform_open(rng), 0.0, 1.0);
        v.extend(joint2d_row(a, b));
    }
    Ok(SampleMatrix::from_raw(n, 2, v))
}

/// Random manifold: C with standard normal entries, t uniform on [0.5, 3].
pub fn random_manifold_spec(c: usize, d: usize, rng: &mut Rng) -> Result<ManifoldSpec> {
    if c == 0 || c >= d {
        return Err(Error::argument(format!("manifold needs 1 <= c < d, got c={c}, d={d}")));
    }
    let cm = (0..d * c).map(|_| StandardNormal.sample(rng)).collect();
    let t = (0..d).map(|_| rng.random_range(0.5..=3.0)).collect();
    ManifoldSpec::new(d, c, cm, t)
}

/// `n` rows of `pow(C Y, t)` with i.i.d. standard Cauchy `Y` of length `c`.
/// The spec comes from one stream of `seed`, the rows from another.
pub fn sample_highd_manifold(c: usize, d: usize, n: usize, seed: u64) -> Result<(SampleMatrix, ManifoldSpec)> {
    check_n(n)?;
    let spec = random_manifold_spec(c, d, &mut rng::stream(seed, streams::MANIFOLD_SPEC))?;
    let mut r = rng::stream(seed, streams::DATA);
    let mut v = Vec::with_capacity(n * d);
    let mut y = vec![0.0; c];
    for _ in 0..n {
        for yk in y.iter_mut() {
            *yk = cauchy_quantile(rng::uniform_open(&mut r), 0.0, 1.0);
        }
        v.extend(spec.embed(&y));
    }
    Ok((SampleMatrix::from_raw(n, d, v), spec))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    /// Zero-based column indices; `None` selects every column.
    pub columns: Option<Vec<usize>>,
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self { columns: None, delimiter: b',' }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCsv {
    pub data: SampleMatrix,
    /// Header names of the selected columns, when a header was detected.
    pub header: Option<Vec<String>>,
    /// Records skipped because a selected cell was missing or not a finite
    /// number.
    pub rejected_rows: usize,
}

fn parse_cell(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Read numeric columns from a delimited text file. A first line whose
/// selected cells are not all numeric is treated as a header.
pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<LoadedCsv> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(options.delimiter)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Format(format!("{}: {other:?}", path.display())),
        })?;

    let mut header = None;
    let mut rows: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;
    let mut rejected = 0usize;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let cols: Vec<usize> = match &options.columns {
            Some(c) => c.clone(),
            None => (0..width.unwrap_or(record.len())).collect(),
        };
        let cells: Option<Vec<f64>> = cols.iter().map(|&j| record.get(j).and_then(parse_cell)).collect();
        match cells {
            Some(values) if !values.is_empty() => {
                width.get_or_insert(values.len());
                if Some(values.len()) == width {
                    rows.extend(values);
                } else {
                    rejected += 1;
                }
            }
            _ if line == 0 => {
                header = Some(cols.iter().map(|&j| record.get(j).unwrap_or("").trim().to_string()).collect());
                if options.columns.is_none() {
                    width = Some(record.len());
                }
            }
            _ => rejected += 1,
        }
    }
    let d = width.unwrap_or(0);
    if d == 0 || rows.is_empty() {
        return Err(Error::Format(format!("{}: no usable numeric rows", path.display())));
    }
    let n = rows.len() / d;
    Ok(LoadedCsv { data: SampleMatrix::new(n, d, rows)?, header, rejected_rows: rejected })
}

/// Write a matrix as CSV with the given header (or `x0, x1, …`).
pub fn write_csv(path: &Path, data: &SampleMatrix, header: Option<&[String]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    match header {
        Some(h) => w.write_record(h)?,
        None => w.write_record((0..data.ncols()).map(|j| format!("x{j}")))?,
    }
    for row in data.rows_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
