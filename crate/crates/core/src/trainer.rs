//! Minibatch training over a learning-rate grid with periodic validation and
//! best-checkpoint selection.
//!
//! Each learning rate is an independent run with its own derived seed. Runs
//! share the read-only data and one fixed validation noise batch, so their
//! validation losses are directly comparable.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{self, mean_within};
use crate::error::{Error, Result};
use crate::generator::{self, GeneratorSpec};
use crate::matrix::SampleMatrix;
use crate::net::{adam_step, AdamState, NetParams};
use crate::rng::{self, streams};

pub const DEFAULT_VALIDATION_EVERY: usize = 500;
pub const DEFAULT_VALIDATION_NOISE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let ok = |f: f64| f > 0.0 && f < 1.0;
        if !ok(self.train) || !ok(self.val) || self.train + self.val >= 1.0 {
            return Err(Error::argument(format!(
                "split fractions must be in (0, 1) with train + val < 1, got ({}, {})",
                self.train, self.val
            )));
        }
        Ok(())
    }
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.5, val: 0.25 }
    }
}

/// Disjoint train/validation/test splits divided by the training scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: SampleMatrix,
    pub val: SampleMatrix,
    pub test: SampleMatrix,
    /// Per-column mean magnitude of the raw training split.
    pub scale: Vec<f64>,
}

/// Seeded shuffle into train/validation/test, then divide every split by the
/// per-column mean `|x|` of the training split.
pub fn split_normalize(data: &SampleMatrix, fractions: SplitFractions, seed: u64) -> Result<Splits> {
    fractions.validate()?;
    let n = data.nrows();
    let n_train = (fractions.train * n as f64).round() as usize;
    let n_val = (fractions.val * n as f64).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, streams::SPLIT));
    let train = data.select_rows(&order[..n_train]);
    let val = data.select_rows(&order[n_train..n_train + n_val]);
    let test = data.select_rows(&order[n_train + n_val..]);

    let d = data.ncols();
    let mut scale = vec![0.0; d];
    for row in train.rows_iter() {
        for (s, v) in scale.iter_mut().zip(row) {
            *s += v.abs();
        }
    }
    for (j, s) in scale.iter_mut().enumerate() {
        *s /= n_train as f64;
        if !(*s > 0.0 && s.is_finite()) {
            return Err(Error::domain(format!("column {j} has training scale {s}; cannot normalize")));
        }
    }
    let inv: Vec<f64> = scale.iter().map(|s| 1.0 / s).collect();
    Ok(Splits { train: train.scale_columns(&inv), val: val.scale_columns(&inv), test: test.scale_columns(&inv), scale })
}

fn default_validation_every() -> usize {
    DEFAULT_VALIDATION_EVERY
}

fn default_validation_noise() -> usize {
    DEFAULT_VALIDATION_NOISE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub gspec: GeneratorSpec,
    pub batch_size: usize,
    pub iterations: usize,
    pub learning_rates: Vec<f64>,
    #[serde(default = "default_validation_every")]
    pub validation_every: usize,
    /// Size of the fixed validation noise batch.
    #[serde(default = "default_validation_noise")]
    pub validation_noise: usize,
    pub seed: u64,
    #[serde(default)]
    pub split: SplitFractions,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.gspec.validate()?;
        self.split.validate()?;
        if self.batch_size < 2 {
            return Err(Error::argument("batch_size must be >= 2"));
        }
        if self.iterations == 0 {
            return Err(Error::argument("iterations must be >= 1"));
        }
        if self.learning_rates.is_empty() {
            return Err(Error::argument("at least one learning rate is required"));
        }
        if let Some(lr) = self.learning_rates.iter().find(|&&lr| !(lr > 0.0 && lr.is_finite())) {
            return Err(Error::argument(format!("learning rates must be positive, got {lr}")));
        }
        if self.validation_every == 0 {
            return Err(Error::argument("validation_every must be >= 1"));
        }
        if self.validation_noise < 2 {
            return Err(Error::argument("validation_noise must be >= 2"));
        }
        Ok(())
    }

    /// Seed of run `run_id`.
    pub fn run_seed(&self, run_id: usize) -> u64 {
        rng::derive_seed(self.seed, run_id as u64)
    }

    /// The validation noise batch shared by all runs.
    pub fn validation_noise_batch(&self) -> Result<SampleMatrix> {
        generator::sample_noise(
            &self.gspec.noise,
            self.validation_noise,
            &mut rng::stream(self.seed, streams::VALIDATION),
        )
    }
}

/// Generator state at one validation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub gspec: GeneratorSpec,
    pub params: NetParams,
    pub optimizer: AdamState,
    pub step: usize,
    pub run_id: usize,
    pub learning_rate: f64,
    pub val_loss: f64,
    /// Per-column normalization; generated samples times `scale` are in
    /// data units.
    #[serde(default)]
    pub scale: Vec<f64>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        ckpt.gspec.validate()?;
        if !ckpt.params.matches(&ckpt.gspec.net) || !ckpt.params.is_finite() {
            return Err(Error::Format(format!("{}: parameters inconsistent with generator spec", path.display())));
        }
        Ok(ckpt)
    }

    /// Generate `n` samples in data units.
    pub fn sample(&self, n: usize, rng: &mut rng::Rng) -> Result<generator::Generated> {
        let mut g = generator::generate_counted(&self.gspec, &self.params, n, rng)?;
        if !self.scale.is_empty() {
            if self.scale.len() != g.samples.ncols() {
                return Err(Error::Format("checkpoint scale width differs from output dim".into()));
            }
            g.samples = g.samples.scale_columns(&self.scale);
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub curve: Vec<CurvePoint>,
    /// Iterations at which a new best checkpoint was taken.
    pub checkpoints: Vec<usize>,
    pub best_val_loss: Option<f64>,
    pub best_iteration: Option<usize>,
    pub diverged: bool,
    pub diverged_at: Option<usize>,
    pub exp_cap_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub runs: Vec<RunReport>,
    pub best_run: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub wall_time_secs: f64,
    /// File name of the best checkpoint, once written.
    pub checkpoint: Option<String>,
}

impl TrainReport {
    pub fn all_diverged(&self) -> bool {
        self.runs.iter().all(|r| r.diverged)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Loss curves as CSV: `iteration,run_id,train_loss,val_loss`.
    pub fn write_loss_curves(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["iteration", "run_id", "train_loss", "val_loss"])?;
        for run in &self.runs {
            for p in &run.curve {
                w.write_record([
                    p.iteration.to_string(),
                    run.run_id.to_string(),
                    p.train_loss.to_string(),
                    p.val_loss.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

/// Training result: the report and the globally best checkpoint.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub best: Option<Checkpoint>,
}

/// Validation data mapped into the loss space with its within-set term,
/// computed once.
pub struct Validator {
    noise: SampleMatrix,
    val: SampleMatrix,
    within_real: f64,
}

impl Validator {
    pub fn new(config: &TrainConfig, val_data: &SampleMatrix) -> Result<Self> {
        let val = generator::loss_space_data(&config.gspec, val_data)?;
        if val.nrows() < 2 {
            return Err(Error::InsufficientData { needed: 2, got: val.nrows() });
        }
        let within_real = mean_within(&val, &config.gspec.loss_metric);
        Ok(Self { noise: config.validation_noise_batch()?, val, within_real })
    }

    /// Energy distance between the generator's output on the fixed noise
    /// batch and the validation data, in the loss space.
    pub fn loss(&self, gspec: &GeneratorSpec, params: &NetParams) -> Result<f64> {
        let raw = params.forward(&self.noise)?;
        let gen = generator::loss_space_output(gspec, &raw)?.samples;
        let mut terms = energy::energy_terms(&gen, &self.val, &gspec.loss_metric, false)?;
        terms.within_real = Some(self.within_real);
        Ok(terms.value())
    }
}

/// Recompute the validation loss of a checkpoint under `config`.
pub fn validation_loss(config: &TrainConfig, val_data: &SampleMatrix, ckpt: &Checkpoint) -> Result<f64> {
    Validator::new(config, val_data)?.loss(&ckpt.gspec, &ckpt.params)
}

/// Train one run per learning rate and select the best validation
/// checkpoint across all of them.
pub fn train(config: &TrainConfig, train_data: &SampleMatrix, val_data: &SampleMatrix) -> Result<TrainOutcome> {
    config.validate()?;
    let d = config.gspec.output_dim();
    if train_data.ncols() != d || val_data.ncols() != d {
        return Err(Error::argument(format!(
            "data has {} / {} columns, generator outputs {d}",
            train_data.ncols(),
            val_data.ncols()
        )));
    }
    if train_data.nrows() == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let start = Instant::now();
    let train_ls = generator::loss_space_data(&config.gspec, train_data)?;
    let validator = Validator::new(config, val_data)?;

    let results: Vec<(RunReport, Option<Checkpoint>)> = (0..config.learning_rates.len())
        .into_par_iter()
        .map(|run_id| run_one(config, run_id, &train_ls, &validator))
        .collect::<Result<_>>()?;

    let mut best: Option<Checkpoint> = None;
    let mut runs = Vec::with_capacity(results.len());
    for (report, ckpt) in results {
        if let Some(c) = ckpt {
            if best.as_ref().is_none_or(|b| c.val_loss < b.val_loss) {
                best = Some(c);
            }
        }
        runs.push(report);
    }
    let report = TrainReport {
        runs,
        best_run: best.as_ref().map(|c| c.run_id),
        best_val_loss: best.as_ref().map(|c| c.val_loss),
        wall_time_secs: start.elapsed().as_secs_f64(),
        checkpoint: None,
    };
    Ok(TrainOutcome { report, best })
}

fn run_one(
    config: &TrainConfig,
    run_id: usize,
    train_ls: &SampleMatrix,
    validator: &Validator,
) -> Result<(RunReport, Option<Checkpoint>)> {
    let gspec = &config.gspec;
    let lr = config.learning_rates[run_id];
    let seed = config.run_seed(run_id);
    let mut params = NetParams::init(&gspec.net, &mut rng::stream(seed, streams::INIT))?;
    let mut adam = AdamState::for_params(&params);
    let mut noise_rng = rng::stream(seed, streams::NOISE);
    let mut batch_rng = rng::stream(seed, streams::BATCH);
    let n_train = train_ls.nrows();
    let mut indices = vec![0usize; config.batch_size];

    let mut report = RunReport {
        run_id,
        learning_rate: lr,
        seed,
        curve: Vec::new(),
        checkpoints: Vec::new(),
        best_val_loss: None,
        best_iteration: None,
        diverged: false,
        diverged_at: None,
        exp_cap_events: 0,
    };
    let mut best: Option<Checkpoint> = None;

    for it in 1..=config.iterations {
        let validate = it % config.validation_every == 0 || it == config.iterations;
        let z = generator::sample_noise(&gspec.noise, config.batch_size, &mut noise_rng)?;
        for i in indices.iter_mut() {
            *i = batch_rng.random_range(0..n_train);
        }
        let real = train_ls.select_rows(&indices);

        let cache = params.forward_cached(&z)?;
        let gen = generator::loss_space_output(gspec, cache.output())?;
        report.exp_cap_events += gen.exp_cap_events;
        let (terms, g) = energy::energy_value_and_grad(&gen.samples, &real, &gspec.loss_metric, validate)?;
        let train_loss = terms.value();
        if !train_loss.is_finite() || !g.is_finite() {
            report.diverged = true;
            report.diverged_at = Some(it);
            break;
        }
        let grads = match generator::loss_grad_chain(gspec, &params, &cache, &g) {
            Ok(grads) if grads.is_finite() => grads,
            Ok(_) | Err(Error::Domain(_)) => {
                report.diverged = true;
                report.diverged_at = Some(it);
                break;
            }
            Err(e) => return Err(e),
        };
        adam_step(&mut params, &grads, &mut adam, lr)?;
        if !params.is_finite() {
            report.diverged = true;
            report.diverged_at = Some(it);
            break;
        }

        if validate {
            let val_loss = validator.loss(gspec, &params)?;
            if !val_loss.is_finite() {
                report.diverged = true;
                report.diverged_at = Some(it);
                break;
            }
            report.curve.push(CurvePoint { iteration: it, train_loss, val_loss });
            if report.best_val_loss.is_none_or(|b| val_loss < b) {
                report.best_val_loss = Some(val_loss);
                report.best_iteration = Some(it);
                report.checkpoints.push(it);
                best = Some(Checkpoint {
                    gspec: gspec.clone(),
                    params: params.clone(),
                    optimizer: adam.clone(),
                    step: it,
                    run_id,
                    learning_rate: lr,
                    val_loss,
                    scale: Vec::new(),
                });
            }
        }
    }
    Ok((report, best))
}
