//! End-to-end experiment steps shared by the CLI and the acceptance suite:
//! load or synthesize data, split and normalize, build the generator,
//! train, and evaluate against the held-out test split.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{DataSource, ExperimentConfig};
use crate::error::{Error, Result};
use crate::eval::{self, AreaResult, ManifoldSpec, TwoSidedArea};
use crate::generator::{build_variant, GeneratorSpec, Variant};
use crate::gpd;
use crate::matrix::SampleMatrix;
use crate::rng::{self, streams};
use crate::synth::{self, CsvOptions};
use crate::tailest::{estimate_tail_index, TailEstimate, TailSide};
use crate::trainer::{self, write_json, Checkpoint, Splits, TrainConfig, TrainReport};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const REPORT_FILE: &str = "report.json";
pub const LOSS_CURVES_FILE: &str = "loss_curves.csv";
pub const TEST_FILE: &str = "test.csv";
pub const MANIFOLD_FILE: &str = "manifold.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const SWEEP_FILE: &str = "sweep.csv";

/// Raw experiment data.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub data: SampleMatrix,
    pub header: Option<Vec<String>>,
    pub rejected_rows: usize,
    /// Generating manifold for synthetic manifold data.
    pub manifold: Option<ManifoldSpec>,
}

pub fn load_dataset(source: &DataSource, seed: u64) -> Result<Dataset> {
    let mut r = rng::stream(seed, streams::DATA);
    let plain = |data| Dataset { data, header: None, rejected_rows: 0, manifold: None };
    Ok(match source {
        DataSource::Csv { path, columns, delimiter } => {
            let opts = CsvOptions { columns: columns.clone(), delimiter: *delimiter as u8 };
            let l = synth::load_csv(path, &opts)?;
            Dataset { data: l.data, header: l.header, rejected_rows: l.rejected_rows, manifold: None }
        }
        DataSource::CauchyMixture { n, mixture } => {
            plain(synth::sample_cauchy_mixture(&mixture.clone().unwrap_or_default(), *n, &mut r)?)
        }
        DataSource::Joint2d { n } => plain(synth::sample_joint2d(*n, &mut r)?),
        DataSource::Gpd { n, xi } => plain(gpd::sample(*n, *xi, &mut r)?),
        DataSource::Manifold { c, d, n } => {
            let (data, spec) = synth::sample_highd_manifold(*c, *d, *n, seed)?;
            Dataset { data, header: None, rejected_rows: 0, manifold: Some(spec) }
        }
    })
}

/// Tail estimate of every column on one side.
pub fn estimate_columns(data: &SampleMatrix, side: TailSide) -> Result<Vec<TailEstimate>> {
    (0..data.ncols()).map(|j| estimate_tail_index(&data.column(j), side, None)).collect()
}

/// Generator and training schedule for `cfg` given the normalized training
/// split; tail indices are estimated from that split.
pub fn build_train_config(cfg: &ExperimentConfig, train: &SampleMatrix) -> Result<(TrainConfig, Vec<TailEstimate>)> {
    let g = &cfg.generator;
    let tails = estimate_columns(train, g.tail_side)?;
    let xi_hats: Vec<f64> = tails.iter().map(|t| t.xi_hat).collect();
    let positive = train.as_slice().iter().all(|&x| x > 0.0);
    let gspec = build_variant(g.variant, &xi_hats, &g.shape(), g.gamma, g.log_loss && positive)?;
    let t = &cfg.training;
    let tc = TrainConfig {
        gspec,
        batch_size: t.batch_size,
        iterations: t.iterations,
        learning_rates: t.learning_rates.clone(),
        validation_every: t.validation_every,
        validation_noise: t.validation_noise,
        seed: cfg.seed,
        split: cfg.split,
    };
    Ok((tc, tails))
}

/// Everything recorded about a training command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub variant: Variant,
    pub seed: u64,
    pub tail_estimates: Vec<TailEstimate>,
    pub gspec: GeneratorSpec,
    pub scale: Vec<f64>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub rejected_rows: usize,
    pub train: TrainReport,
}

#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub summary: TrainSummary,
    pub best: Option<Checkpoint>,
    pub splits: Splits,
    pub manifold: Option<ManifoldSpec>,
    pub out_dir: PathBuf,
}

impl TrainArtifacts {
    /// Test split in data units.
    pub fn test_data(&self) -> SampleMatrix {
        self.splits.test.scale_columns(&self.splits.scale)
    }
}

/// Load data, split, build the generator, train, and write the checkpoint,
/// report, loss curves, test split and (for manifold data) the manifold spec
/// under `cfg.out_dir`.
pub fn run_train(cfg: &ExperimentConfig) -> Result<TrainArtifacts> {
    cfg.validate()?;
    let ds = load_dataset(&cfg.data, cfg.seed)?;
    let splits = trainer::split_normalize(&ds.data, cfg.split, cfg.seed)?;
    let (tc, tails) = build_train_config(cfg, &splits.train)?;
    let outcome = trainer::train(&tc, &splits.train, &splits.val)?;

    let out = &cfg.out_dir;
    std::fs::create_dir_all(out)?;
    let mut report = outcome.report;
    let best = outcome.best.map(|mut c| {
        c.scale = splits.scale.clone();
        c
    });
    if let Some(c) = &best {
        c.save(&out.join(CHECKPOINT_FILE))?;
        report.checkpoint = Some(CHECKPOINT_FILE.to_string());
    }
    report.write_loss_curves(&out.join(LOSS_CURVES_FILE))?;
    let summary = TrainSummary {
        variant: cfg.generator.variant,
        seed: cfg.seed,
        tail_estimates: tails,
        gspec: tc.gspec,
        scale: splits.scale.clone(),
        n_train: splits.train.nrows(),
        n_val: splits.val.nrows(),
        n_test: splits.test.nrows(),
        rejected_rows: ds.rejected_rows,
        train: report,
    };
    write_json(&out.join(REPORT_FILE), &summary)?;
    let artifacts = TrainArtifacts { summary, best, splits, manifold: ds.manifold, out_dir: out.clone() };
    synth::write_csv(&out.join(TEST_FILE), &artifacts.test_data(), ds.header.as_deref())?;
    if let Some(m) = &artifacts.manifold {
        write_json(&out.join(MANIFOLD_FILE), m)?;
    }
    Ok(artifacts)
}

/// Per-column evaluation statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMetrics {
    pub column: usize,
    pub ks: f64,
    /// Area on the positive values only.
    pub upper_area: Option<AreaResult>,
    pub two_sided: Option<TwoSidedArea>,
    pub real_tail: Option<TailEstimate>,
    pub gen_tail_upper: Option<TailEstimate>,
    pub gen_tail_magnitude: Option<TailEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub n_test: usize,
    pub n_generated: usize,
    pub columns: Vec<ColumnMetrics>,
    /// Mean two-sided area over columns; `None` when a column has no
    /// evaluable side.
    pub mean_area: Option<f64>,
    /// True when any column's two-sided area was flagged one-sided.
    pub any_one_sided: bool,
    pub floor_events: usize,
    pub exp_cap_events: usize,
    pub mean_log_mdist_generated: Option<f64>,
    pub mean_log_mdist_real: Option<f64>,
}

impl EvalMetrics {
    /// Sort key for comparing models on tail fidelity: any one-sided or
    /// unevaluable result ranks behind every two-sided one, then by area.
    pub fn ranking_key(&self) -> (bool, f64) {
        match self.mean_area {
            Some(a) if !self.any_one_sided => (false, a),
            Some(a) => (true, a),
            None => (true, f64::INFINITY),
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub samples: usize,
    pub seed: u64,
    /// Directory for CCDF curve CSVs; none are written when `None`.
    pub ccdf_dir: Option<PathBuf>,
    pub manifold: Option<ManifoldSpec>,
}

/// Compare `samples` generated rows from the checkpoint (in data units)
/// with the test rows.
pub fn evaluate(ckpt: &Checkpoint, test: &SampleMatrix, opts: &EvalOptions) -> Result<EvalMetrics> {
    if test.ncols() != ckpt.gspec.output_dim() {
        return Err(Error::Format(format!(
            "test data has {} columns, generator outputs {}",
            test.ncols(),
            ckpt.gspec.output_dim()
        )));
    }
    if test.nrows() < 2 || opts.samples < 2 {
        return Err(Error::InsufficientData { needed: 2, got: test.nrows().min(opts.samples) });
    }
    let generated = ckpt.sample(opts.samples, &mut rng::stream(opts.seed, streams::EVAL))?;
    let gen = generated.samples;
    if !gen.is_finite() {
        return Err(Error::domain("generator produced non-finite samples"));
    }
    let mut columns = Vec::with_capacity(test.ncols());
    for j in 0..test.ncols() {
        let r = test.column(j);
        let g = gen.column(j);
        let pos = |x: &[f64]| x.iter().copied().filter(|&v| v > 0.0).collect::<Vec<_>>();
        let (rp, gp) = (pos(&r), pos(&g));
        let upper_area = if rp.len() >= 2 && gp.len() >= 2 { Some(eval::loglog_area(&rp, &gp)?) } else { None };
        if let Some(dir) = &opts.ccdf_dir {
            eval::ccdf_export(&r)?.write_csv(&dir.join(format!("ccdf_real_col{j}.csv")))?;
            eval::ccdf_export(&g)?.write_csv(&dir.join(format!("ccdf_gen_col{j}.csv")))?;
        }
        columns.push(ColumnMetrics {
            column: j,
            ks: eval::ks_statistic(&r, &g)?,
            upper_area,
            two_sided: eval::two_sided_area(&r, &g).ok(),
            real_tail: estimate_tail_index(&r, TailSide::Magnitude, None).ok(),
            gen_tail_upper: estimate_tail_index(&g, TailSide::Positive, None).ok(),
            gen_tail_magnitude: estimate_tail_index(&g, TailSide::Magnitude, None).ok(),
        });
    }
    let areas: Option<Vec<f64>> = columns.iter().map(|c| c.two_sided.map(|a| a.area)).collect();
    let mean_area = areas.map(|a| a.iter().sum::<f64>() / a.len() as f64);
    let any_one_sided = columns.iter().any(|c| c.two_sided.is_none_or(|a| a.one_sided));
    let floor_events = columns
        .iter()
        .map(|c| c.upper_area.map_or(0, |a| a.floor_events) + c.two_sided.map_or(0, |a| a.floor_events()))
        .sum();
    let (mdist_gen, mdist_real) = match &opts.manifold {
        Some(m) => (Some(eval::mean_log_mdist(&gen, m)?), Some(eval::mean_log_mdist(test, m)?)),
        None => (None, None),
    };
    Ok(EvalMetrics {
        n_test: test.nrows(),
        n_generated: gen.nrows(),
        columns,
        mean_area,
        any_one_sided,
        floor_events,
        exp_cap_events: generated.exp_cap_events,
        mean_log_mdist_generated: mdist_gen,
        mean_log_mdist_real: mdist_real,
    })
}

/// Train, then evaluate the best checkpoint on the test split and write
/// `metrics.json`. Returns `None` metrics when no run produced a checkpoint.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(TrainArtifacts, Option<EvalMetrics>)> {
    let art = run_train(cfg)?;
    let Some(best) = &art.best else {
        return Ok((art, None));
    };
    let opts = EvalOptions {
        samples: cfg.eval.samples,
        seed: cfg.seed,
        ccdf_dir: cfg.eval.ccdf.then(|| art.out_dir.clone()),
        manifold: art.manifold.clone(),
    };
    let metrics = evaluate(best, &art.test_data(), &opts)?;
    metrics.write_json(&art.out_dir.join(METRICS_FILE))?;
    Ok((art, Some(metrics)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variant: Variant,
    pub width: usize,
    pub seed: u64,
    /// Mean two-sided area; `None` when every run diverged or no side could
    /// be evaluated.
    pub area: Option<f64>,
    pub one_sided: bool,
}

/// Sub-directory of a sweep entry.
pub fn sweep_entry_dir(out: &Path, variant: Variant, width: usize) -> PathBuf {
    out.join(format!("{variant}_w{width}"))
}

/// Config for one sweep entry: every hidden layer set to `width`.
pub fn sweep_entry_config(base: &ExperimentConfig, variant: Variant, width: usize) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.generator.variant = variant;
    cfg.generator.hidden_widths = vec![width; base.generator.hidden_widths.len()];
    cfg.out_dir = sweep_entry_dir(&base.out_dir, variant, width);
    cfg
}

/// Train and evaluate one model per (variant, width) and write `sweep.csv`.
pub fn run_sweep(base: &ExperimentConfig, widths: &[usize], variants: &[Variant]) -> Result<Vec<SweepRow>> {
    if widths.is_empty() || widths.contains(&0) || variants.is_empty() {
        return Err(Error::Config("sweep needs positive widths and at least one variant".into()));
    }
    let mut rows = Vec::new();
    for &variant in variants {
        for &width in widths {
            let cfg = sweep_entry_config(base, variant, width);
            let (_, metrics) = run_experiment(&cfg)?;
            rows.push(SweepRow {
                variant,
                width,
                seed: base.seed,
                area: metrics.as_ref().and_then(|m| m.mean_area),
                one_sided: metrics.as_ref().is_none_or(|m| m.any_one_sided),
            });
        }
    }
    std::fs::create_dir_all(&base.out_dir)?;
    let mut w = csv::Writer::from_path(base.out_dir.join(SWEEP_FILE))?;
    w.write_record(["variant", "width", "seed", "area", "one_sided"])?;
    for r in &rows {
        w.write_record([
            r.variant.to_string(),
            r.width.to_string(),
            r.seed.to_string(),
            r.area.map_or_else(|| "NaN".to_string(), |a| a.to_string()),
            r.one_sided.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{EvalConfig, GeneratorConfig, TrainingConfig};
    use crate::generator::GammaRule;
    use crate::trainer::SplitFractions;

    fn config(dir: &Path, variant: Variant, data: DataSource) -> ExperimentConfig {
        ExperimentConfig {
            seed: 3,
            data,
            split: SplitFractions::default(),
            generator: GeneratorConfig {
                variant,
                noise_dim: 2,
                hidden_widths: vec![8, 8],
                gamma: GammaRule::Fixed { gamma: 2.0 },
                tail_side: TailSide::Magnitude,
                log_loss: true,
            },
            training: TrainingConfig {
                batch_size: 32,
                iterations: 20,
                learning_rates: vec![1e-3],
                validation_every: 10,
                validation_noise: 128,
            },
            eval: EvalConfig { samples: 2000, ccdf: true },
            out_dir: dir.to_path_buf(),
        }
    }

    #[test]
    fn experiment_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), Variant::Pareto, DataSource::CauchyMixture { n: 800, mixture: None });
        let (art, metrics) = run_experiment(&cfg).unwrap();
        for f in [CHECKPOINT_FILE, REPORT_FILE, LOSS_CURVES_FILE, TEST_FILE, METRICS_FILE, "ccdf_real_col0.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let loaded = Checkpoint::load(&dir.path().join(CHECKPOINT_FILE)).unwrap();
        assert_eq!(Some(loaded), art.best);
        let report: TrainSummary =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap()).unwrap();
        assert_eq!(report.n_test, 200);
        let m = metrics.unwrap();
        assert_eq!(m.n_generated, 2000);
        assert!((0.0..=1.0).contains(&m.columns[0].ks));
    }

    #[test]
    fn self_comparison_is_near_zero() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), Variant::Normal, DataSource::CauchyMixture { n: 800, mixture: None });
        let art = run_train(&cfg).unwrap();
        let ckpt = art.best.unwrap();
        let own = ckpt.sample(5000, &mut rng::stream(cfg.seed, streams::EVAL)).unwrap().samples;
        let opts = EvalOptions { samples: 5000, seed: cfg.seed, ..Default::default() };
        let m = evaluate(&ckpt, &own, &opts).unwrap();
        assert_eq!(m.columns[0].ks, 0.0);
        assert_eq!(m.mean_area, Some(0.0));
    }

    #[test]
    fn lognormal_on_positive_data_uses_log_space() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), Variant::Lognormal, DataSource::Gpd { n: 600, xi: 0.5 });
        let art = run_train(&cfg).unwrap();
        assert_eq!(art.summary.gspec.loss_space, crate::generator::LossSpace::Log);
        let dir2 = tempfile::tempdir().unwrap();
        let cfg = config(dir2.path(), Variant::Lognormal, DataSource::CauchyMixture { n: 600, mixture: None });
        let art = run_train(&cfg).unwrap();
        assert_eq!(art.summary.gspec.loss_space, crate::generator::LossSpace::Data);
    }

    #[test]
    fn manifold_experiment_reports_mdist() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(dir.path(), Variant::Pareto, DataSource::Manifold { c: 2, d: 4, n: 600 });
        cfg.generator.gamma = GammaRule::MaxTailPlusOne;
        let (art, m) = run_experiment(&cfg).unwrap();
        assert!(dir.path().join(MANIFOLD_FILE).exists());
        let m = m.unwrap();
        assert!(m.mean_log_mdist_real.unwrap() < -15.0);
        assert!(m.mean_log_mdist_generated.unwrap().is_finite());
        assert_eq!(art.summary.gspec.output_dim(), 4);
    }

    #[test]
    fn sweep_rows_match_independent_runs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), Variant::Pareto, DataSource::CauchyMixture { n: 600, mixture: None });
        let rows = run_sweep(&cfg, &[4, 8], &[Variant::Pareto, Variant::Normal]).unwrap();
        assert_eq!(rows.len(), 4);
        let text = std::fs::read_to_string(dir.path().join(SWEEP_FILE)).unwrap();
        assert_eq!(text.lines().count(), 5);

        let other = tempfile::tempdir().unwrap();
        let mut single = sweep_entry_config(&cfg, Variant::Normal, 8);
        single.out_dir = other.path().to_path_buf();
        let (_, m) = run_experiment(&single).unwrap();
        assert_eq!(rows[3].area, m.unwrap().mean_area);
    }

    #[test]
    fn reruns_are_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let src = DataSource::Joint2d { n: 500 };
        let (_, ma) = run_experiment(&config(a.path(), Variant::Pareto, src.clone())).unwrap();
        let (_, mb) = run_experiment(&config(b.path(), Variant::Pareto, src)).unwrap();
        assert_eq!(ma, mb);
        let read = |d: &Path| std::fs::read(d.join(METRICS_FILE)).unwrap();
        assert_eq!(read(a.path()), read(b.path()));
    }
}
