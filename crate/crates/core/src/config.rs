//! Experiment configuration documents.
//!
//! One JSON file describes the data source, split, generator family, training
//! schedule, evaluation options and output directory. Unknown keys are
//! rejected. The published schema lives in `docs/config.schema.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{GammaRule, NetShape, Variant};
use crate::synth::CauchyMixtureSpec;
use crate::tailest::TailSide;
use crate::trainer::{SplitFractions, DEFAULT_VALIDATION_EVERY, DEFAULT_VALIDATION_NOISE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(default)]
        columns: Option<Vec<usize>>,
        #[serde(default = "default_delimiter")]
        delimiter: char,
    },
    CauchyMixture {
        n: usize,
        #[serde(default)]
        mixture: Option<CauchyMixtureSpec>,
    },
    Joint2d {
        n: usize,
    },
    Manifold {
        c: usize,
        d: usize,
        n: usize,
    },
    Gpd {
        n: usize,
        xi: f64,
    },
}

fn default_delimiter() -> char {
    ','
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub variant: Variant,
    #[serde(default = "default_noise_dim")]
    pub noise_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden_widths: Vec<usize>,
    #[serde(default = "default_gamma")]
    pub gamma: GammaRule,
    /// Side of each column used to estimate its tail index.
    #[serde(default = "default_tail_side")]
    pub tail_side: TailSide,
    /// Train the lognormal variant in log space when the training data are
    /// strictly positive.
    #[serde(default = "default_true")]
    pub log_loss: bool,
}

fn default_noise_dim() -> usize {
    4
}

fn default_hidden() -> Vec<usize> {
    vec![32, 32, 32]
}

fn default_gamma() -> GammaRule {
    GammaRule::Fixed { gamma: 2.0 }
}

fn default_tail_side() -> TailSide {
    TailSide::Magnitude
}

fn default_true() -> bool {
    true
}

impl GeneratorConfig {
    pub fn shape(&self) -> NetShape {
        NetShape { noise_dim: self.noise_dim, hidden_widths: self.hidden_widths.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub iterations: usize,
    #[serde(default = "default_lrs")]
    pub learning_rates: Vec<f64>,
    #[serde(default = "default_validation_every")]
    pub validation_every: usize,
    #[serde(default = "default_validation_noise")]
    pub validation_noise: usize,
}

fn default_batch() -> usize {
    256
}

fn default_lrs() -> Vec<f64> {
    vec![1e-4, 1e-5, 1e-6]
}

fn default_validation_every() -> usize {
    DEFAULT_VALIDATION_EVERY
}

fn default_validation_noise() -> usize {
    DEFAULT_VALIDATION_NOISE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Generated samples drawn for evaluation.
    #[serde(default = "default_eval_samples")]
    pub samples: usize,
    /// Write CCDF curves of real and generated samples.
    #[serde(default = "default_true")]
    pub ccdf: bool,
}

fn default_eval_samples() -> usize {
    100_000
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { samples: default_eval_samples(), ccdf: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSource,
    #[serde(default)]
    pub split: SplitFractions,
    pub generator: GeneratorConfig,
    pub training: TrainingConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        // relative CSV paths are relative to the config file
        if let DataSource::Csv { path: p, .. } = &mut cfg.data {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.split.validate().map_err(|e| Error::Config(e.to_string()))?;
        match &self.data {
            DataSource::Csv { delimiter, .. } if !delimiter.is_ascii() => {
                return bad(format!("delimiter must be a single ASCII character, got {delimiter:?}"));
            }
            DataSource::CauchyMixture { n, mixture } => {
                if *n < 3 {
                    return bad("data.n must be >= 3".into());
                }
                if let Some(m) = mixture {
                    m.validate().map_err(|e| Error::Config(e.to_string()))?;
                }
            }
            DataSource::Joint2d { n } | DataSource::Gpd { n, .. } if *n < 3 => {
                return bad("data.n must be >= 3".into());
            }
            DataSource::Manifold { c, d, n } if *c == 0 || c >= d || *n < 3 => {
                return bad(format!("manifold needs 1 <= c < d and n >= 3, got c={c}, d={d}, n={n}"));
            }
            _ => {}
        }
        let g = &self.generator;
        if g.noise_dim == 0 || g.hidden_widths.is_empty() || g.hidden_widths.contains(&0) {
            return bad("generator needs noise_dim >= 1 and non-empty positive hidden_widths".into());
        }
        if let GammaRule::Fixed { gamma } = g.gamma {
            if !(gamma >= 1.0 && gamma.is_finite()) {
                return bad(format!("gamma must be >= 1, got {gamma}"));
            }
        }
        let t = &self.training;
        if t.batch_size < 2 || t.iterations == 0 || t.validation_every == 0 || t.validation_noise < 2 {
            return bad(
                "training needs batch_size >= 2, iterations >= 1, validation_every >= 1, validation_noise >= 2".into(),
            );
        }
        if t.learning_rates.is_empty() || t.learning_rates.iter().any(|lr| !(*lr > 0.0 && lr.is_finite())) {
            return bad("training.learning_rates must be a non-empty list of positive numbers".into());
        }
        if self.eval.samples < 2 {
            return bad("eval.samples must be >= 2".into());
        }
        Ok(())
    }
}
