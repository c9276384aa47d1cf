//! Heavy-tailed generative modelling with GPD noise and energy-distance
//! training, plus extreme-value estimation and tail-fidelity evaluation.

pub mod config;
pub mod energy;
pub mod error;
pub mod eval;
pub mod generator;
pub mod gpd;
pub mod matrix;
pub mod metric;
pub mod net;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod tailest;
pub mod trainer;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use matrix::SampleMatrix;
pub use metric::{MetricKind, MetricSpec};
