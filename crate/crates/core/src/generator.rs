//! Generator variants: a noise prior fed through the ReLU network and a
//! per-dimension output transform.
//!
//! | variant   | noise             | transform            |
//! |-----------|-------------------|----------------------|
//! | uniform   | U(0, 1]           | identity             |
//! | normal    | N(0, 1)           | identity             |
//! | lognormal | N(0, 1)           | `exp(x − 1)`         |
//! | pareto    | GPD(ξ = 1)        | `sign(x)·|x|^β_k`    |
//!
//! With ξ = 1 noise the network output has tail index 1 in every unbounded
//! direction, and the signed power with exponent `β_k` turns that into tail
//! index `β_k` for output dimension `k`.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpd;
use crate::matrix::SampleMatrix;
use crate::metric::MetricSpec;
use crate::net::{ForwardCache, NetParams, NetSpec};
use crate::rng::{self, Rng};
use crate::tailest::{XI_MAX, XI_MIN};

/// Largest argument passed to `exp` by the exp-shift transform.
pub const EXP_CAP: f64 = 700.0;
/// Lower clamp on `|x|` in the signed-power derivative.
pub const JACOBIAN_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    Uniform01,
    StandardNormal,
    Gpd { xi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub kind: NoiseKind,
    pub dim: usize,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::argument("noise dim must be >= 1"));
        }
        if let NoiseKind::Gpd { xi } = self.kind {
            if !xi.is_finite() {
                return Err(Error::argument(format!("noise tail index must be finite, got {xi}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Identity,
    ExpShift,
    SignedPower { beta: f64 },
}

impl Transform {
    #[inline]
    fn apply(self, x: f64, capped: &mut usize) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::ExpShift => {
                let a = x - 1.0;
                if a > EXP_CAP {
                    *capped += 1;
                    EXP_CAP.exp()
                } else {
                    a.exp()
                }
            }
            Transform::SignedPower { beta } => signed_power(x, beta),
        }
    }

    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::ExpShift => (x - 1.0).min(EXP_CAP).exp(),
            Transform::SignedPower { beta } => {
                if beta == 1.0 {
                    1.0
                } else {
                    beta * x.abs().max(JACOBIAN_CLAMP).powf(beta - 1.0)
                }
            }
        }
    }
}

/// Space in which the training loss compares samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossSpace {
    #[default]
    Data,
    /// Natural log of both sides; exp-shift outputs only, positive data only.
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub noise: NoiseSpec,
    pub net: NetSpec,
    /// One transform per output dimension.
    pub transform: Vec<Transform>,
    pub loss_metric: MetricSpec,
    #[serde(default)]
    pub loss_space: LossSpace,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.net.validate()?;
        self.loss_metric.validated()?;
        if self.net.input_dim != self.noise.dim {
            return Err(Error::argument(format!(
                "network input dim {} differs from noise dim {}",
                self.net.input_dim, self.noise.dim
            )));
        }
        if self.transform.len() != self.net.output_dim {
            return Err(Error::argument(format!(
                "{} output transforms for {} output dims",
                self.transform.len(),
                self.net.output_dim
            )));
        }
        for t in &self.transform {
            if let Transform::SignedPower { beta } = *t {
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(Error::argument(format!("signed power needs beta > 0, got {beta}")));
                }
            }
        }
        if self.loss_space == LossSpace::Log && self.transform.iter().any(|t| *t != Transform::ExpShift) {
            return Err(Error::argument("log loss space requires exp_shift on every output"));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.net.output_dim
    }
}

/// The four generator families compared in the univariate experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Uniform,
    Normal,
    Lognormal,
    Pareto,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Uniform, Variant::Normal, Variant::Lognormal, Variant::Pareto];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Uniform => "uniform",
            Variant::Normal => "normal",
            Variant::Lognormal => "lognormal",
            Variant::Pareto => "pareto",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::argument(format!("unknown variant '{s}' (expected uniform|normal|lognormal|pareto)")))
    }
}

/// How the root-metric exponent γ is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum GammaRule {
    /// `γ = max_k ξ̂_k + 1`.
    MaxTailPlusOne,
    Fixed {
        gamma: f64,
    },
}

impl GammaRule {
    pub fn gamma(self, xi_hats: &[f64]) -> f64 {
        match self {
            GammaRule::MaxTailPlusOne => xi_hats.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0,
            GammaRule::Fixed { gamma } => gamma,
        }
    }
}

/// Network body shared by every variant: noise dim and hidden widths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub noise_dim: usize,
    pub hidden_widths: Vec<usize>,
}

impl NetShape {
    pub fn net_spec(&self, output_dim: usize) -> Result<NetSpec> {
        NetSpec::new(self.noise_dim, self.hidden_widths.clone(), output_dim)
    }
}

/// `sign(x)·|x|^β`.
#[inline]
pub fn signed_power(x: f64, beta: f64) -> f64 {
    if beta == 1.0 {
        x
    } else if beta == 0.5 {
        x.abs().sqrt().copysign(x)
    } else {
        x.abs().powf(beta).copysign(x)
    }
}

/// `n` i.i.d. rows from the noise prior.
pub fn sample_noise(spec: &NoiseSpec, n: usize, rng: &mut Rng) -> Result<SampleMatrix> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::argument("sample count must be at least 1"));
    }
    let len = n * spec.dim;
    let data = match spec.kind {
        NoiseKind::Uniform01 => (0..len).map(|_| rng::uniform_left_open(rng)).collect(),
        NoiseKind::StandardNormal => (0..len).map(|_| StandardNormal.sample(rng)).collect(),
        NoiseKind::Gpd { xi } => gpd::sample_values(len, xi, rng)?,
    };
    Ok(SampleMatrix::from_raw(n, spec.dim, data))
}

/// Generated samples with the count of exp-shift outputs that hit the cap.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub samples: SampleMatrix,
    pub exp_cap_events: usize,
}

/// Per-dimension output transform of a raw network output.
pub fn apply_transform(gspec: &GeneratorSpec, raw: &SampleMatrix) -> Result<Generated> {
    if raw.ncols() != gspec.transform.len() {
        return Err(Error::argument("raw output width differs from transform arity"));
    }
    let d = raw.ncols();
    let mut capped = 0;
    let data =
        raw.as_slice().iter().enumerate().map(|(idx, &x)| gspec.transform[idx % d].apply(x, &mut capped)).collect();
    Ok(Generated { samples: SampleMatrix::from_raw(raw.nrows(), d, data), exp_cap_events: capped })
}

fn check_params(gspec: &GeneratorSpec, params: &NetParams) -> Result<()> {
    if !params.matches(&gspec.net) {
        return Err(Error::argument("network parameters do not match the generator spec"));
    }
    Ok(())
}

/// Push a given noise batch through the generator.
pub fn generate_from_noise(gspec: &GeneratorSpec, params: &NetParams, noise: &SampleMatrix) -> Result<Generated> {
    gspec.validate()?;
    check_params(gspec, params)?;
    let raw = params.forward(noise)?;
    apply_transform(gspec, &raw)
}

/// `n` samples: noise, network, output transform.
pub fn generate(gspec: &GeneratorSpec, params: &NetParams, n: usize, rng: &mut Rng) -> Result<SampleMatrix> {
    Ok(generate_counted(gspec, params, n, rng)?.samples)
}

/// [`generate`] that also reports exp-cap events.
pub fn generate_counted(gspec: &GeneratorSpec, params: &NetParams, n: usize, rng: &mut Rng) -> Result<Generated> {
    let noise = sample_noise(&gspec.noise, n, rng)?;
    generate_from_noise(gspec, params, &noise)
}

/// Pareto generator for estimated per-dimension tail indices, with
/// `γ = max ξ̂ + 1`.
pub fn build_pareto_generator(xi_hats: &[f64], net_shape: &NetSpec) -> Result<GeneratorSpec> {
    build_pareto_generator_with(xi_hats, net_shape, GammaRule::MaxTailPlusOne)
}

pub fn build_pareto_generator_with(xi_hats: &[f64], net_shape: &NetSpec, rule: GammaRule) -> Result<GeneratorSpec> {
    if xi_hats.is_empty() {
        return Err(Error::argument("at least one tail estimate is required"));
    }
    if let Some(x) = xi_hats.iter().find(|x| !(XI_MIN..=XI_MAX).contains(*x)) {
        return Err(Error::argument(format!("tail estimate {x} outside [{XI_MIN}, {XI_MAX}]")));
    }
    let net = NetSpec { output_dim: xi_hats.len(), ..net_shape.clone() };
    let spec = GeneratorSpec {
        noise: NoiseSpec { kind: NoiseKind::Gpd { xi: 1.0 }, dim: net.input_dim },
        net,
        transform: xi_hats.iter().map(|&beta| Transform::SignedPower { beta }).collect(),
        loss_metric: MetricSpec::root(rule.gamma(xi_hats))?,
        loss_space: LossSpace::Data,
    };
    spec.validate()?;
    Ok(spec)
}

/// Generator spec for one of the four variants. Non-Pareto variants use the
/// same root metric as the Pareto one so that only the generator differs.
/// `log_loss` selects the log loss space for the lognormal variant.
pub fn build_variant(
    variant: Variant,
    xi_hats: &[f64],
    shape: &NetShape,
    rule: GammaRule,
    log_loss: bool,
) -> Result<GeneratorSpec> {
    let net = shape.net_spec(xi_hats.len().max(1))?;
    if variant == Variant::Pareto {
        return build_pareto_generator_with(xi_hats, &net, rule);
    }
    if xi_hats.is_empty() {
        return Err(Error::argument("at least one tail estimate is required"));
    }
    let d = net.output_dim;
    let (kind, transform, loss_space) = match variant {
        Variant::Uniform => (NoiseKind::Uniform01, Transform::Identity, LossSpace::Data),
        Variant::Normal => (NoiseKind::StandardNormal, Transform::Identity, LossSpace::Data),
        Variant::Lognormal => {
            (NoiseKind::StandardNormal, Transform::ExpShift, if log_loss { LossSpace::Log } else { LossSpace::Data })
        }
        Variant::Pareto => unreachable!(),
    };
    let spec = GeneratorSpec {
        noise: NoiseSpec { kind, dim: shape.noise_dim },
        net,
        transform: vec![transform; d],
        loss_metric: MetricSpec::root(rule.gamma(xi_hats))?,
        loss_space,
    };
    spec.validate()?;
    Ok(spec)
}

/// Jacobian of the output transform evaluated at raw network outputs.
pub fn transform_jacobian(gspec: &GeneratorSpec, raw: &SampleMatrix) -> SampleMatrix {
    let d = raw.ncols();
    let data = raw.as_slice().iter().enumerate().map(|(i, &x)| gspec.transform[i % d].derivative(x)).collect();
    SampleMatrix::from_raw(raw.nrows(), d, data)
}

/// Generated samples as seen by the loss: the transformed output in data
/// space, or `ln(exp(x − 1)) = x − 1` computed directly in log space.
pub fn loss_space_output(gspec: &GeneratorSpec, raw: &SampleMatrix) -> Result<Generated> {
    match gspec.loss_space {
        LossSpace::Data => apply_transform(gspec, raw),
        LossSpace::Log => Ok(Generated { samples: raw.map(|x| x - 1.0), exp_cap_events: 0 }),
    }
}

/// Real samples mapped into the loss space.
pub fn loss_space_data(gspec: &GeneratorSpec, data: &SampleMatrix) -> Result<SampleMatrix> {
    match gspec.loss_space {
        LossSpace::Data => Ok(data.clone()),
        LossSpace::Log => {
            if data.as_slice().iter().any(|&x| x.is_nan() || x <= 0.0) {
                return Err(Error::domain("log loss space requires strictly positive data"));
            }
            Ok(data.map(f64::ln))
        }
    }
}

/// Multiply loss gradients by the loss-space Jacobian and backpropagate.
pub fn loss_grad_chain(
    gspec: &GeneratorSpec,
    params: &NetParams,
    cache: &ForwardCache,
    loss_grads: &SampleMatrix,
) -> Result<NetParams> {
    let upstream = match gspec.loss_space {
        LossSpace::Data => {
            let jac = transform_jacobian(gspec, cache.output());
            check_grads(loss_grads, &jac)?;
            let data = loss_grads.as_slice().iter().zip(jac.as_slice()).map(|(g, j)| g * j).collect();
            SampleMatrix::from_raw(jac.nrows(), jac.ncols(), data)
        }
        LossSpace::Log => {
            check_grads(loss_grads, cache.output())?;
            loss_grads.clone()
        }
    };
    params.backward(cache, &upstream)
}

fn check_grads(grads: &SampleMatrix, like: &SampleMatrix) -> Result<()> {
    if grads.nrows() != like.nrows() || grads.ncols() != like.ncols() {
        return Err(Error::argument(format!(
            "loss gradient is {}x{}, expected {}x{}",
            grads.nrows(),
            grads.ncols(),
            like.nrows(),
            like.ncols()
        )));
    }
    if !grads.is_finite() {
        return Err(Error::domain("non-finite loss gradient"));
    }
    Ok(())
}

/// Parameter gradients of `Σ_i ⟨loss_grads_i, T(f(z_i))⟩` for data-space
/// loss gradients.
pub fn generate_grad_chain(
    gspec: &GeneratorSpec,
    params: &NetParams,
    noise: &SampleMatrix,
    loss_grads: &SampleMatrix,
) -> Result<NetParams> {
    check_params(gspec, params)?;
    let cache = params.forward_cached(noise)?;
    let data_space = GeneratorSpec { loss_space: LossSpace::Data, ..gspec.clone() };
    loss_grad_chain(&data_space, params, &cache, loss_grads)
}
