//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test -p tailgan-cli --test acceptance` runs the quick criteria
//! (1, 2, 3). Set `TAILGAN_ACCEPTANCE=full` to run all nine, or pass
//! criterion numbers after `--` to pick some. The exit status is non-zero on
//! any FAIL only when `TAILGAN_ACCEPTANCE_STRICT=1`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use serde_json::json;
use tailgan::config::{DataSource, EvalConfig, GeneratorConfig, TrainingConfig};
use tailgan::eval::ks_statistic_vs_cdf;
use tailgan::generator::{GammaRule, Variant};
use tailgan::gpd::{self, GpdParams};
use tailgan::pipeline::{self, EvalMetrics, TrainArtifacts};
use tailgan::rng::{self, streams};
use tailgan::synth::{self, CauchyMixtureSpec};
use tailgan::tailest::TailSide;
use tailgan::trainer::SplitFractions;
use tailgan::{ExperimentConfig, MetricSpec, SampleMatrix};

const QUICK: &[u32] = &[1, 2, 3];
const SEEDS: [u64; 3] = [1, 2, 3];

/// Number, name, check and runtime limit in seconds.
type Criterion = (u32, &'static str, fn(&mut Lab) -> Outcome, Option<f64>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Trained-and-evaluated experiments, keyed by configuration, so criteria
/// sharing a configuration train it once.
struct Lab {
    root: tempfile::TempDir,
    runs: HashMap<String, (TrainArtifacts, EvalMetrics, f64)>,
    fresh: usize,
    /// Training seconds of cached runs reused by the current criterion.
    reused_secs: f64,
}

impl Lab {
    fn new() -> Self {
        Self { root: tempfile::tempdir().expect("tempdir"), runs: HashMap::new(), fresh: 0, reused_secs: 0.0 }
    }

    fn key(cfg: &ExperimentConfig) -> String {
        let mut c = cfg.clone();
        c.out_dir = PathBuf::new();
        serde_json::to_string(&c).unwrap()
    }

    fn out_dir(&mut self) -> PathBuf {
        self.fresh += 1;
        self.root.path().join(format!("run{}", self.fresh))
    }

    /// Train and evaluate without consulting the cache.
    fn run_fresh(&mut self, cfg: &ExperimentConfig) -> (TrainArtifacts, EvalMetrics) {
        let mut c = cfg.clone();
        c.out_dir = self.out_dir();
        let (art, metrics) = pipeline::run_experiment(&c).expect("experiment runs");
        let metrics = metrics.unwrap_or_else(|| panic!("every run diverged for {}", Self::key(cfg)));
        (art, metrics)
    }

    fn run(&mut self, cfg: &ExperimentConfig) -> (&TrainArtifacts, &EvalMetrics) {
        let key = Self::key(cfg);
        match self.runs.get(&key) {
            Some(r) => self.reused_secs += r.2,
            None => {
                let t = Instant::now();
                let (art, metrics) = self.run_fresh(cfg);
                self.runs.insert(key.clone(), (art, metrics, t.elapsed().as_secs_f64()));
            }
        }
        let (art, metrics, _) = &self.runs[&key];
        (art, metrics)
    }
}

fn experiment(seed: u64, data: DataSource, generator: GeneratorConfig, iterations: usize) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        data,
        split: SplitFractions::default(),
        generator,
        training: TrainingConfig {
            batch_size: 256,
            iterations,
            learning_rates: vec![1e-4, 1e-5, 1e-6],
            validation_every: 500,
            validation_noise: 4096,
        },
        eval: EvalConfig { samples: 100_000, ccdf: false },
        out_dir: PathBuf::new(),
    }
}

fn generator(variant: Variant, noise_dim: usize, width: usize, gamma: GammaRule) -> GeneratorConfig {
    GeneratorConfig {
        variant,
        noise_dim,
        hidden_widths: vec![width; 3],
        gamma,
        tail_side: TailSide::Magnitude,
        log_loss: true,
    }
}

/// Default Cauchy mixture with 20,000 training rows.
fn mixture_experiment(seed: u64, variant: Variant, width: usize) -> ExperimentConfig {
    let data = DataSource::CauchyMixture { n: 40_000, mixture: None };
    experiment(seed, data, generator(variant, 4, width, GammaRule::Fixed { gamma: 2.0 }), 5_000)
}

fn joint2d_experiment(seed: u64) -> ExperimentConfig {
    let g = generator(Variant::Pareto, 4, 32, GammaRule::MaxTailPlusOne);
    experiment(seed, DataSource::Joint2d { n: 20_000 }, g, 20_000)
}

fn manifold_experiment(seed: u64, variant: Variant, gamma: GammaRule) -> ExperimentConfig {
    let data = DataSource::Manifold { c: 5, d: 20, n: 20_000 };
    experiment(seed, data, generator(variant, 10, 64, gamma), 20_000)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("none".into(), |x| format!("{x:.4}"))
}

fn cargo_test(args: &[&str]) -> Result<Duration, String> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let run = |extra: &[&str]| {
        Command::new(env!("CARGO"))
            .arg("test")
            .args(args)
            .args(extra)
            .current_dir(&root)
            .output()
            .map_err(|e| e.to_string())
    };
    let build = run(&["--no-run"])?;
    if !build.status.success() {
        return Err(format!("build failed: {}", String::from_utf8_lossy(&build.stderr)));
    }
    let t = Instant::now();
    let out = run(&[])?;
    if out.status.success() {
        Ok(t.elapsed())
    } else {
        let failing: Vec<String> = String::from_utf8_lossy(&out.stdout)
            .lines()
            .filter(|l| l.ends_with("FAILED"))
            .map(str::to_string)
            .collect();
        Err(format!("failing tests: {failing:?}"))
    }
}

/// Every worked example and brute-force oracle in the unit, property and
/// CLI test suites.
fn criterion1(_: &mut Lab) -> Outcome {
    let core = cargo_test(&["-p", "tailgan"]);
    let cli = cargo_test(&["-p", "tailgan-cli", "--test", "cli"]);
    match (core, cli) {
        (Ok(a), Ok(b)) => {
            let elapsed = a + b;
            outcome(
                elapsed < Duration::from_secs(120),
                format!("library, property, schema and CLI suites green in {:.1}s (limit 120s)", elapsed.as_secs_f64()),
            )
        }
        (a, b) => outcome(false, format!("library: {a:?}; cli: {b:?}")),
    }
}

fn gpd_ks(seed: u64) -> Vec<(f64, f64)> {
    [0.0, 0.5, 1.0, 2.0]
        .iter()
        .map(|&xi| {
            let s = gpd::sample(1_000_000, xi, &mut rng::stream(rng::derive_seed(seed, xi.to_bits()), streams::DATA))
                .unwrap();
            let p = GpdParams::standard(xi).unwrap();
            let ks = ks_statistic_vs_cdf(s.as_slice(), |z| 1.0 - gpd::ccdf(z, p).unwrap().value()).unwrap();
            (xi, ks)
        })
        .collect()
}

fn criterion2(_: &mut Lab) -> Outcome {
    let ks = gpd_ks(2);
    let worst = ks.iter().map(|k| k.1).fold(0.0, f64::max);
    let listing: Vec<String> = ks.iter().map(|(xi, d)| format!("xi={xi}: {d:.5}")).collect();
    outcome(worst < 0.005, format!("KS vs analytic CDF at n=1e6: {} (limit 0.005)", listing.join(", ")))
}

/// Relative change of the running mean of `terms` between 10% and 100% of
/// the stream, and the share of the total held by the largest term.
fn running_mean_stats(terms: &[f64]) -> (f64, f64) {
    let tenth = terms.len() / 10;
    let early: f64 = terms[..tenth].iter().sum::<f64>() / tenth as f64;
    let total: f64 = terms.iter().sum();
    let full = total / terms.len() as f64;
    let max = terms.iter().copied().fold(0.0, f64::max);
    ((full - early).abs() / full, max / total)
}

fn criterion3(_: &mut Lab) -> Outcome {
    let root = MetricSpec::root(2.0).unwrap();
    let euclid = MetricSpec::euclidean();
    let (mut stable, mut dominated) = (0, 0);
    let mut shares = Vec::new();
    let mut changes = Vec::new();
    for seed in 0..10u64 {
        let z = gpd::sample(1_000_000, 1.0, &mut rng::stream(seed, streams::DATA)).unwrap();
        let terms: Vec<f64> = z.as_slice().iter().map(|&v| root.value_of_distance(v)).collect();
        let (change, _) = running_mean_stats(&terms);
        stable += usize::from(change < 0.05);
        changes.push(change);

        let z = gpd::sample(1_000_000, 1.5, &mut rng::stream(seed, streams::NOISE)).unwrap();
        let terms: Vec<f64> = z.as_slice().iter().map(|&v| euclid.value_of_distance(v)).collect();
        let (_, share) = running_mean_stats(&terms);
        dominated += usize::from(share > 0.5);
        shares.push(share);
    }
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    outcome(
        stable >= 8 && dominated >= 8,
        format!(
            "gamma=2 at xi=1 stable on {stable}/10 (last-decade change: {}); euclidean at xi=1.5 max-term share > 0.5 on {dominated}/10 (shares: {}); need 8/10 each",
            fmt(&changes),
            fmt(&shares)
        ),
    )
}

fn criterion4(lab: &mut Lab) -> Outcome {
    let seed = SEEDS[0];
    let (art, _) = lab.run(&mixture_experiment(seed, Variant::Uniform, 32));
    let ckpt = art.best.as_ref().expect("checkpoint");
    let k = ckpt.params.lipschitz_upper_bound();
    let noise_dim = ckpt.gspec.noise.dim;
    let f0 = ckpt.params.forward(&SampleMatrix::zeros(1, noise_dim)).unwrap().get(0, 0);
    let bound = (f0.abs() + k * (noise_dim as f64).sqrt()) * ckpt.scale[0];

    let generated = ckpt.sample(1_000_000, &mut rng::stream(seed, streams::EVAL)).unwrap().samples;
    let gen_max = generated.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let real = synth::sample_cauchy_mixture(
        &CauchyMixtureSpec::default(),
        1_000_000,
        &mut rng::stream(rng::derive_seed(seed, 4), streams::DATA),
    )
    .unwrap();
    let real_max = real.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    outcome(
        gen_max <= bound && real_max > bound,
        format!("bound {bound:.4e} (Lipschitz {k:.4e}); generated max |x| {gen_max:.4e}; real max {real_max:.4e}"),
    )
}

fn ordering_seed(lab: &mut Lab, seed: u64) -> (bool, bool, String) {
    let mut keys = Vec::new();
    for v in Variant::ALL {
        let (_, m) = lab.run(&mixture_experiment(seed, v, 32));
        keys.push((v, m.ranking_key(), m.columns[0].gen_tail_upper.map(|t| t.xi_hat)));
    }
    let best = keys.iter().min_by(|a, b| a.1.partial_cmp(&b.1).unwrap()).unwrap().0;
    let pareto_hill = keys.iter().find(|k| k.0 == Variant::Pareto).unwrap().2;
    let hill_ok = pareto_hill.is_some_and(|h| (h - 1.0).abs() <= 0.4);
    let listing: Vec<String> = keys
        .iter()
        .map(|(v, (one_sided, area), _)| format!("{v}={area:.4}{}", if *one_sided { "(one-sided)" } else { "" }))
        .collect();
    let detail = format!("seed {seed}: {} pareto upper hill {}", listing.join(" "), fmt_opt(pareto_hill));
    (best == Variant::Pareto, hill_ok, detail)
}

fn criterion5(lab: &mut Lab) -> Outcome {
    let mut good = 0;
    let mut details = Vec::new();
    for seed in SEEDS {
        let (smallest, hill, d) = ordering_seed(lab, seed);
        good += usize::from(smallest && hill);
        details.push(d);
    }
    outcome(good >= 2, format!("pareto smallest area with hill in 1±0.4 on {good}/3 seeds; {}", details.join("; ")))
}

fn area(lab: &mut Lab, seed: u64, v: Variant, width: usize) -> f64 {
    lab.run(&mixture_experiment(seed, v, width)).1.mean_area.unwrap_or(f64::INFINITY)
}

fn criterion6(lab: &mut Lab) -> Outcome {
    let mut good = 0;
    let mut details = Vec::new();
    for seed in SEEDS {
        let mut row = Vec::new();
        for v in [Variant::Pareto, Variant::Normal] {
            let a: Vec<f64> = [8, 32, 128].iter().map(|&w| area(lab, seed, v, w)).collect();
            row.push(a);
        }
        let (p, n) = (&row[0], &row[1]);
        let pareto_ok = p[1] <= 2.0 * p[2] && p[2] <= 2.0 * p[1];
        let normal_ok = n[1] > 2.0 * n[2];
        good += usize::from(pareto_ok && normal_ok);
        details.push(format!(
            "seed {seed}: pareto w8/32/128 {:.4}/{:.4}/{:.4}, normal {:.4}/{:.4}/{:.4}",
            p[0], p[1], p[2], n[0], n[1], n[2]
        ));
    }
    outcome(good >= 2, format!("trend holds on {good}/3 seeds; {}", details.join("; ")))
}

fn joint2d_tails(m: &EvalMetrics) -> Vec<Option<f64>> {
    m.columns.iter().map(|c| c.gen_tail_magnitude.map(|t| t.xi_hat)).collect()
}

fn criterion7(lab: &mut Lab) -> Outcome {
    let target = [1.0, 0.5];
    let mut good = 0;
    let mut details = Vec::new();
    for seed in SEEDS {
        let tails = joint2d_tails(lab.run(&joint2d_experiment(seed)).1);
        let ok = tails.iter().zip(target).all(|(t, x)| t.is_some_and(|t| (t - x).abs() <= 0.3));
        good += usize::from(ok);
        details.push(format!("seed {seed}: ({}, {})", fmt_opt(tails[0]), fmt_opt(tails[1])));
    }
    outcome(good >= 2, format!("tails within 0.3 of (1, 0.5) on {good}/3 seeds; {}", details.join("; ")))
}

fn criterion8(lab: &mut Lab) -> Outcome {
    let (mut better, mut failures) = (0, 0);
    let mut details = Vec::new();
    for seed in SEEDS {
        let root = lab.run(&manifold_experiment(seed, Variant::Pareto, GammaRule::MaxTailPlusOne)).1.clone();
        let normal = lab.run(&manifold_experiment(seed, Variant::Normal, GammaRule::MaxTailPlusOne)).1.clone();
        let ed = lab.run(&manifold_experiment(seed, Variant::Pareto, GammaRule::Fixed { gamma: 1.0 })).1.clone();
        let area = |m: &EvalMetrics| m.mean_area.unwrap_or(f64::INFINITY);
        let mdist = |m: &EvalMetrics| m.mean_log_mdist_generated.unwrap_or(f64::INFINITY);
        let wins = area(&root) < area(&normal) && mdist(&root) < mdist(&normal);
        better += usize::from(wins);
        failures += usize::from(ed.any_one_sided);
        details.push(format!(
            "seed {seed}: area root/normal/ed {:.4}/{:.4}/{:.4}, log mdist {:.3}/{:.3}/{:.3}, ed one-sided {}",
            area(&root),
            area(&normal),
            area(&ed),
            mdist(&root),
            mdist(&normal),
            mdist(&ed),
            ed.any_one_sided
        ));
    }
    outcome(
        better >= 2 && failures >= 1,
        format!("root-ED beats normal on {better}/3 seeds, ED one-sided on {failures}/3; {}", details.join("; ")),
    )
}

fn criterion9(lab: &mut Lab) -> Outcome {
    let mut mismatches = Vec::new();
    let a = serde_json::to_string(&gpd_ks(2)).unwrap();
    let b = serde_json::to_string(&gpd_ks(2)).unwrap();
    if a != b {
        mismatches.push("gpd".to_string());
    }
    let mut configs: Vec<ExperimentConfig> = Vec::new();
    for seed in SEEDS {
        configs.extend(Variant::ALL.iter().map(|&v| mixture_experiment(seed, v, 32)));
        configs.push(joint2d_experiment(seed));
    }
    for cfg in &configs {
        let first = serde_json::to_string(lab.run(cfg).1).unwrap();
        let again = serde_json::to_string(&lab.run_fresh(cfg).1).unwrap();
        if first != again {
            mismatches.push(format!("{} seed {} data {:?}", cfg.generator.variant, cfg.seed, cfg.data));
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("{} metric documents compared bitwise; mismatches: {mismatches:?}", configs.len() + 1),
    )
}

fn main() {
    let requested: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let full = std::env::var("TAILGAN_ACCEPTANCE").is_ok_and(|v| v == "full");
    let strict = std::env::var("TAILGAN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    // runtime limits in seconds; criterion 1 times its own test phase
    let criteria: [Criterion; 9] = [
        (1, "analytic oracles", criterion1, None),
        (2, "GPD sampling", criterion2, Some(60.0)),
        (3, "root-metric finiteness", criterion3, Some(60.0)),
        (4, "uniform-noise hard cutoff", criterion4, Some(600.0)),
        (5, "four-variant ordering", criterion5, Some(2700.0)),
        (6, "width sweep", criterion6, Some(5400.0)),
        (7, "2-D joint tails", criterion7, Some(1800.0)),
        (8, "manifold comparison", criterion8, Some(7200.0)),
        (9, "determinism", criterion9, None),
    ];
    let mut lab = Lab::new();
    let mut failed = 0;
    let mut report = Vec::new();
    for (n, name, run, limit) in criteria {
        let selected = if requested.is_empty() { full || QUICK.contains(&n) } else { requested.contains(&n) };
        if !selected {
            let why = if requested.is_empty() { "set TAILGAN_ACCEPTANCE=full" } else { "not requested" };
            println!("criterion {n} ({name}): SKIP ({why})");
            continue;
        }
        lab.reused_secs = 0.0;
        let t = Instant::now();
        let mut o = run(&mut lab);
        let secs = t.elapsed().as_secs_f64() + lab.reused_secs;
        if let Some(limit) = limit {
            o.detail = format!("{}; runtime {secs:.0}s (limit {limit:.0}s)", o.detail);
            o.pass &= secs < limit;
        }
        failed += usize::from(!o.pass);
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} ({name}): {verdict} [{secs:.1}s] {}", o.detail);
        report.push(json!({"criterion": n, "name": name, "pass": o.pass, "seconds": secs, "detail": o.detail}));
    }
    if let Ok(path) = std::env::var("TAILGAN_ACCEPTANCE_REPORT") {
        std::fs::write(&path, serde_json::to_string_pretty(&report).unwrap()).expect("write report");
    }
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
