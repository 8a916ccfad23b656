//! Batch experiment driver behind the `pbdp` command-line tool.
//!
//! Commands return an [`Output`] instead of printing, so the same code paths
//! are exercised by tests and by the binary.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::{assemble_theorem_bound, bernoulli_kappa, bound_shape, default_partition, DEFAULT_U};
use crate::carrier::{d1, CarrierSpace, DiscreteMeasure, PartitionScheme, PointPattern};
use crate::chain::{
    detailed_balance_residual, k_bounds_check, ratio_chain_violations, stationary, stein_c_bound, BirthDeathParams,
};
use crate::distance::{coupling_bound, empirical_d2, enumerate_pbdp_auto, exact_d2_small, ConfigDistribution, D2Estimate};
use crate::error::{Error, Result};
use crate::fitting::{fit_model, poisson_fit};
use crate::models::ModelSpec;
use crate::process::{estimate_first_differences, sample_pbdp, PbdpSpec};
use crate::stats::{par_replicates, MeanEstimate, Rng};

/// One side of a distance computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Model(ModelSpec),
    Pbdp(PbdpSpec),
    /// The moment fit of the configured model.
    Fitted,
    /// The Poisson process with the configured model's mean measure.
    Poisson,
}

/// Parameters shared by all commands; command-line flags override the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Option<ModelSpec>,
    pub left: Option<Side>,
    pub right: Option<Side>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub n_samples: Option<usize>,
    pub out: Option<PathBuf>,
    pub partition: Option<String>,
    pub u: Option<f64>,
    /// Grid values for sweeps (`n` for bernoulli, `p` for runs, scale for cp).
    pub grid: Option<Vec<f64>>,
    /// Fixed success probability for the bernoulli sweep.
    pub p: Option<f64>,
    /// Fixed site count for the runs sweep.
    pub n: Option<usize>,
    /// Fixed run length for the runs sweep.
    pub k: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidParameter(format!("bad config {}: {e}", path.display())))
    }

    fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::InvalidParameter("this command needs --seed".into()))
    }

    fn model(&self) -> Result<&ModelSpec> {
        self.model.as_ref().ok_or_else(|| Error::InvalidParameter("this command needs --model".into()))
    }

    fn u(&self) -> f64 {
        self.u.unwrap_or(DEFAULT_U)
    }

    fn partition_for(&self, model: &ModelSpec) -> Result<PartitionScheme> {
        parse_partition(self.partition.as_deref().unwrap_or("default"), model)
    }
}

/// Inline JSON when the text starts with `{`, else a path to a JSON file.
pub fn parse_model(text: &str) -> Result<ModelSpec> {
    let body = if text.trim_start().starts_with('{') {
        text.to_string()
    } else {
        std::fs::read_to_string(text).map_err(|e| Error::InvalidParameter(format!("cannot read model {text}: {e}")))?
    };
    serde_json::from_str(&body).map_err(|e| Error::InvalidParameter(format!("bad model spec: {e}")))
}

/// `default`, `singletons`, `blocks:W` (W sites per block) or `cells:K`
/// (K equal blocks).
pub fn parse_partition(text: &str, model: &ModelSpec) -> Result<PartitionScheme> {
    let bad = || Error::InvalidParameter(format!("bad partition '{text}'"));
    match text.split_once(':') {
        None if text == "default" => default_partition(model),
        None if text == "singletons" => PartitionScheme::singletons(model.space(), &model.sites()),
        Some((kind, arg)) => {
            let v: usize = arg.parse().map_err(|_| bad())?;
            let n = model.n().ok_or_else(|| Error::Unsupported("block partitions need a lattice model".into()))?;
            match kind {
                "blocks" => PartitionScheme::blocks(model.space(), n, v),
                "cells" => PartitionScheme::blocks(model.space(), n, n / v.clamp(1, n)),
                _ => Err(bad()),
            }
        }
        None => Err(bad()),
    }
}

/// Result of a command: main text, auxiliary files, exit status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub text: String,
    pub files: Vec<(PathBuf, String)>,
    pub exit_code: i32,
}

impl Output {
    fn new(cfg: &ExperimentConfig, text: String) -> Self {
        let mut out = Self {
            text: String::new(),
            files: Vec::new(),
            exit_code: 0,
        };
        match &cfg.out {
            Some(path) => out.files.push((path.clone(), text)),
            None => out.text = text,
        }
        out
    }

    /// Write auxiliary files and return the text meant for standard output.
    pub fn commit(&self) -> Result<&str> {
        for (path, body) in &self.files {
            std::fs::write(path, body).map_err(|e| Error::InvalidParameter(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(&self.text)
    }
}

/// Machine-readable error object.
pub fn error_json(e: &Error) -> String {
    serde_json::json!({ "error": e.kind(), "message": e.to_string() }).to_string()
}

fn csv_string<S: Serialize>(rows: &[S]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

enum Resolved {
    Model(ModelSpec),
    Pbdp(PbdpSpec),
}

impl Resolved {
    fn space(&self) -> CarrierSpace {
        match self {
            Resolved::Model(m) => m.space(),
            Resolved::Pbdp(p) => p.space().clone(),
        }
    }

    fn sample(&self, rng: &mut Rng) -> PointPattern {
        match self {
            Resolved::Model(m) => m.sample(rng),
            Resolved::Pbdp(p) => sample_pbdp(p, rng),
        }
    }

    fn exact_law(&self) -> Option<ConfigDistribution> {
        match self {
            Resolved::Model(m) if m.n().is_some_and(|n| n <= 13) => ConfigDistribution::from_model(m).ok(),
            Resolved::Model(_) => None,
            Resolved::Pbdp(p) => enumerate_pbdp_auto(p).ok(),
        }
    }
}

fn resolve(side: &Side, cfg: &ExperimentConfig) -> Result<Resolved> {
    Ok(match side {
        Side::Model(m) => Resolved::Model(m.clone()),
        Side::Pbdp(p) => Resolved::Pbdp(p.clone()),
        Side::Fitted => Resolved::Pbdp(fit_model(cfg.model()?)?.spec),
        Side::Poisson => Resolved::Pbdp(poisson_fit(cfg.model()?)?),
    })
}

fn default_left(cfg: &ExperimentConfig) -> Result<Side> {
    match &cfg.left {
        Some(s) => Ok(s.clone()),
        None => Ok(Side::Model(cfg.model()?.clone())),
    }
}

/// `fit`: the moment fit as JSON.
pub fn cmd_fit(cfg: &ExperimentConfig) -> Result<Output> {
    let fit = fit_model(cfg.model()?)?;
    let mut v = fit.to_json();
    v["model"] = cfg.model()?.name().into();
    Ok(Output::new(cfg, format!("{v}\n")))
}

/// `sample`: `reps` configurations from the left side, one JSON line each.
pub fn cmd_sample(cfg: &ExperimentConfig) -> Result<Output> {
    let seed = cfg.seed()?;
    let reps = cfg.reps.unwrap_or(10);
    let side = resolve(&default_left(cfg)?, cfg)?;
    let lines: Vec<String> = par_replicates(seed, reps, |rng, _| side.sample(rng).to_json_line());
    let mut text = lines.join("\n");
    text.push('\n');
    Ok(Output::new(cfg, text))
}

#[derive(Debug, Clone, Serialize)]
pub struct D2Row {
    pub method: &'static str,
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl D2Row {
    pub fn new(e: &D2Estimate, seed: u64) -> Self {
        Self {
            method: e.method.as_str(),
            value: e.value,
            stderr: e.stderr,
            n_samples: e.n_samples,
            seed,
        }
    }
}

/// `d2`: empirical estimate between the two sides, plus the exact value
/// when both laws can be enumerated and the coupling bound when both are PBDPs.
pub fn cmd_d2(cfg: &ExperimentConfig) -> Result<Output> {
    let seed = cfg.seed()?;
    let n_samples = cfg.n_samples.unwrap_or(400);
    let left = resolve(&default_left(cfg)?, cfg)?;
    let right = resolve(cfg.right.as_ref().unwrap_or(&Side::Fitted), cfg)?;
    let space = left.space();
    if space != right.space() {
        return Err(Error::IncompatibleSpaces);
    }
    let mut rows = vec![D2Row::new(
        &empirical_d2(&space, |r| left.sample(r), seed, |r| right.sample(r), seed, n_samples)?,
        seed,
    )];
    if let (Some(l), Some(r)) = (left.exact_law(), right.exact_law()) {
        rows.push(D2Row::new(&exact_d2_small(&l, &r)?, seed));
    }
    if let (Resolved::Pbdp(l), Resolved::Pbdp(r)) = (&left, &right) {
        let e = D2Estimate::exact(coupling_bound(l, r)?, crate::distance::D2Method::CouplingBound);
        rows.push(D2Row::new(&e, seed));
    }
    Ok(Output::new(cfg, csv_string(&rows)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Chain,
    Stein,
    Palm,
    Bounds,
    All,
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "chain" => Suite::Chain,
            "stein" => Suite::Stein,
            "palm" => Suite::Palm,
            "bounds" => Suite::Bounds,
            "all" => Suite::All,
            _ => return Err(Error::InvalidParameter(format!("unknown suite '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub suite: &'static str,
    pub check: String,
    pub observed: f64,
    pub required: f64,
    pub pass: bool,
}

fn at_most(suite: &'static str, check: String, observed: f64, required: f64) -> CheckRow {
    CheckRow {
        suite,
        check,
        observed,
        required,
        pass: observed <= required,
    }
}

/// Twenty rate triples covering pure immigration, births and kills.
pub fn parameter_grid() -> Vec<BirthDeathParams> {
    let mut out = Vec::new();
    for a in [0.5, 1.0, 3.0, 8.0] {
        for (b, beta) in [(0.0, 0.0), (0.3, 0.0), (0.7, 0.0), (0.0, 0.5), (0.0, 2.0)] {
            out.push(BirthDeathParams::new(a, b, beta).expect("valid grid"));
        }
    }
    out
}

fn label(p: &BirthDeathParams) -> String {
    format!("a={},b={},beta={}", p.a(), p.b(), p.beta())
}

/// Deterministic checks of the chain: reductions, detailed balance, the
/// ratio chain, and the death-count inequalities for `m <= 100`.
pub fn chain_suite() -> Result<Vec<CheckRow>> {
    const S: &str = "chain";
    let mut rows = Vec::new();
    let pois = stationary(&BirthDeathParams::poisson(2.0)?, 1e-15)?;
    let mut term = (-2.0f64).exp();
    let mut worst: f64 = 0.0;
    for k in 0..=50 {
        worst = worst.max((pois.pmf(k) - term).abs());
        term *= 2.0 / (k + 1) as f64;
    }
    rows.push(at_most(S, "poisson_reduction_sup".into(), worst, 1e-12));
    let nb = stationary(&BirthDeathParams::new(1.0, 0.5, 0.0)?, 1e-15)?;
    let worst = (0..=50)
        .map(|k| (nb.pmf(k) - (k + 1) as f64 * 0.5f64.powi(k as i32 + 2)).abs())
        .fold(0.0, f64::max);
    rows.push(at_most(S, "negative_binomial_reduction_sup".into(), worst, 1e-12));
    for p in parameter_grid() {
        let dist = stationary(&p, 1e-12)?;
        rows.push(at_most(S, format!("detailed_balance[{}]", label(&p)), detailed_balance_residual(&p, &dist), 1e-12));
        rows.push(at_most(S, format!("ratio_chain_violations[{}]", label(&p)), ratio_chain_violations(&p, &dist, 1e-12).len() as f64, 0.0));
        rows.push(at_most(S, format!("k_bound_violations[{}]", label(&p)), k_bounds_check(&p, 100)?.violations.len() as f64, 0.0));
    }
    Ok(rows)
}

/// Ten functions with `|f(ξ) - f(η)| <= d1(ξ, η)`: d1 to fixed patterns,
/// size indicators, a capped size, and the mean location.
pub fn stein_test_functions(space: &CarrierSpace) -> Vec<Box<dyn Fn(&PointPattern) -> f64 + Send + Sync>> {
    let mut fs: Vec<Box<dyn Fn(&PointPattern) -> f64 + Send + Sync>> = Vec::new();
    for pts in [vec![], vec![0.5], vec![0.1, 0.9], vec![0.2, 0.2, 0.7], vec![0.0, 0.3, 0.6, 1.0]] {
        let reference = PointPattern::new(pts);
        let s = space.clone();
        fs.push(Box::new(move |p: &PointPattern| d1(&s, p, &reference)));
    }
    for c in [0usize, 1, 3] {
        fs.push(Box::new(move |p: &PointPattern| if p.size() <= c { 1.0 } else { 0.0 }));
    }
    fs.push(Box::new(|p: &PointPattern| p.size().min(4) as f64 / 4.0));
    fs.push(Box::new(|p: &PointPattern| {
        if p.is_empty() {
            0.0
        } else {
            p.points().iter().sum::<f64>() / p.size() as f64
        }
    }));
    fs
}

/// Stein factor triples used by the `stein` suite.
pub fn stein_parameter_triples() -> Vec<BirthDeathParams> {
    [(2.0, 0.3, 0.0), (1.0, 0.0, 0.5), (4.0, 0.0, 0.0), (0.5, 0.6, 0.0), (3.0, 0.0, 2.0)]
        .into_iter()
        .map(|(a, b, beta)| BirthDeathParams::new(a, b, beta).expect("valid triple"))
        .collect()
}

/// `|ĥ(η + δx) - ĥ(η + δy)| <= C_n + 3 se` for every test function.
pub fn stein_suite(ns: &[usize], reps: usize, seed: u64) -> Result<Vec<CheckRow>> {
    let space = CarrierSpace::UnitInterval;
    let fs = stein_test_functions(&space);
    let nu = DiscreteMeasure::new(vec![(0.1, 0.25), (0.45, 0.25), (0.8, 0.5)])?;
    let mut rows = Vec::new();
    for (t, params) in stein_parameter_triples().into_iter().enumerate() {
        let spec = PbdpSpec::new(space.clone(), params, nu.clone())?;
        for &n in ns {
            let eta = PointPattern::new((0..n).map(|i| (i as f64 + 0.5) / n.max(1) as f64).collect());
            let task = seed ^ ((t as u64) << 32 | n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let est = estimate_first_differences(&spec, &eta, 0.0, 1.0, &fs, reps, task)?;
            let bound = stein_c_bound(&params, n);
            for (j, e) in est.iter().enumerate() {
                rows.push(at_most(
                    "stein",
                    format!("c_bound[{},n={n},f={j}]", label(&params)),
                    e.mean.abs() - 3.0 * e.stderr,
                    bound,
                ));
            }
        }
    }
    Ok(rows)
}

/// Both sides of the Palm identity for `f(x, ξ) = x |ξ|` and
/// `f(x, ξ) = x 1{|ξ| <= |λ|}`; the right side samples `x ~ λ/|λ|`.
pub fn palm_identity(model: &ModelSpec, reps: usize, seed: u64) -> Result<Vec<(MeanEstimate, MeanEstimate)>> {
    let lambda = model.mean_measure();
    let total = lambda.total();
    let sites = model.sites();
    let weights: Vec<f64> = sites.iter().map(|&x| lambda.weight_at(x)).collect();
    let fs: [fn(f64, f64, f64) -> f64; 2] = [|x, n, _| x * n, |x, n, m| if n <= m { x } else { 0.0 }];
    let left: Vec<[f64; 2]> = par_replicates(seed, reps, |rng, _| {
        let xi = model.sample(rng);
        let rest = xi.size() as f64 - 1.0;
        let mut out = [0.0; 2];
        for &x in xi.points() {
            for (o, f) in out.iter_mut().zip(&fs) {
                *o += f(x, rest, total);
            }
        }
        out
    });
    let right: Vec<Result<[f64; 2]>> = par_replicates(seed.wrapping_add(1), reps, |rng, _| {
        use rand::Rng as _;
        let mut u = rng.random::<f64>() * total;
        let mut site = sites.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                site = i;
                break;
            }
            u -= w;
        }
        let palm = model.sample_palm(site, rng)?;
        let n = palm.size() as f64;
        Ok([total * fs[0](sites[site], n, total), total * fs[1](sites[site], n, total)])
    });
    let right = right.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((0..2)
        .map(|k| {
            let l: Vec<f64> = left.iter().map(|v| v[k]).collect();
            let r: Vec<f64> = right.iter().map(|v| v[k]).collect();
            (MeanEstimate::from_samples(&l), MeanEstimate::from_samples(&r))
        })
        .collect())
}

fn palm_models() -> Result<Vec<ModelSpec>> {
    Ok(vec![
        ModelSpec::bernoulli((1..=12).map(|i| 0.05 + 0.03 * i as f64).collect())?,
        ModelSpec::runs(30, 2, 0.3)?,
        ModelSpec::compound_poisson(
            CarrierSpace::UnitInterval,
            vec![
                DiscreteMeasure::new(vec![(0.2, 1.5), (0.7, 1.0)])?,
                DiscreteMeasure::new(vec![(0.2, 0.3), (0.9, 0.4)])?,
            ],
        )?,
    ])
}

pub fn palm_suite(reps: usize, seed: u64) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for (i, m) in palm_models()?.iter().enumerate() {
        for (k, (l, r)) in palm_identity(m, reps, seed.wrapping_add(2 * i as u64))?.into_iter().enumerate() {
            let se = l.stderr.hypot(r.stderr);
            rows.push(at_most("palm", format!("palm_identity[{},f={k}]", m.name()), (l.mean - r.mean).abs(), 3.0 * se));
        }
    }
    Ok(rows)
}

/// Tiny Bernoulli targets on which bounds are compared with exact d2.
pub fn tiny_bernoulli_models() -> Result<Vec<ModelSpec>> {
    Ok(vec![
        ModelSpec::bernoulli(vec![0.2, 0.3])?,
        ModelSpec::bernoulli(vec![0.1, 0.2, 0.3])?,
        ModelSpec::bernoulli_equal(3, 0.25)?,
        ModelSpec::bernoulli(vec![0.1, 0.15, 0.2, 0.1])?,
        ModelSpec::bernoulli_equal(4, 0.3)?,
    ])
}

/// Exact d2 between a tiny Bernoulli target and its fitted PBDP.
pub fn exact_fit_distance(model: &ModelSpec) -> Result<f64> {
    let fit = fit_model(model)?;
    Ok(exact_d2_small(&ConfigDistribution::from_model(model)?, &enumerate_pbdp_auto(&fit.spec)?)?.value)
}

pub fn bounds_suite(cfg: &ExperimentConfig, reps: usize, seed: u64) -> Result<Vec<CheckRow>> {
    const S: &str = "bounds";
    let mut rows = Vec::new();
    let p = vec![0.5; 100];
    let kappa = bernoulli_kappa(&p, &PartitionScheme::blocks(CarrierSpace::UnitInterval, 100, 100)?)?;
    rows.push(at_most(S, "kappa_equal_half".into(), (kappa - 0.5 / 24.5f64.sqrt()).abs(), 1e-12));
    let big = ModelSpec::bernoulli_equal(1000, 0.2)?;
    let s = default_partition(&big)?;
    let width = (s.cells()[0].center * 2.0 * 1000.0).round();
    rows.push(at_most(S, "default_block_width".into(), (width - 63.0).abs(), 0.0));
    let runs = ModelSpec::runs(1000, 2, 0.3)?;
    let shape = bound_shape(&runs, &fit_model(&runs)?, &default_partition(&runs)?)?;
    rows.push(at_most(S, "runs_shape".into(), (shape - 0.3f64.powf(2.0 / 3.0) / 90f64.cbrt()).abs(), 1e-12));
    for (i, m) in tiny_bernoulli_models()?.iter().enumerate() {
        let fit = fit_model(m)?;
        let scheme = cfg.partition_for(m)?;
        let report = assemble_theorem_bound(m, &fit, &scheme, cfg.u(), reps, seed.wrapping_add(i as u64))?;
        let exact = exact_fit_distance(m)?;
        rows.push(CheckRow {
            suite: S,
            check: format!("bound_dominates_exact[n={},case={i}]", m.n().unwrap_or(0)),
            observed: exact,
            required: report.value(),
            pass: exact <= report.value() + 1e-9,
        });
    }
    Ok(rows)
}

/// `verify`: exit 0 iff every selected check passes.
pub fn cmd_verify(cfg: &ExperimentConfig, suite: Suite) -> Result<Output> {
    let mut rows = Vec::new();
    let want = |s: Suite| suite == s || suite == Suite::All;
    if want(Suite::Chain) {
        rows.extend(chain_suite()?);
    }
    if want(Suite::Stein) {
        rows.extend(stein_suite(&[0, 1, 2, 4, 8], cfg.reps.unwrap_or(2000), cfg.seed()?)?);
    }
    if want(Suite::Palm) {
        rows.extend(palm_suite(cfg.reps.unwrap_or(20_000), cfg.seed()?)?);
    }
    if want(Suite::Bounds) {
        rows.extend(bounds_suite(cfg, cfg.reps.unwrap_or(4000), cfg.seed()?)?);
    }
    let mut out = Output::new(cfg, csv_string(&rows)?);
    if rows.iter().any(|r| !r.pass) {
        out.exit_code = 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Bernoulli,
    Runs,
    Cp,
}

impl std::str::FromStr for SweepKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "bernoulli" => SweepKind::Bernoulli,
            "runs" => SweepKind::Runs,
            "cp" => SweepKind::Cp,
            _ => return Err(Error::InvalidParameter(format!("unknown sweep '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub sweep: &'static str,
    pub x: f64,
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Serialize)]
struct PlotRow<'a> {
    metric: &'a str,
    x: f64,
    y: f64,
    stderr: f64,
}

/// Cluster profile of the cp sweep: pairs dominate at scale 1, singles
/// (`μ₁`, scaled by `s`) take over as `s` grows.
pub fn cp_sweep_model(s: f64) -> Result<ModelSpec> {
    let space = CarrierSpace::sites_on_line(vec![0.0, 0.25, 0.5, 0.75, 1.0])?;
    let singles = [0.0, 0.25, 0.5, 0.75, 1.0].map(|x| (x, 0.01 * s)).to_vec();
    ModelSpec::compound_poisson(
        space,
        vec![
            DiscreteMeasure::new(singles)?,
            DiscreteMeasure::new(vec![(0.25, 1.0), (0.75, 1.0)])?,
        ],
    )
}

fn sweep_point(kind: SweepKind, x: f64, cfg: &ExperimentConfig, seed: u64) -> Result<(ModelSpec, Vec<(String, f64, f64, usize)>)> {
    let model = match kind {
        SweepKind::Bernoulli => ModelSpec::bernoulli_equal(x as usize, cfg.p.unwrap_or(0.2))?,
        SweepKind::Runs => ModelSpec::runs(cfg.n.unwrap_or(100), cfg.k.unwrap_or(2), x)?,
        SweepKind::Cp => cp_sweep_model(x)?,
    };
    let n_samples = cfg.n_samples.unwrap_or(400);
    let mut metrics = Vec::new();
    let fit = fit_model(&model)?;
    let scheme = cfg.partition_for(&model)?;
    metrics.push(("bound_shape".to_string(), bound_shape(&model, &fit, &scheme)?, 0.0, 0));
    metrics.push(("two_d0".to_string(), 2.0 * scheme.resolution(), 0.0, 0));
    if let SweepKind::Runs = kind {
        let (n, k) = (cfg.n.unwrap_or(100), cfg.k.unwrap_or(2));
        metrics.push(("variance_closed_form".into(), crate::models::runs_variance_closed_form(n, k, x), 0.0, 0));
        metrics.push(("overdispersed".into(), f64::from(u8::from(crate::models::runs_overdispersed(k, x))), 0.0, 0));
    }
    let space = model.space();
    let e = empirical_d2(&space, |r| model.sample(r), seed, |r| sample_pbdp(&fit.spec, r), seed, n_samples)?;
    metrics.push(("d2_fitted".into(), e.value, e.stderr, n_samples));
    let pois = poisson_fit(&model)?;
    let e = empirical_d2(&space, |r| model.sample(r), seed, |r| sample_pbdp(&pois, r), seed, n_samples)?;
    metrics.push(("d2_poisson".into(), e.value, e.stderr, n_samples));
    Ok((model, metrics))
}

/// `sweep`: long-form CSV, one row per grid point and metric, plus a
/// plot-data file next to `--out`. Failing grid points get an error row.
pub fn cmd_sweep(cfg: &ExperimentConfig, kind: SweepKind) -> Result<Output> {
    let seed = cfg.seed()?;
    let (name, default_grid): (&'static str, Vec<f64>) = match kind {
        SweepKind::Bernoulli => ("bernoulli", vec![8.0, 32.0, 128.0, 512.0]),
        SweepKind::Runs => ("runs", (1..=12).map(|i| 0.05 * i as f64).collect()),
        SweepKind::Cp => ("cp", vec![1.0, 4.0, 16.0]),
    };
    let grid = cfg.grid.clone().unwrap_or(default_grid);
    let mut rows = Vec::new();
    for &x in &grid {
        match sweep_point(kind, x, cfg, seed) {
            Ok((_, metrics)) => rows.extend(metrics.into_iter().map(|(metric, value, stderr, n_samples)| SweepRow {
                sweep: name,
                x,
                metric,
                value,
                stderr,
                n_samples,
                seed,
                error: String::new(),
            })),
            Err(e) => rows.push(SweepRow {
                sweep: name,
                x,
                metric: "error".into(),
                value: f64::NAN,
                stderr: f64::NAN,
                n_samples: 0,
                seed,
                error: e.kind().into(),
            }),
        }
    }
    let mut out = Output::new(cfg, csv_string(&rows)?);
    if let Some(path) = &cfg.out {
        let plot: Vec<PlotRow> = rows
            .iter()
            .filter(|r| r.error.is_empty())
            .map(|r| PlotRow {
                metric: &r.metric,
                x: r.x,
                y: r.value,
                stderr: r.stderr,
            })
            .collect();
        let mut p = path.clone().into_os_string();
        p.push(".plot.csv");
        out.files.push((PathBuf::from(p), csv_string(&plot)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_with(model: &str) -> ExperimentConfig {
        ExperimentConfig {
            model: Some(parse_model(model).unwrap()),
            ..Default::default()
        }
    }

    #[test]
    fn fit_command_examples() {
        let out = cmd_fit(&cfg_with(r#"{"model":"bernoulli","n":10,"p":0.1}"#)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.text).unwrap();
        assert!((v["a"].as_f64().unwrap() - 1.125).abs() < 1e-12);
        assert!((v["beta"].as_f64().unwrap() - 0.138888888888889).abs() < 1e-9);
        let out = cmd_fit(&cfg_with(r#"{"model":"runs","n":100,"k":2,"p":0.3}"#)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.text).unwrap();
        assert!((v["a"].as_f64().unwrap() - 6.76692).abs() < 1e-5);
        assert!((v["b"].as_f64().unwrap() - 0.24812).abs() < 1e-5);
        let err = cmd_fit(&cfg_with(r#"{"model":"bernoulli","n":10,"p":0.6}"#)).unwrap_err();
        assert_eq!(err.kind(), "negative_beta");
        assert!(error_json(&err).contains("\"error\":\"negative_beta\""));
    }

    #[test]
    fn d2_same_side_is_zero() {
        let mut cfg = cfg_with(r#"{"model":"bernoulli","n":3,"p":0.2}"#);
        cfg.seed = Some(3);
        cfg.n_samples = Some(50);
        cfg.right = Some(Side::Model(cfg.model.clone().unwrap()));
        let out = cmd_d2(&cfg).unwrap();
        let lines: Vec<&str> = out.text.lines().collect();
        assert_eq!(lines[0], "method,value,stderr,n_samples,seed");
        assert!(lines[1].starts_with("empirical-ot,0.0,"));
        assert!(lines[2].starts_with("exact-enumeration,0.0,"));
        assert!(cmd_d2(&ExperimentConfig { seed: None, ..cfg }).is_err());
    }

    #[test]
    fn d2_incompatible_spaces() {
        let mut cfg = cfg_with(r#"{"model":"bernoulli","n":3,"p":0.2}"#);
        cfg.seed = Some(1);
        cfg.right = Some(Side::Model(ModelSpec::runs(5, 2, 0.3).unwrap()));
        assert!(matches!(cmd_d2(&cfg), Err(Error::IncompatibleSpaces)));
    }

    #[test]
    fn chain_suite_passes() {
        let rows = chain_suite().unwrap();
        let failed: Vec<_> = rows.iter().filter(|r| !r.pass).collect();
        assert!(failed.is_empty(), "{failed:?}");
        assert_eq!(rows.len(), 2 + 3 * 20);
    }

    #[test]
    fn sweep_records_failures_and_continues() {
        let mut cfg = ExperimentConfig {
            seed: Some(1),
            n_samples: Some(20),
            grid: Some(vec![8.0, 0.0, 16.0]),
            ..Default::default()
        };
        let out = cmd_sweep(&cfg, SweepKind::Bernoulli).unwrap();
        assert!(out.text.lines().any(|l| l.contains(",error,")));
        assert_eq!(out.text.lines().filter(|l| l.starts_with("bernoulli,16.0,")).count(), 4);
        let dir = tempfile::tempdir().unwrap();
        cfg.out = Some(dir.path().join("s.csv"));
        let out = cmd_sweep(&cfg, SweepKind::Bernoulli).unwrap();
        assert_eq!(out.files.len(), 2);
        assert!(out.files[1].1.starts_with("metric,x,y,stderr\n"));
        let again = cmd_sweep(&cfg, SweepKind::Bernoulli).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn partition_parsing() {
        let m = ModelSpec::bernoulli_equal(12, 0.2).unwrap();
        assert_eq!(parse_partition("blocks:4", &m).unwrap().len(), 3);
        assert_eq!(parse_partition("cells:2", &m).unwrap().len(), 2);
        assert_eq!(parse_partition("singletons", &m).unwrap().resolution(), 0.0);
        assert!(parse_partition("zigzag", &m).is_err());
    }
}
