//! Computable pieces of the PBDP error bounds for locally dependent
//! targets: the smoothing factor r̄, ε-terms by Monte Carlo, κ for Bernoulli
//! processes, the per-model order expressions, and default partitions.
//!
//! The conditional factor `r_x` is replaced throughout by its unconditional
//! version `r̄_x`. For the Bernoulli model `Ξ|_{B_x^c}` is independent of
//! `Ξ|_{B_x}` and the two coincide.

use std::collections::{BTreeMap, HashMap};

use rand::seq::index::sample as sample_indices;
use serde::Serialize;

use crate::carrier::{CarrierSpace, CellRegion, PartitionScheme, PointPattern};
use crate::error::{Error, Result};
use crate::fitting::{FitResult, Regime};
use crate::models::ModelSpec;
use crate::stats::{compensated_sum, par_replicates, replicate_rng, MeanEstimate, Rng};

/// "u" in the smoothing factor.
pub const DEFAULT_U: f64 = 2.0;

/// Above this many sites (or site pairs) the λ-integrals are subsampled.
pub const MAX_SITE_TERMS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McTerm {
    pub estimate: f64,
    pub stderr: f64,
}

impl McTerm {
    fn from_mean(m: &MeanEstimate) -> Self {
        Self {
            estimate: m.mean,
            stderr: m.stderr,
        }
    }

    /// Product of two independent estimates, delta-method error.
    fn product(x: McTerm, y: McTerm) -> Self {
        Self {
            estimate: x.estimate * y.estimate,
            stderr: (x.estimate * y.stderr).hypot(y.estimate * x.stderr),
        }
    }

    fn scaled(self, c: f64) -> Self {
        Self {
            estimate: c * self.estimate,
            stderr: c.abs() * self.stderr,
        }
    }

    fn plus(self, o: McTerm) -> Self {
        Self {
            estimate: self.estimate + o.estimate,
            stderr: self.stderr.hypot(o.stderr),
        }
    }

    const ZERO: McTerm = McTerm { estimate: 0.0, stderr: 0.0 };
}

/// Assembled bound, split by how much each term can be trusted.
///
/// `exact_terms` carry explicit constants, `order_terms` are order
/// expressions evaluated with constant 1, `mc_terms` are Monte Carlo
/// estimates of explicit expectations.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BoundReport {
    pub exact_terms: BTreeMap<String, f64>,
    pub order_terms: BTreeMap<String, f64>,
    pub mc_terms: BTreeMap<String, McTerm>,
    pub notes: Vec<String>,
}

impl BoundReport {
    /// Exact plus Monte Carlo terms; order terms are left out.
    pub fn value(&self) -> f64 {
        compensated_sum(self.exact_terms.values().copied().chain(self.mc_terms.values().map(|t| t.estimate)))
    }

    pub fn stderr(&self) -> f64 {
        self.mc_terms.values().map(|t| t.stderr * t.stderr).sum::<f64>().sqrt()
    }

    pub fn order_value(&self) -> f64 {
        compensated_sum(self.order_terms.values().copied())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v["value"] = self.value().into();
        v["stderr"] = self.stderr().into();
        v
    }

    /// `(section, name, value, stderr)` rows.
    pub fn rows(&self) -> Vec<(&'static str, String, f64, f64)> {
        let mut out = Vec::new();
        out.extend(self.exact_terms.iter().map(|(k, v)| ("exact", k.clone(), *v, 0.0)));
        out.extend(self.mc_terms.iter().map(|(k, t)| ("mc", k.clone(), t.estimate, t.stderr)));
        out.extend(self.order_terms.iter().map(|(k, v)| ("order", k.clone(), *v, 0.0)));
        out
    }
}

/// Site positions of a model, the cell of each site, and `λ` per site.
struct SiteMap {
    sites: Vec<f64>,
    cell: Vec<usize>,
    lambda: Vec<f64>,
}

impl SiteMap {
    fn new(model: &ModelSpec, scheme: &PartitionScheme) -> Result<Self> {
        let sites = model.sites();
        let cell = sites.iter().map(|&x| scheme.cell_of(x)).collect::<Result<Vec<_>>>()?;
        let mm = model.mean_measure();
        let lambda = sites.iter().map(|&x| mm.weight_at(x)).collect();
        Ok(Self { sites, cell, lambda })
    }

    fn index(&self, x: f64) -> usize {
        self.sites
            .binary_search_by(|s| s.total_cmp(&x))
            .expect("model points lie on model sites")
    }

    fn mask(&self, set: &[usize]) -> Vec<bool> {
        let mut m = vec![false; self.sites.len()];
        for &i in set {
            m[i] = true;
        }
        m
    }

    fn mass(&self, set: &[usize]) -> f64 {
        compensated_sum(set.iter().map(|&i| self.lambda[i]))
    }

    /// Counts of `xi` in `a` and in `b \ a`.
    fn split_counts(&self, xi: &PointPattern, in_a: &[bool], in_b: &[bool]) -> (f64, f64) {
        let (mut na, mut nb) = (0.0, 0.0);
        for &x in xi.points() {
            let i = self.index(x);
            if in_a[i] {
                na += 1.0;
            } else if in_b[i] {
                nb += 1.0;
            }
        }
        (na, nb)
    }
}

/// Estimate of r̄ for one neighbourhood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RbarEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// `P(Ξ(B^c) + 1 <= a/u)`.
    pub low_count_prob: f64,
    /// Plug-in `max_j d_TV` over shuffled configurations.
    pub max_tv: f64,
    pub worst_cell: usize,
}

impl RbarEstimate {
    fn term(&self) -> McTerm {
        McTerm {
            estimate: self.estimate,
            stderr: self.stderr,
        }
    }
}

/// r̄ for a neighbourhood `B` given as site indices.
///
/// Shuffled configurations are identified with their cell-count vectors,
/// so the supremum over indicator functions is the total variation between
/// the empirical laws of `V` and `V + e_j`. Writing
/// `D(v) = P̂(v) - P̂(v - e_j)`, the plug-in value is the sample mean of
/// `g(V) = (sgn D(V) - sgn D(V + e_j)) / 2`, which also gives its error.
pub fn rbar_for_set(model: &ModelSpec, a: f64, b_set: &[usize], scheme: &PartitionScheme, u: f64, reps: usize, seed: u64) -> Result<RbarEstimate> {
    if !(u > 0.0) || !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("need u > 0 and a > 0, got u = {u}, a = {a}")));
    }
    if reps < 2 {
        return Err(Error::InvalidParameter("rbar needs at least 2 replicates".into()));
    }
    let map = SiteMap::new(model, scheme)?;
    let in_b = map.mask(b_set);
    let cells = scheme.len();
    let draws: Vec<(usize, Vec<u32>)> = par_replicates(seed, reps, |rng, _| {
        let xi = model.sample(rng);
        let mut v = vec![0u32; cells];
        let mut outside = 0;
        for &x in xi.points() {
            let i = map.index(x);
            if !in_b[i] {
                v[map.cell[i]] += 1;
                outside += 1;
            }
        }
        (outside, v)
    });
    let mut freq: HashMap<&[u32], f64> = HashMap::new();
    for (_, v) in &draws {
        *freq.entry(v.as_slice()).or_insert(0.0) += 1.0;
    }
    let n = reps as f64;
    let prob = |v: &[u32]| freq.get(v).copied().unwrap_or(0.0) / n;
    let shifted = |v: &[u32], j: usize, up: bool| -> Option<Vec<u32>> {
        let mut w = v.to_vec();
        if up {
            w[j] += 1;
        } else {
            w[j] = w[j].checked_sub(1)?;
        }
        Some(w)
    };
    let diff = |v: &[u32], j: usize| prob(v) - shifted(v, j, false).map_or(0.0, |w| prob(&w));
    let g = |v: &[u32], j: usize| {
        let up = shifted(v, j, true).expect("increment");
        0.5 * (sign(diff(v, j)) - sign(diff(&up, j)))
    };
    let mut worst = (0usize, -1.0f64);
    for j in 0..cells {
        let tv = compensated_sum(freq.iter().map(|(v, c)| c / n * g(v, j)));
        if tv > worst.1 {
            worst = (j, tv);
        }
    }
    let (j_star, max_tv) = worst;
    let g_star: HashMap<&[u32], f64> = freq.keys().map(|v| (*v, g(v, j_star))).collect();
    let c = (4.0 * u + 10.0) / a;
    let threshold = a / u;
    let z: Vec<f64> = draws
        .iter()
        .map(|(outside, v)| {
            let low = if (*outside as f64) + 1.0 <= threshold { 4.0 } else { 0.0 };
            low + c * g_star[v.as_slice()]
        })
        .collect();
    let low_count_prob = draws.iter().filter(|(o, _)| (*o as f64) + 1.0 <= threshold).count() as f64 / n;
    let est = MeanEstimate::from_samples(&z);
    Ok(RbarEstimate {
        estimate: est.mean,
        stderr: est.stderr,
        low_count_prob,
        max_tv: max_tv.max(0.0),
        worst_cell: j_star,
    })
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// r̄ at a site, with `B` the model's type-I neighbourhood.
pub fn rbar(model: &ModelSpec, a: f64, site: usize, scheme: &PartitionScheme, u: f64, reps: usize, seed: u64) -> Result<RbarEstimate> {
    let nb = model.neighbourhoods(site)?;
    rbar_for_set(model, a, &nb.b, scheme, u, reps, seed)
}

/// Monte Carlo ε-terms at one site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SiteEpsilon {
    pub rbar: RbarEstimate,
    /// `E ε_{1,x}(Ξ)`.
    pub eps1: McTerm,
    /// `E ε_{1,x}(Ξ_x)`.
    pub eps1_palm: McTerm,
    /// `E ε_{2,x}(Ξ_x)`.
    pub eps2_palm: McTerm,
    /// `E r̄_x Ξ_x(A_x)`.
    pub rbar_palm_a: McTerm,
}

/// ε-terms at `site`, with r̄ in place of `r` and `E[r Ξ(B)] = r̄ λ(B)`.
pub fn epsilon_terms(model: &ModelSpec, a: f64, site: usize, scheme: &PartitionScheme, u: f64, reps: usize, seed: u64) -> Result<SiteEpsilon> {
    let map = SiteMap::new(model, scheme)?;
    let nb = model.neighbourhoods(site)?;
    let r = rbar_for_set(model, a, &nb.b, scheme, u, reps, task_seed(seed, 1, site as u64))?;
    let (in_a, in_b) = (map.mask(&nb.a), map.mask(&nb.b));
    let lam_b = map.mass(&nb.b);
    let eps1_shape = |na: f64, nb_: f64| na * nb_ + (na + 1.0) * na / 2.0 + na * lam_b;
    let plain: Vec<f64> = par_replicates(task_seed(seed, 2, site as u64), reps, |rng, _| {
        let (na, nb_) = map.split_counts(&model.sample(rng), &in_a, &in_b);
        eps1_shape(na, nb_)
    });
    let palm: Vec<Result<[f64; 3]>> = par_replicates(task_seed(seed, 3, site as u64), reps, |rng, _| {
        let (na, nb_) = map.split_counts(&model.sample_palm(site, rng)?, &in_a, &in_b);
        Ok([eps1_shape(na, nb_), nb_ + 1.0 + lam_b, na])
    });
    let palm = palm.into_iter().collect::<Result<Vec<_>>>()?;
    let column = |k: usize| McTerm::from_mean(&MeanEstimate::from_samples(&palm.iter().map(|t| t[k]).collect::<Vec<_>>()));
    let rt = r.term();
    Ok(SiteEpsilon {
        rbar: r,
        eps1: McTerm::product(rt, McTerm::from_mean(&MeanEstimate::from_samples(&plain))),
        eps1_palm: McTerm::product(rt, column(0)),
        eps2_palm: McTerm::product(rt, column(1)),
        rbar_palm_a: McTerm::product(rt, column(2)),
    })
}

fn task_seed(seed: u64, tag: u64, id: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ id.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sites entering the λ-integral with their Horvitz–Thompson weights:
/// all sites when few, else one uniform draw from each of
/// [`MAX_SITE_TERMS`] contiguous strata.
fn site_sample(n: usize, rng: &mut Rng) -> Vec<(usize, f64)> {
    use rand::Rng as _;
    if n <= MAX_SITE_TERMS {
        return (0..n).map(|i| (i, 1.0)).collect();
    }
    (0..MAX_SITE_TERMS)
        .map(|s| {
            let lo = s * n / MAX_SITE_TERMS;
            let hi = (s + 1) * n / MAX_SITE_TERMS;
            (rng.random_range(lo..hi), (hi - lo) as f64)
        })
        .collect()
}

/// Unordered site pairs with weights: all when few, else a uniform
/// sample without replacement.
fn pair_sample(sites: &[(usize, f64)], rng: &mut Rng) -> Vec<((usize, usize), f64)> {
    let mut all = Vec::new();
    for (i, &(x, wx)) in sites.iter().enumerate() {
        for &(y, wy) in &sites[i + 1..] {
            all.push(((x, y), wx * wy));
        }
    }
    if all.len() <= MAX_SITE_TERMS {
        return all;
    }
    let scale = all.len() as f64 / MAX_SITE_TERMS as f64;
    sample_indices(rng, all.len(), MAX_SITE_TERMS)
        .into_iter()
        .map(|k| (all[k].0, all[k].1 * scale))
        .collect()
}

fn target_regime(model: &ModelSpec) -> Regime {
    let m = model.moments();
    if m.variance >= m.total_mean {
        Regime::Overdispersed
    } else {
        Regime::Underdispersed
    }
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::Overdispersed => "overdispersed",
        Regime::Underdispersed => "underdispersed",
    }
}

/// The assembled bound on `d2(L Ξ, fitted PBDP)`.
///
/// Overdispersed fits use
/// `2 d0(G) + Σ_y λ_y E[(1+b)(ε1(Ξ_y) + ε1(Ξ)) + b r̄ Ξ_y(A_y) + b ε2(Ξ_y)]`.
/// Underdispersed fits (Bernoulli only) use
/// `2 d0(G) + Σ_x λ_x E[ε1(Ξ_x) + ε1(Ξ)] + β Σ_{x≠y} λ^[2]_{xy} E[ε1(Ξ_xy) + ε1(Ξ) + ε2(Ξ_xy)]`
/// with `A_xy = B_xy = {x, y}`.
pub fn assemble_theorem_bound(model: &ModelSpec, fit: &FitResult, scheme: &PartitionScheme, u: f64, reps: usize, seed: u64) -> Result<BoundReport> {
    let target = target_regime(model);
    if fit.regime != target {
        return Err(Error::RegimeMismatch {
            fit: regime_name(fit.regime),
            target: regime_name(target),
        });
    }
    if target == Regime::Underdispersed && !matches!(model, ModelSpec::Bernoulli { .. }) {
        return Err(Error::Unsupported("underdispersed bound is only assembled for Bernoulli targets".into()));
    }
    let params = fit.params();
    let (a, b, beta) = (params.a(), params.b(), params.beta());
    let map = SiteMap::new(model, scheme)?;
    let n = map.sites.len();
    let mut rng = replicate_rng(seed, u64::MAX);
    let sites = site_sample(n, &mut rng);

    let mut report = BoundReport::default();
    report.exact_terms.insert("two_d0".into(), 2.0 * scheme.resolution());
    report.order_terms.insert("bound_shape".into(), bound_shape(model, fit, scheme)?);
    report.notes.push("conditional r_x replaced by unconditional r̄_x; E[r Ξ(B)] evaluated as r̄ λ(B)".into());
    report.notes.push(format!("u = {u}, {reps} replicates per Monte Carlo term"));
    if n > MAX_SITE_TERMS {
        report.notes.push(format!("λ-integral over {n} sites estimated from {MAX_SITE_TERMS} stratified site draws (Horvitz–Thompson)"));
    }

    let mut single = McTerm::ZERO;
    for &(site, w) in &sites {
        let e = epsilon_terms(model, a, site, scheme, u, reps, seed)?;
        let term = match target {
            Regime::Overdispersed => e
                .eps1
                .plus(e.eps1_palm)
                .scaled(1.0 + b)
                .plus(e.rbar_palm_a.scaled(b))
                .plus(e.eps2_palm.scaled(b)),
            Regime::Underdispersed => e.eps1.plus(e.eps1_palm),
        };
        single = single.plus(term.scaled(w * map.lambda[site]));
    }
    report.mc_terms.insert("lambda_integral".into(), single);

    if target == Regime::Underdispersed {
        let ModelSpec::Bernoulli { p } = model else { unreachable!() };
        let pairs = pair_sample(&sites, &mut rng);
        let total_pairs = n * (n - 1) / 2;
        if pairs.len() < total_pairs {
            report.notes.push(format!("λ^[2]-integral over {total_pairs} site pairs estimated from {} sampled pairs", pairs.len()));
        }
        let mut pair_sum = McTerm::ZERO;
        for (k, &((x, y), w)) in pairs.iter().enumerate() {
            let term = pair_epsilon(model, &map, a, (x, y), scheme, u, reps, task_seed(seed, 4, k as u64))?;
            pair_sum = pair_sum.plus(term.scaled(2.0 * w * p[x] * p[y]));
        }
        report.mc_terms.insert("lambda2_integral".into(), pair_sum.scaled(beta));
    }
    Ok(report)
}

/// `E[ε1,xy(Ξ_xy) + ε1,xy(Ξ) + ε2,xy(Ξ_xy)]` for a Bernoulli target, where
/// `Ξ_xy` is `Ξ` with sites `x`, `y` dropped.
#[allow(clippy::too_many_arguments)]
fn pair_epsilon(model: &ModelSpec, map: &SiteMap, a: f64, (x, y): (usize, usize), scheme: &PartitionScheme, u: f64, reps: usize, seed: u64) -> Result<McTerm> {
    let set = [x, y];
    let r = rbar_for_set(model, a, &set, scheme, u, reps, task_seed(seed, 5, 0))?;
    let in_set = map.mask(&set);
    let lam = map.mass(&set);
    let vals: Vec<f64> = par_replicates(task_seed(seed, 6, 0), reps, |rng, _| {
        let xi = model.sample(rng);
        let (na, _) = map.split_counts(&xi, &in_set, &in_set);
        let palm = xi.filter(|p| !in_set[map.index(p)]);
        let (pa, _) = map.split_counts(&palm, &in_set, &in_set);
        let eps1 = |c: f64| (c + 1.0) * c / 2.0 + c * lam;
        eps1(pa) + eps1(na) + pa + 1.0 + lam
    });
    Ok(McTerm::product(r.term(), McTerm::from_mean(&MeanEstimate::from_samples(&vals))))
}

/// Sites of each cell, by index.
fn cell_members(model: &ModelSpec, scheme: &PartitionScheme) -> Result<Vec<Vec<usize>>> {
    let map = SiteMap::new(model, scheme)?;
    let mut out = vec![Vec::new(); scheme.len()];
    for (i, &c) in map.cell.iter().enumerate() {
        out[c].push(i);
    }
    Ok(out)
}

/// `max_j 1 ∧ 1 / (2 sqrt(S_j - two largest p(1-p) in cell j))`, where
/// `S_j = Σ_{l in cell j} p_l (1 - p_l)`; cells with fewer than 3 sites give 1.
pub fn bernoulli_kappa(p: &[f64], scheme: &PartitionScheme) -> Result<f64> {
    let model = ModelSpec::bernoulli(p.to_vec())?;
    let members = cell_members(&model, scheme)?;
    Ok(members
        .iter()
        .map(|cell| {
            if cell.len() < 3 {
                return 1.0;
            }
            let mut v: Vec<f64> = cell.iter().map(|&i| p[i] * (1.0 - p[i])).collect();
            v.sort_by(|x, y| y.total_cmp(x));
            let rest = compensated_sum(v.iter().copied()) - v[0] - v[1];
            if rest > 0.0 {
                (0.5 / rest.sqrt()).min(1.0)
            } else {
                1.0
            }
        })
        .fold(0.0, f64::max))
}

fn max_cell_width(scheme: &PartitionScheme) -> f64 {
    scheme
        .cells()
        .iter()
        .map(|c| match &c.region {
            CellRegion::Interval { lo, hi, .. } => hi - lo,
            CellRegion::Sites { .. } => 0.0,
        })
        .fold(0.0, f64::max)
}

/// The order expression of each model's bound, constants set to 1.
///
/// Bernoulli: `max u_j/n + κ λ₂/|λ|`. Runs: `p^{2/3} / (n p^k)^{1/3}` when
/// `n p^k >= 1`, else `p`. CP: `2 d0(G) + max_i (1 ∧ μ₁(G_i)^{-1/2}) Σ i³|μ_i| / a`.
pub fn bound_shape(model: &ModelSpec, fit: &FitResult, scheme: &PartitionScheme) -> Result<f64> {
    Ok(match model {
        ModelSpec::Bernoulli { p } => {
            let l1 = compensated_sum(p.iter().copied());
            let l2 = compensated_sum(p.iter().map(|q| q * q));
            max_cell_width(scheme) + bernoulli_kappa(p, scheme)? * l2 / l1
        }
        ModelSpec::Runs { n, k, p } => {
            let m = *n as f64 * p.powi(*k as i32);
            if m >= 1.0 {
                p.powf(2.0 / 3.0) / m.cbrt()
            } else {
                *p
            }
        }
        ModelSpec::CompoundPoisson { mus, .. } => {
            let third = compensated_sum(mus.iter().enumerate().map(|(i, m)| ((i + 1) as f64).powi(3) * m.total()));
            let worst = scheme
                .cells()
                .iter()
                .enumerate()
                .map(|(c, _)| {
                    let mass = compensated_sum(
                        mus[0]
                            .atoms()
                            .iter()
                            .filter(|(x, _)| scheme.cell_of(*x).ok() == Some(c))
                            .map(|a| a.1),
                    );
                    if mass > 0.0 {
                        (1.0 / mass.sqrt()).min(1.0)
                    } else {
                        1.0
                    }
                })
                .fold(0.0, f64::max);
            2.0 * scheme.resolution() + worst * third / fit.params().a()
        }
    })
}

/// Partition with the rates used in the applications, constants 1.
///
/// Bernoulli: blocks of `ceil((p̄ n² / (1 - p̄))^{1/3})` sites, `p̄` the
/// mean success probability. Runs: `ceil(n^{1/3} p^{(k-2)/3})` blocks, or
/// `ceil(1/p)` when `|λ| < 1`. CP: singletons on a site space, else
/// `ceil(|μ₁|^{1/3})` equal intervals.
pub fn default_partition(model: &ModelSpec) -> Result<PartitionScheme> {
    match model {
        ModelSpec::Bernoulli { p } => {
            let n = p.len();
            let pbar = compensated_sum(p.iter().copied()) / n as f64;
            let width = if pbar >= 1.0 { n } else { (pbar * (n * n) as f64 / (1.0 - pbar)).cbrt().ceil() as usize };
            PartitionScheme::blocks(model.space(), n, width.clamp(1, n))
        }
        ModelSpec::Runs { n, k, p } => {
            let cells = if model.moments().total_mean < 1.0 {
                (1.0 / p).ceil()
            } else {
                ((*n as f64).cbrt() * p.powf((*k as f64 - 2.0) / 3.0)).ceil()
            };
            let cells = (cells as usize).clamp(1, *n);
            PartitionScheme::blocks(model.space(), *n, n / cells)
        }
        ModelSpec::CompoundPoisson { space, mus } => match space {
            CarrierSpace::FiniteSites { sites, .. } => PartitionScheme::singletons(space.clone(), sites),
            _ => {
                let k = (mus[0].total().cbrt().ceil() as usize).max(1);
                let breaks: Vec<usize> = (0..=k).collect();
                PartitionScheme::from_index_breaks(space.clone(), k, &breaks)
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carrier::DiscreteMeasure;
    use crate::fitting::fit_model;

    #[test]
    fn kappa_examples() {
        let p = vec![0.5; 100];
        let one = PartitionScheme::blocks(CarrierSpace::UnitInterval, 100, 100).unwrap();
        assert!((bernoulli_kappa(&p, &one).unwrap() - 0.5 / 24.5f64.sqrt()).abs() < 1e-12);
        let tiny = PartitionScheme::blocks(CarrierSpace::UnitInterval, 100, 2).unwrap();
        assert_eq!(bernoulli_kappa(&p, &tiny).unwrap(), 1.0);
        let q = vec![0.3; 120];
        let mut last = f64::INFINITY;
        for w in [3, 5, 10, 20, 40, 120] {
            let k = bernoulli_kappa(&q, &PartitionScheme::blocks(CarrierSpace::UnitInterval, 120, w).unwrap()).unwrap();
            assert!(k <= last + 1e-15 && k > 0.0 && k <= 1.0);
            last = k;
        }
    }

    #[test]
    fn default_partition_examples() {
        let m = ModelSpec::bernoulli_equal(1000, 0.2).unwrap();
        let s = default_partition(&m).unwrap();
        assert_eq!(s.len(), 1000 / 63);
        assert!((s.resolution() - (63 + 1000 % 63) as f64 / 2000.0).abs() < 1e-12);
        let r = ModelSpec::runs(20, 3, 0.2).unwrap();
        assert!(r.moments().total_mean < 1.0);
        assert_eq!(default_partition(&r).unwrap().len(), 5);
        for model in [m, r, ModelSpec::runs(300, 2, 0.4).unwrap()] {
            let s = default_partition(&model).unwrap();
            let members = cell_members(&model, &s).unwrap();
            assert_eq!(members.iter().map(Vec::len).sum::<usize>(), model.n().unwrap());
            assert!(members.iter().all(|c| c.windows(2).all(|w| w[1] == w[0] + 1)));
        }
    }

    #[test]
    fn shape_examples() {
        let r = ModelSpec::runs(1000, 2, 0.3).unwrap();
        let fit = fit_model(&r).unwrap();
        let s = default_partition(&r).unwrap();
        assert!((bound_shape(&r, &fit, &s).unwrap() - 0.3f64.powf(2.0 / 3.0) / 90f64.cbrt()).abs() < 1e-12);
        let small = ModelSpec::runs(20, 3, 0.2).unwrap();
        let f2 = fit_model(&small).unwrap();
        assert_eq!(bound_shape(&small, &f2, &default_partition(&small).unwrap()).unwrap(), 0.2);
        let mut last = f64::INFINITY;
        for n in [100, 1000, 10_000, 100_000] {
            let m = ModelSpec::bernoulli_equal(n, 0.1).unwrap();
            let v = bound_shape(&m, &fit_model(&m).unwrap(), &default_partition(&m).unwrap()).unwrap();
            assert!(v < last, "{n}: {v}");
            last = v;
        }
    }

    #[test]
    fn rbar_degenerate_cases() {
        let m = ModelSpec::bernoulli(vec![1.0, 1.0, 1.0]).unwrap();
        let s = PartitionScheme::blocks(CarrierSpace::UnitInterval, 3, 3).unwrap();
        let r = rbar_for_set(&m, 1.5, &[0], &s, 2.0, 50, 1).unwrap();
        assert_eq!(r.low_count_prob, 0.0);
        assert_eq!(r.max_tv, 1.0);
        assert!((r.estimate - 18.0 / 1.5).abs() < 1e-12 && r.stderr == 0.0);
        let r = rbar_for_set(&m, 10.0, &[0], &s, 2.0, 50, 1).unwrap();
        assert_eq!(r.low_count_prob, 1.0);
    }

    #[test]
    fn epsilon_examples() {
        let m = ModelSpec::bernoulli_equal(12, 0.2).unwrap();
        let fit = fit_model(&m).unwrap();
        let s = default_partition(&m).unwrap();
        let e = epsilon_terms(&m, fit.params().a(), 3, &s, DEFAULT_U, 2000, 4).unwrap();
        assert_eq!(e.eps1_palm.estimate, 0.0);
        assert_eq!(e.rbar_palm_a.estimate, 0.0);

        let runs = ModelSpec::runs(60, 2, 0.3).unwrap();
        let fit = fit_model(&runs).unwrap();
        let s = default_partition(&runs).unwrap();
        let map = SiteMap::new(&runs, &s).unwrap();
        let nb = runs.neighbourhoods(10).unwrap();
        let in_a = map.mask(&nb.a);
        let xs: Vec<f64> = par_replicates(9, 20_000, |rng, _| map.split_counts(&runs.sample_palm(10, rng).unwrap(), &in_a, &in_a).0);
        let est = MeanEstimate::from_samples(&xs);
        assert!(est.mean <= 2.0 * 0.3 + 3.0 * est.stderr, "{est:?}");
        assert!(epsilon_terms(&runs, fit.params().a(), 10, &s, DEFAULT_U, 500, 2).is_ok());

        let atoms = |w: f64, k: usize| DiscreteMeasure::new((0..k).map(|i| ((i as f64 + 0.5) / k as f64, w / k as f64)).collect()).unwrap();
        let mut last = f64::INFINITY;
        for k in [4, 16, 64] {
            let cp = ModelSpec::compound_poisson(CarrierSpace::UnitInterval, vec![atoms(8.0, k), atoms(1.0, k)]).unwrap();
            let fit = fit_model(&cp).unwrap();
            let s = default_partition(&cp).unwrap();
            let e = epsilon_terms(&cp, fit.params().a(), 0, &s, DEFAULT_U, 4000, 3).unwrap();
            let per_rbar = e.eps1.estimate / e.rbar.estimate;
            assert!(per_rbar < last);
            last = per_rbar;
        }
        assert!(last < 2.0 * 10.0 / 64.0, "{last}");
    }

    #[test]
    fn assemble_checks_regime() {
        let m = ModelSpec::bernoulli_equal(4, 0.2).unwrap();
        let runs = ModelSpec::runs(30, 2, 0.3).unwrap();
        let wrong = fit_model(&runs).unwrap();
        let s = default_partition(&m).unwrap();
        assert!(matches!(assemble_theorem_bound(&m, &wrong, &s, 2.0, 100, 1), Err(Error::RegimeMismatch { .. })));
        let fit = fit_model(&m).unwrap();
        let singles = PartitionScheme::singletons(CarrierSpace::UnitInterval, &m.sites());
        let rep = assemble_theorem_bound(&m, &fit, &singles.unwrap(), 2.0, 200, 1).unwrap();
        assert_eq!(rep.exact_terms["two_d0"], 0.0);
        assert!(rep.mc_terms.values().all(|t| t.estimate >= 0.0));
        let r = assemble_theorem_bound(&runs, &wrong, &default_partition(&runs).unwrap(), 2.0, 200, 1).unwrap();
        assert!(r.value() > 0.0 && r.order_terms.contains_key("bound_shape"));
    }
}
