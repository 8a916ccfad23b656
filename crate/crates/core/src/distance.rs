//! The d2 distance between configuration laws: an empirical optimal
//! transport estimate from samples, the exact value for small enumerable
//! laws, and the upper bound for two PBDPs from their count laws and
//! placement measures.

use std::collections::HashMap;

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carrier::{d1, solve_assignment_flat, solve_transport, w1_measures, CarrierSpace, PointPattern};
use crate::chain::tv_distance;
use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::process::PbdpSpec;
use crate::stats::{compensated_sum, par_replicates, replicate_rng, MeanEstimate, Rng};

/// Stream index offset separating bootstrap draws from sample draws.
const BOOTSTRAP_STREAM: u64 = 1 << 40;

/// Half-sample resamples used for the empirical standard error.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Largest support, per side, accepted by [`exact_d2_small`].
pub const MAX_EXACT_CONFIGS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum D2Method {
    EmpiricalOt,
    ExactEnumeration,
    CouplingBound,
}

impl D2Method {
    pub fn as_str(self) -> &'static str {
        match self {
            D2Method::EmpiricalOt => "empirical-ot",
            D2Method::ExactEnumeration => "exact-enumeration",
            D2Method::CouplingBound => "coupling-bound",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct D2Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub method: D2Method,
}

impl D2Estimate {
    pub fn exact(value: f64, method: D2Method) -> Self {
        Self {
            value: value.clamp(0.0, 1.0),
            stderr: 0.0,
            n_samples: 0,
            method,
        }
    }

    /// Normal-approximation 95% interval.
    pub fn interval95(&self) -> (f64, f64) {
        (self.value - 1.96 * self.stderr, self.value + 1.96 * self.stderr)
    }
}

/// A law on finitely many configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigDistribution {
    space: CarrierSpace,
    configs: Vec<(PointPattern, f64)>,
}

impl ConfigDistribution {
    /// Identical patterns are merged; masses must sum to one within 1e-9.
    pub fn new(space: CarrierSpace, configs: Vec<(PointPattern, f64)>) -> Result<Self> {
        let mut map: std::collections::BTreeMap<Vec<u64>, (PointPattern, f64)> = Default::default();
        for (p, w) in configs {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidParameter(format!("bad configuration mass {w}")));
            }
            p.validate(&space)?;
            if w > 0.0 {
                let key = p.points().iter().map(|x| x.to_bits()).collect();
                map.entry(key).or_insert_with(|| (p, 0.0)).1 += w;
            }
        }
        let configs: Vec<(PointPattern, f64)> = map.into_values().collect();
        let total = compensated_sum(configs.iter().map(|c| c.1));
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::MassMismatch { left: total, right: 1.0 });
        }
        Ok(Self { space, configs })
    }

    pub fn point_mass(space: CarrierSpace, p: PointPattern) -> Result<Self> {
        Self::new(space, vec![(p, 1.0)])
    }

    /// Exact law of a lattice model.
    pub fn from_model(model: &ModelSpec) -> Result<Self> {
        Self::new(model.space(), model.exact_law()?)
    }

    pub fn space(&self) -> &CarrierSpace {
        &self.space
    }

    pub fn configs(&self) -> &[(PointPattern, f64)] {
        &self.configs
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        compensated_sum(self.configs.iter().map(|c| c.1))
    }

    /// Draw one configuration.
    pub fn sample(&self, rng: &mut Rng) -> PointPattern {
        use rand::Rng as _;
        let mut u = rng.random::<f64>() * self.total_mass();
        for (p, w) in &self.configs {
            if u < *w {
                return p.clone();
            }
            u -= w;
        }
        self.configs.last().expect("nonempty law").0.clone()
    }
}

/// Pairwise d1 costs, row-major.
pub fn d1_cost_matrix(space: &CarrierSpace, left: &[PointPattern], right: &[PointPattern]) -> Vec<f64> {
    left.par_iter()
        .flat_map_iter(|x| right.iter().map(move |y| d1(space, x, y)))
        .collect()
}

/// Empirical W1 (ground metric d1) between `n_samples` draws from each side.
///
/// Side `s` draws replicate `i` from stream `(seed_s, i)`, so equal samplers
/// under equal seeds give identical samples. The standard error comes from
/// [`BOOTSTRAP_RESAMPLES`] random half-samples: `sd(half) / sqrt(2)`.
pub fn empirical_d2<F, G>(space: &CarrierSpace, sampler1: F, seed1: u64, sampler2: G, seed2: u64, n_samples: usize) -> Result<D2Estimate>
where
    F: Fn(&mut Rng) -> PointPattern + Sync + Send,
    G: Fn(&mut Rng) -> PointPattern + Sync + Send,
{
    if n_samples < 2 {
        return Err(Error::InvalidParameter("empirical d2 needs at least 2 samples".into()));
    }
    let left: Vec<PointPattern> = par_replicates(seed1, n_samples, |rng, _| sampler1(rng));
    let right: Vec<PointPattern> = par_replicates(seed2, n_samples, |rng, _| sampler2(rng));
    empirical_d2_from_samples(space, &left, &right, seed1 ^ seed2.rotate_left(17))
}

/// [`empirical_d2`] on given equal-size samples.
pub fn empirical_d2_from_samples(space: &CarrierSpace, left: &[PointPattern], right: &[PointPattern], bootstrap_seed: u64) -> Result<D2Estimate> {
    let n = left.len();
    if n != right.len() || n < 2 {
        return Err(Error::InvalidParameter("samples must have equal sizes of at least 2".into()));
    }
    for p in left.iter().chain(right) {
        p.validate(space)?;
    }
    let (left_ids, left_reps) = group_patterns(left);
    let (right_ids, right_reps) = group_patterns(right);
    let ul: Vec<PointPattern> = left_reps.iter().map(|&i| left[i].clone()).collect();
    let ur: Vec<PointPattern> = right_reps.iter().map(|&i| right[i].clone()).collect();
    let cost = d1_cost_matrix(space, &ul, &ur);
    let matching = |rows: &[usize], cols: &[usize]| -> Result<f64> { matching_cost(&left_ids, &right_ids, ur.len(), &cost, rows, cols) };
    let all: Vec<usize> = (0..n).collect();
    let value = matching(&all, &all)? / n as f64;
    let half = n / 2;
    let halves: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(bootstrap_seed, BOOTSTRAP_STREAM + r as u64);
            let rows = sample_indices(&mut rng, n, half).into_vec();
            let cols = sample_indices(&mut rng, n, half).into_vec();
            matching(&rows, &cols).expect("finite costs") / half as f64
        })
        .collect();
    let spread = MeanEstimate::from_samples(&halves);
    let sd = spread.stderr * (halves.len() as f64).sqrt();
    Ok(D2Estimate {
        value: value.clamp(0.0, 1.0),
        stderr: sd / std::f64::consts::SQRT_2,
        n_samples: n,
        method: D2Method::EmpiricalOt,
    })
}

/// Distinct patterns: `ids[i]` is the class of sample `i`, `reps[c]` a
/// sample in class `c`.
fn group_patterns(samples: &[PointPattern]) -> (Vec<usize>, Vec<usize>) {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut reps = Vec::new();
    let ids = samples
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let key = p.points().iter().map(|x| x.to_bits()).collect();
            *index.entry(key).or_insert_with(|| {
                reps.push(i);
                reps.len() - 1
            })
        })
        .collect();
    (ids, reps)
}

/// Minimal total d1 matching the samples `rows` (left) to `cols` (right).
/// Repeated patterns turn the assignment into a smaller transportation
/// problem with integer supplies; both have the same optimum.
fn matching_cost(left_ids: &[usize], right_ids: &[usize], width: usize, cost: &[f64], rows: &[usize], cols: &[usize]) -> Result<f64> {
    let count = |ids: &[usize], picks: &[usize]| {
        let mut c: HashMap<usize, f64> = HashMap::new();
        for &i in picks {
            *c.entry(ids[i]).or_insert(0.0) += 1.0;
        }
        let mut v: Vec<(usize, f64)> = c.into_iter().collect();
        v.sort_by_key(|e| e.0);
        v
    };
    let (supply, demand) = (count(left_ids, rows), count(right_ids, cols));
    let m = rows.len();
    if 64 * supply.len() * demand.len() > m * m {
        let flat: Vec<f64> = rows
            .iter()
            .flat_map(|&i| cols.iter().map(move |&j| cost[left_ids[i] * width + right_ids[j]]))
            .collect();
        return Ok(solve_assignment_flat(m, &flat)?.cost);
    }
    let sub: Vec<Vec<f64>> = supply
        .iter()
        .map(|&(a, _)| demand.iter().map(|&(b, _)| cost[a * width + b]).collect())
        .collect();
    let s: Vec<f64> = supply.iter().map(|e| e.1).collect();
    let d: Vec<f64> = demand.iter().map(|e| e.1).collect();
    Ok(solve_transport(&s, &d, &sub)?.cost)
}

/// Exact d2 by solving the transportation problem between two enumerated laws.
pub fn exact_d2_small(dist1: &ConfigDistribution, dist2: &ConfigDistribution) -> Result<D2Estimate> {
    if dist1.space != dist2.space {
        return Err(Error::IncompatibleSpaces);
    }
    for d in [dist1, dist2] {
        if d.len() > MAX_EXACT_CONFIGS {
            return Err(Error::EnumerationTooLarge {
                size: d.len(),
                limit: MAX_EXACT_CONFIGS,
            });
        }
    }
    let space = &dist1.space;
    let supply: Vec<f64> = dist1.configs.iter().map(|c| c.1).collect();
    let demand: Vec<f64> = dist2.configs.iter().map(|c| c.1).collect();
    let cost: Vec<Vec<f64>> = dist1
        .configs
        .par_iter()
        .map(|(x, _)| dist2.configs.iter().map(|(y, _)| d1(space, x, y)).collect())
        .collect();
    let plan = solve_transport(&supply, &demand, &cost)?;
    Ok(D2Estimate::exact(plan.cost, D2Method::ExactEnumeration))
}

/// `d_TV(π1, π2) + W1(ν1, ν2)`, an upper bound on d2 between two PBDPs.
pub fn coupling_bound(spec1: &PbdpSpec, spec2: &PbdpSpec) -> Result<f64> {
    if spec1.space() != spec2.space() {
        return Err(Error::IncompatibleSpaces);
    }
    let tv = tv_distance(spec1.counts(), spec2.counts());
    let w = w1_measures(spec1.space(), spec1.nu(), spec2.nu())?;
    Ok(tv + w)
}

/// Explicit law of a PBDP with atomic `ν`, counts truncated at `count_cap`.
///
/// Count-vector probabilities are `π(Σc) multinomial(Σc; c) Π ν_i^{c_i}`;
/// the result is renormalized after checking the dropped mass.
pub fn enumerate_pbdp(spec: &PbdpSpec, count_cap: usize) -> Result<ConfigDistribution> {
    const TAIL_LIMIT: f64 = 1e-9;
    let pi = spec.counts();
    let kept = compensated_sum((0..=count_cap).map(|k| pi.pmf(k)));
    let tail = (1.0 - kept).max(0.0) + pi.tail_bound();
    if tail > TAIL_LIMIT {
        return Err(Error::CapTooSmall {
            cap: count_cap,
            tail,
            limit: TAIL_LIMIT,
        });
    }
    let atoms = spec.nu().atoms();
    let m = atoms.len();
    let size: f64 = (0..=count_cap).map(|c| binomial(c + m - 1, m - 1)).sum();
    if size > MAX_EXACT_CONFIGS as f64 {
        return Err(Error::EnumerationTooLarge {
            size: size as usize,
            limit: MAX_EXACT_CONFIGS,
        });
    }
    let mut configs = Vec::new();
    let mut counts = vec![0usize; m];
    for total in 0..=count_cap {
        let pc = pi.pmf(total);
        if pc == 0.0 {
            continue;
        }
        compositions(total, m, &mut counts, 0, &mut |c| {
            let mut w = pc;
            let mut left = total;
            for (i, &ci) in c.iter().enumerate() {
                w *= binomial(left, ci) * atoms[i].1.powi(ci as i32);
                left -= ci;
            }
            if w > 0.0 {
                let pts = c
                    .iter()
                    .enumerate()
                    .flat_map(|(i, &ci)| std::iter::repeat_n(atoms[i].0, ci))
                    .collect();
                configs.push((PointPattern::new(pts), w));
            }
        });
    }
    let mass = compensated_sum(configs.iter().map(|c| c.1));
    for c in configs.iter_mut() {
        c.1 /= mass;
    }
    ConfigDistribution::new(spec.space().clone(), configs)
}

/// [`enumerate_pbdp`] at the smallest count cap meeting the tail limit.
pub fn enumerate_pbdp_auto(spec: &PbdpSpec) -> Result<ConfigDistribution> {
    let mut cap = 0;
    loop {
        match enumerate_pbdp(spec, cap) {
            Err(Error::CapTooSmall { .. }) if cap < spec.counts().max_state() + 1 => cap += 1,
            other => return other,
        }
    }
}

fn compositions(total: usize, parts: usize, buf: &mut Vec<usize>, at: usize, f: &mut dyn FnMut(&[usize])) {
    if at + 1 == parts {
        buf[at] = total;
        f(buf);
        return;
    }
    for c in 0..=total {
        buf[at] = c;
        compositions(total - c, parts, buf, at + 1, f);
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carrier::DiscreteMeasure;
    use crate::chain::BirthDeathParams;
    use crate::fitting::fit_model;
    use crate::process::sample_pbdp;

    fn sites3() -> CarrierSpace {
        CarrierSpace::sites_on_line(vec![0.0, 0.4, 1.0]).unwrap()
    }

    fn spec_on(space: &CarrierSpace, a: f64, b: f64, beta: f64, nu: &[(f64, f64)]) -> PbdpSpec {
        PbdpSpec::new(space.clone(), BirthDeathParams::new(a, b, beta).unwrap(), DiscreteMeasure::new(nu.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn same_seed_self_distance_is_zero() {
        let s = spec_on(&sites3(), 2.0, 0.2, 0.1, &[(0.0, 0.5), (1.0, 0.5)]);
        let e = empirical_d2(s.space(), |r| sample_pbdp(&s, r), 5, |r| sample_pbdp(&s, r), 5, 60).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn disjoint_sizes_give_one() {
        let one = |_: &mut Rng| PointPattern::new(vec![0.5]);
        let two = |_: &mut Rng| PointPattern::new(vec![0.5, 0.5]);
        let e = empirical_d2(&CarrierSpace::UnitInterval, one, 1, two, 2, 20).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn exact_examples() {
        let s = sites3();
        let a = ConfigDistribution::point_mass(s.clone(), PointPattern::new(vec![0.0])).unwrap();
        let b = ConfigDistribution::point_mass(s.clone(), PointPattern::new(vec![1.0])).unwrap();
        assert_eq!(exact_d2_small(&a, &a).unwrap().value, 0.0);
        assert!((exact_d2_small(&a, &b).unwrap().value - s.d0(0.0, 1.0)).abs() < 1e-15);
        let other = ConfigDistribution::point_mass(CarrierSpace::UnitInterval, PointPattern::new(vec![0.0])).unwrap();
        assert!(matches!(exact_d2_small(&a, &other), Err(Error::IncompatibleSpaces)));
    }

    #[test]
    fn enumeration_examples() {
        let s = sites3();
        let one = PbdpSpec::new(s.clone(), BirthDeathParams::new(1e-12, 0.0, 0.0).unwrap(), DiscreteMeasure::dirac(0.4)).unwrap();
        let d = enumerate_pbdp(&one, 3).unwrap();
        assert!(d.configs()[0].0.is_empty() && (d.configs()[0].1 - 1.0).abs() < 1e-11);
        let spec = spec_on(&s, 1.5, 0.3, 0.4, &[(0.0, 0.25), (0.4, 0.25), (1.0, 0.5)]);
        assert!(matches!(enumerate_pbdp(&spec, 2), Err(Error::CapTooSmall { .. })));
        let full = enumerate_pbdp(&spec, 16).unwrap();
        assert!((full.total_mass() - 1.0).abs() < 1e-12);
        let mean: f64 = full.configs().iter().map(|(p, w)| p.size() as f64 * w).sum();
        assert!((mean - spec.counts().mean()).abs() < 1e-8);
    }

    #[test]
    fn coupling_examples() {
        let s = CarrierSpace::UnitInterval;
        let a = spec_on(&s, 2.0, 0.0, 0.0, &[(0.2, 1.0)]);
        let b = spec_on(&s, 2.0, 0.0, 0.0, &[(0.7, 1.0)]);
        assert_eq!(coupling_bound(&a, &a).unwrap(), 0.0);
        assert!((coupling_bound(&a, &b).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exact_d2_triangle_and_coupling_domination() {
        let s = sites3();
        let specs = [
            spec_on(&s, 1.0, 0.2, 1.0, &[(0.0, 0.5), (1.0, 0.5)]),
            spec_on(&s, 0.7, 0.0, 2.0, &[(0.4, 0.3), (1.0, 0.7)]),
            spec_on(&s, 1.4, 0.3, 3.0, &[(0.0, 0.2), (0.4, 0.5), (1.0, 0.3)]),
        ];
        let laws: Vec<_> = specs.iter().map(|sp| enumerate_pbdp(sp, 8).unwrap()).collect();
        let d = |i: usize, j: usize| exact_d2_small(&laws[i], &laws[j]).unwrap().value;
        for (i, j, k) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
            assert!(d(i, k) <= d(i, j) + d(j, k) + 1e-9);
            assert!(d(i, j) <= coupling_bound(&specs[i], &specs[j]).unwrap() + 1e-9);
        }
    }

    #[test]
    fn empirical_tracks_exact_on_tiny_bernoulli() {
        let model = ModelSpec::bernoulli(vec![0.2, 0.3, 0.1]).unwrap();
        let fit = fit_model(&model).unwrap();
        let exact = exact_d2_small(&ConfigDistribution::from_model(&model).unwrap(), &enumerate_pbdp(&fit.spec, 10).unwrap())
            .unwrap()
            .value;
        let e = empirical_d2(&model.space(), |r| model.sample(r), 11, |r| sample_pbdp(&fit.spec, r), 12, 400).unwrap();
        assert!((e.value - exact).abs() <= 3.0 * e.stderr + 0.01, "{e:?} vs {exact}");
    }
}
