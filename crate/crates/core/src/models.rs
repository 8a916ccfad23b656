//! Three locally dependent point processes: independent Bernoulli sites on
//! the unit interval, k-runs of successes on a cycle, and compound Poisson
//! clusters.
//!
//! Sites are addressed by 0-based index into [`ModelSpec::sites`].

use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::carrier::{CarrierSpace, DiscreteMeasure, PointPattern};
use crate::error::{Error, Result};
use crate::stats::{central_moment_estimate, compensated_sum, par_replicates, MeanEstimate, Rng};

/// Largest site count for which outcomes are enumerated exactly.
pub const MAX_ENUMERATION_SITES: usize = 22;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Independent indicators at `i/n`, `i = 1..n`.
    Bernoulli { p: Vec<f64> },
    /// A point at `i/n` whenever `I_i ... I_{i+k-1}` all succeed, indices mod n.
    Runs { n: usize, k: usize, p: f64 },
    /// `mus[i-1]` is the intensity of clusters of size `i`.
    #[serde(rename = "cp")]
    CompoundPoisson { space: CarrierSpace, mus: Vec<DiscreteMeasure> },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScalarOrVec {
    Scalar(f64),
    Vec(Vec<f64>),
}

#[derive(Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
enum ModelRepr {
    Bernoulli { n: Option<usize>, p: ScalarOrVec },
    Runs { n: usize, k: usize, p: f64 },
    Cp { space: Option<CarrierSpace>, mus: Vec<DiscreteMeasure> },
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = ModelRepr::deserialize(d)?;
        let m = match r {
            ModelRepr::Bernoulli { n, p } => match (n, p) {
                (Some(n), ScalarOrVec::Scalar(p)) => ModelSpec::bernoulli_equal(n, p),
                (None, ScalarOrVec::Vec(p)) => ModelSpec::bernoulli(p),
                (Some(n), ScalarOrVec::Vec(p)) if p.len() == n => ModelSpec::bernoulli(p),
                _ => Err(Error::InvalidParameter(
                    "bernoulli needs either n with a scalar p or a vector p".into(),
                )),
            },
            ModelRepr::Runs { n, k, p } => ModelSpec::runs(n, k, p),
            ModelRepr::Cp { space, mus } => ModelSpec::compound_poisson(space.unwrap_or(CarrierSpace::UnitInterval), mus),
        };
        m.map_err(serde::de::Error::custom)
    }
}

/// Moments of the total count `|Xi|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub total_mean: f64,
    pub variance: f64,
    pub second_moment: f64,
    pub third_moment: f64,
    /// `E |Xi| (|Xi| - 1)`.
    pub second_factorial_total: f64,
}

impl MomentSummary {
    fn from_cumulants(k1: f64, k2: f64, k3: f64) -> Self {
        let second = k2 + k1 * k1;
        Self {
            total_mean: k1,
            variance: k2,
            second_moment: second,
            third_moment: k3 + 3.0 * k2 * k1 + k1.powi(3),
            second_factorial_total: second - k1,
        }
    }

    fn from_raw(m1: f64, m2: f64, m3: f64) -> Self {
        Self {
            total_mean: m1,
            variance: m2 - m1 * m1,
            second_moment: m2,
            third_moment: m3,
            second_factorial_total: m2 - m1,
        }
    }

    pub fn third_central(&self) -> f64 {
        let m = self.total_mean;
        self.third_moment - 3.0 * m * self.second_moment + 2.0 * m.powi(3)
    }
}

/// Dependence neighbourhoods `A_x ⊆ B_x` as site indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neighbourhood {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
}

/// Count moments estimated from simulated samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McMoments {
    pub mean: MeanEstimate,
    pub variance: MeanEstimate,
    pub third_central: MeanEstimate,
}

impl ModelSpec {
    pub fn bernoulli(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidParameter("bernoulli needs n >= 1".into()));
        }
        if let Some(bad) = p.iter().find(|&&q| !(q > 0.0 && q <= 1.0)) {
            return Err(Error::InvalidParameter(format!("success probability {bad} outside (0, 1]")));
        }
        Ok(ModelSpec::Bernoulli { p })
    }

    pub fn bernoulli_equal(n: usize, p: f64) -> Result<Self> {
        Self::bernoulli(vec![p; n])
    }

    pub fn runs(n: usize, k: usize, p: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("runs needs n >= 1".into()));
        }
        if k < 2 {
            return Err(Error::InvalidParameter("runs needs k >= 2".into()));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidParameter(format!("success probability {p} outside (0, 1]")));
        }
        Ok(ModelSpec::Runs { n, k, p })
    }

    pub fn compound_poisson(space: CarrierSpace, mus: Vec<DiscreteMeasure>) -> Result<Self> {
        if mus.iter().all(|m| m.total() == 0.0) {
            return Err(Error::InvalidParameter("compound Poisson needs a nonzero cluster intensity".into()));
        }
        for m in &mus {
            m.validate(&space)?;
        }
        Ok(ModelSpec::CompoundPoisson { space, mus })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Bernoulli { .. } => "bernoulli",
            ModelSpec::Runs { .. } => "runs",
            ModelSpec::CompoundPoisson { .. } => "cp",
        }
    }

    pub fn space(&self) -> CarrierSpace {
        match self {
            ModelSpec::Bernoulli { .. } => CarrierSpace::UnitInterval,
            ModelSpec::Runs { .. } => CarrierSpace::Circle,
            ModelSpec::CompoundPoisson { space, .. } => space.clone(),
        }
    }

    /// Site count for the lattice models.
    pub fn n(&self) -> Option<usize> {
        match self {
            ModelSpec::Bernoulli { p } => Some(p.len()),
            ModelSpec::Runs { n, .. } => Some(*n),
            ModelSpec::CompoundPoisson { .. } => None,
        }
    }

    /// Sorted site locations.
    pub fn sites(&self) -> Vec<f64> {
        match self {
            ModelSpec::Bernoulli { .. } | ModelSpec::Runs { .. } => {
                let n = self.n().expect("lattice");
                (1..=n).map(|i| i as f64 / n as f64).collect()
            }
            ModelSpec::CompoundPoisson { mus, .. } => {
                let mut s: Vec<f64> = mus.iter().flat_map(|m| m.atoms().iter().map(|a| a.0)).collect();
                s.sort_by(f64::total_cmp);
                s.dedup();
                s
            }
        }
    }

    pub fn site_index(&self, x: f64) -> Option<usize> {
        self.sites().binary_search_by(|s| s.total_cmp(&x)).ok()
    }

    fn check_site(&self, site: usize) -> Result<f64> {
        self.sites()
            .get(site)
            .copied()
            .ok_or_else(|| Error::InvalidParameter(format!("site index {site} out of range")))
    }

    pub fn sample(&self, rng: &mut Rng) -> PointPattern {
        match self {
            ModelSpec::Bernoulli { p } => {
                let n = p.len() as f64;
                PointPattern::new(
                    p.iter()
                        .enumerate()
                        .filter(|(_, &q)| rng.random::<f64>() < q)
                        .map(|(i, _)| (i + 1) as f64 / n)
                        .collect(),
                )
            }
            ModelSpec::Runs { n, k, p } => {
                let ind: Vec<bool> = (0..*n).map(|_| rng.random::<f64>() < *p).collect();
                runs_pattern(&ind, *k)
            }
            ModelSpec::CompoundPoisson { mus, .. } => {
                let mut pts = Vec::new();
                for (i, mu) in mus.iter().enumerate() {
                    for &(x, w) in mu.atoms() {
                        let clusters = Poisson::new(w).expect("positive intensity").sample(rng) as usize;
                        pts.extend(std::iter::repeat_n(x, clusters * (i + 1)));
                    }
                }
                PointPattern::new(pts)
            }
        }
    }

    pub fn moments(&self) -> MomentSummary {
        match self {
            ModelSpec::Bernoulli { p } => {
                let k1 = compensated_sum(p.iter().copied());
                let k2 = compensated_sum(p.iter().map(|q| q * (1.0 - q)));
                let k3 = compensated_sum(p.iter().map(|q| q * (1.0 - q) * (1.0 - 2.0 * q)));
                MomentSummary::from_cumulants(k1, k2, k3)
            }
            ModelSpec::Runs { n, k, p } => {
                let (m1, m2, m3) = runs_raw_moments(*n, *k, *p);
                MomentSummary::from_raw(m1, m2, m3)
            }
            ModelSpec::CompoundPoisson { mus, .. } => {
                let kappa = |r: i32| compensated_sum(mus.iter().enumerate().map(|(i, m)| ((i + 1) as f64).powi(r) * m.total()));
                MomentSummary::from_cumulants(kappa(1), kappa(2), kappa(3))
            }
        }
    }

    /// Monte Carlo count moments, for cross-checking [`ModelSpec::moments`].
    pub fn mc_moments(&self, reps: usize, seed: u64) -> McMoments {
        let xs: Vec<f64> = par_replicates(seed, reps, |rng, _| self.sample(rng).size() as f64);
        McMoments {
            mean: MeanEstimate::from_samples(&xs),
            variance: central_moment_estimate(&xs, 2),
            third_central: central_moment_estimate(&xs, 3),
        }
    }

    pub fn mean_measure(&self) -> DiscreteMeasure {
        let atoms = match self {
            ModelSpec::Bernoulli { p } => {
                let n = p.len() as f64;
                p.iter().enumerate().map(|(i, &q)| ((i + 1) as f64 / n, q)).collect()
            }
            ModelSpec::Runs { n, k, p } => {
                let w = p.powi(*k as i32);
                (1..=*n).map(|i| (i as f64 / *n as f64, w)).collect()
            }
            ModelSpec::CompoundPoisson { mus, .. } => mus
                .iter()
                .enumerate()
                .flat_map(|(i, m)| m.atoms().iter().map(move |&(x, w)| (x, (i + 1) as f64 * w)))
                .collect(),
        };
        DiscreteMeasure::new(atoms).expect("mean measure atoms are valid")
    }

    /// `∫_y λ^[2]({x}, dy) = E Ξ({x}) (|Ξ| - 1)` at a site.
    pub fn second_factorial_site_marginal(&self, site: usize) -> Result<f64> {
        let x = self.check_site(site)?;
        Ok(match self {
            ModelSpec::Bernoulli { p } => {
                let total = compensated_sum(p.iter().copied());
                p[site] * (total - p[site])
            }
            ModelSpec::Runs { n, k, p } => {
                let i = site;
                compensated_sum((0..*n).filter(|&j| j != i).map(|j| p.powi(cyclic_union(&[i, j], *n, *k) as i32)))
            }
            ModelSpec::CompoundPoisson { mus, .. } => {
                let lam_total = self.moments().total_mean;
                let lam_x = self.mean_measure().weight_at(x);
                let sq = compensated_sum(mus.iter().enumerate().map(|(i, m)| ((i + 1) as f64).powi(2) * m.weight_at(x)));
                sq + lam_x * lam_total - lam_x
            }
        })
    }

    /// Per-site second factorial marginals as a measure on the sites.
    pub fn second_factorial_marginals(&self) -> Result<DiscreteMeasure> {
        let sites = self.sites();
        let atoms = (0..sites.len())
            .map(|s| Ok((sites[s], self.second_factorial_site_marginal(s)?)))
            .collect::<Result<Vec<_>>>()?;
        DiscreteMeasure::new(atoms)
    }

    /// Monte Carlo estimate of `E Ξ({x}) (|Ξ| - 1)`.
    pub fn second_factorial_site_marginal_mc(&self, site: usize, reps: usize, seed: u64) -> Result<MeanEstimate> {
        let x = self.check_site(site)?;
        let xs: Vec<f64> = par_replicates(seed, reps, |rng, _| {
            let s = self.sample(rng);
            s.count(x) as f64 * (s.size() as f64 - 1.0)
        });
        Ok(MeanEstimate::from_samples(&xs))
    }

    /// Reduced Palm sample at a site.
    pub fn sample_palm(&self, site: usize, rng: &mut Rng) -> Result<PointPattern> {
        let x = self.check_site(site)?;
        match self {
            ModelSpec::Bernoulli { p } => {
                let n = p.len() as f64;
                Ok(PointPattern::new(
                    p.iter()
                        .enumerate()
                        .filter(|&(i, &q)| i != site && rng.random::<f64>() < q)
                        .map(|(i, _)| (i + 1) as f64 / n)
                        .collect(),
                ))
            }
            ModelSpec::Runs { n, k, p } => {
                let mut ind: Vec<bool> = (0..*n).map(|_| rng.random::<f64>() < *p).collect();
                for j in 0..*k {
                    ind[(site + j) % n] = true;
                }
                let mut pat = runs_pattern(&ind, *k);
                let removed = pat.remove_one(x);
                debug_assert!(removed);
                Ok(pat)
            }
            ModelSpec::CompoundPoisson { mus, .. } => {
                let weights: Vec<f64> = mus.iter().enumerate().map(|(i, m)| (i + 1) as f64 * m.weight_at(x)).collect();
                let total = compensated_sum(weights.iter().copied());
                if total <= 0.0 {
                    return Err(Error::ZeroIntensity { site });
                }
                let mut pat = self.sample(rng);
                let u = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let last = weights.iter().rposition(|w| *w > 0.0).expect("positive weight");
                let j = weights
                    .iter()
                    .position(|w| {
                        acc += w;
                        u < acc
                    })
                    .unwrap_or(last)
                    + 1;
                for _ in 1..j {
                    pat.insert(x);
                }
                Ok(pat)
            }
        }
    }

    pub fn neighbourhoods(&self, site: usize) -> Result<Neighbourhood> {
        self.check_site(site)?;
        Ok(match self {
            ModelSpec::Bernoulli { .. } | ModelSpec::CompoundPoisson { .. } => Neighbourhood {
                a: vec![site],
                b: vec![site],
            },
            ModelSpec::Runs { n, k, .. } => {
                let window = |radius: usize| {
                    let mut v: Vec<usize> = if 2 * radius + 1 >= *n {
                        (0..*n).collect()
                    } else {
                        (0..=2 * radius)
                            .map(|d| (site as isize + d as isize - radius as isize).rem_euclid(*n as isize) as usize)
                            .collect()
                    };
                    v.sort_unstable();
                    v.dedup();
                    v
                };
                Neighbourhood {
                    a: window(k - 1),
                    b: window(2 * k - 2),
                }
            }
        })
    }

    /// Every outcome of the underlying indicators with its probability.
    pub fn for_each_outcome<F: FnMut(&PointPattern, f64)>(&self, mut f: F) -> Result<()> {
        let (n, probs): (usize, Vec<f64>) = match self {
            ModelSpec::Bernoulli { p } => (p.len(), p.clone()),
            ModelSpec::Runs { n, p, .. } => (*n, vec![*p; *n]),
            ModelSpec::CompoundPoisson { .. } => {
                return Err(Error::Unsupported("exact enumeration of compound Poisson laws".into()))
            }
        };
        if n > MAX_ENUMERATION_SITES {
            return Err(Error::EnumerationTooLarge {
                size: 1usize << n.min(63),
                limit: 1usize << MAX_ENUMERATION_SITES,
            });
        }
        for mask in 0u64..(1u64 << n) {
            let ind: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            let prob: f64 = ind.iter().zip(&probs).map(|(&b, &q)| if b { q } else { 1.0 - q }).product();
            if prob == 0.0 {
                continue;
            }
            let pat = match self {
                ModelSpec::Runs { k, .. } => runs_pattern(&ind, *k),
                _ => PointPattern::new((0..n).filter(|&i| ind[i]).map(|i| (i + 1) as f64 / n as f64).collect()),
            };
            f(&pat, prob);
        }
        Ok(())
    }

    /// Exact law of the configuration, identical patterns merged.
    pub fn exact_law(&self) -> Result<Vec<(PointPattern, f64)>> {
        let mut map: std::collections::BTreeMap<Vec<u64>, (PointPattern, f64)> = Default::default();
        self.for_each_outcome(|p, w| {
            let key: Vec<u64> = p.points().iter().map(|x| x.to_bits()).collect();
            map.entry(key).or_insert_with(|| (p.clone(), 0.0)).1 += w;
        })?;
        Ok(map.into_values().collect())
    }
}

/// Points `i/n` (1-based `i`) of every cyclic window of `k` successes.
pub fn runs_pattern(ind: &[bool], k: usize) -> PointPattern {
    let n = ind.len();
    let nf = n as f64;
    PointPattern::new(
        (0..n)
            .filter(|&i| (0..k).all(|j| ind[(i + j) % n]))
            .map(|i| (i + 1) as f64 / nf)
            .collect(),
    )
}

/// Number of cycle positions covered by the length-`k` windows starting at `starts`.
fn cyclic_union(starts: &[usize], n: usize, k: usize) -> usize {
    let mut s: Vec<usize> = starts.to_vec();
    s.sort_unstable();
    s.dedup();
    let r = s.len();
    (0..r)
        .map(|j| {
            let gap = if j + 1 < r { s[j + 1] - s[j] } else { s[0] + n - s[j] };
            gap.min(k)
        })
        .sum()
}

/// Exact `E|Ξ|`, `E|Ξ|^2`, `E|Ξ|^3` for cyclic runs, using rotation symmetry.
fn runs_raw_moments(n: usize, k: usize, p: f64) -> (f64, f64, f64) {
    let pw = |u: usize| p.powi(u as i32);
    let nf = n as f64;
    let m1 = nf * pw(k.min(n));
    let m2 = nf * compensated_sum((0..n).map(|s| pw(cyclic_union(&[0, s], n, k))));
    let m3 = nf
        * compensated_sum((0..n).map(|s| compensated_sum((0..n).map(|t| pw(cyclic_union(&[0, s, t], n, k))))));
    (m1, m2, m3)
}

/// Closed-form variance of the runs count (valid once `n >= 2k - 1`).
pub fn runs_variance_closed_form(n: usize, k: usize, p: f64) -> f64 {
    let kf = k as f64;
    let pk = p.powi(k as i32);
    n as f64 * pk / (1.0 - p) * (1.0 + p - (2.0 * kf + 1.0) * pk + (2.0 * kf - 1.0) * pk * p)
}

/// `2 + (2k-1)p^k - (2k+1)p^{k-1} >= 0`, the overdispersion condition for runs.
pub fn runs_overdispersed(k: usize, p: f64) -> bool {
    let kf = k as f64;
    2.0 + (2.0 * kf - 1.0) * p.powi(k as i32) - (2.0 * kf + 1.0) * p.powi(k as i32 - 1) >= 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::replicate_rng;

    fn cp_example() -> ModelSpec {
        let space = CarrierSpace::UnitInterval;
        let mu1 = DiscreteMeasure::new(vec![(0.25, 2.0), (0.75, 2.0)]).unwrap();
        let mu2 = DiscreteMeasure::new(vec![(0.25, 0.5), (0.5, 0.5)]).unwrap();
        ModelSpec::compound_poisson(space, vec![mu1, mu2]).unwrap()
    }

    #[test]
    fn moment_examples() {
        let b = ModelSpec::bernoulli_equal(10, 0.1).unwrap().moments();
        assert!((b.total_mean - 1.0).abs() < 1e-15);
        assert!((b.variance - 0.9).abs() < 1e-15);
        let r = ModelSpec::runs(100, 2, 0.3).unwrap().moments();
        assert!((r.total_mean - 9.0).abs() < 1e-12);
        assert!((r.variance - 9.0 / 0.7 * 0.931).abs() < 1e-9, "{}", r.variance);
        let c = cp_example().moments();
        assert!((c.total_mean - 6.0).abs() < 1e-15);
        assert!((c.variance - 8.0).abs() < 1e-15);
        assert!((c.third_central() - 12.0).abs() < 1e-12);
        assert!((c.second_factorial_total - (c.second_moment - c.total_mean)).abs() < 1e-12);
    }

    #[test]
    fn runs_variance_matches_closed_form_when_windows_fit() {
        for (n, k, p) in [(9, 3, 0.4), (50, 2, 0.7), (20, 4, 0.9), (7, 4, 0.5)] {
            let v = ModelSpec::runs(n, k, p).unwrap().moments().variance;
            let cf = runs_variance_closed_form(n, k, p);
            assert!((v - cf).abs() < 1e-10 * cf.max(1.0), "n={n} k={k}: {v} vs {cf}");
        }
    }

    #[test]
    fn runs_moments_match_enumeration() {
        for (n, k, p) in [(6, 2, 0.3), (5, 3, 0.6), (3, 4, 0.5)] {
            let m = ModelSpec::runs(n, k, p).unwrap();
            let (mut e1, mut e2, mut e3) = (0.0, 0.0, 0.0);
            m.for_each_outcome(|pat, w| {
                let s = pat.size() as f64;
                e1 += w * s;
                e2 += w * s * s;
                e3 += w * s * s * s;
            })
            .unwrap();
            let mm = m.moments();
            assert!((mm.total_mean - e1).abs() < 1e-12);
            assert!((mm.second_moment - e2).abs() < 1e-12);
            assert!((mm.third_moment - e3).abs() < 1e-12);
        }
    }

    #[test]
    fn extreme_probabilities() {
        let mut rng = replicate_rng(0, 0);
        assert_eq!(ModelSpec::bernoulli_equal(7, 1.0).unwrap().sample(&mut rng).size(), 7);
        assert_eq!(ModelSpec::runs(9, 3, 1.0).unwrap().sample(&mut rng).size(), 9);
        assert!(ModelSpec::bernoulli(vec![0.0]).is_err());
        assert!(ModelSpec::runs(5, 1, 0.5).is_err());
    }

    #[test]
    fn mean_measures() {
        let b = ModelSpec::bernoulli(vec![0.2, 0.4]).unwrap().mean_measure();
        assert_eq!(b.atoms(), &[(0.5, 0.2), (1.0, 0.4)]);
        let r = ModelSpec::runs(4, 2, 0.5).unwrap().mean_measure();
        assert!(r.atoms().iter().all(|a| a.1 == 0.25));
        let c = cp_example();
        assert!((c.mean_measure().total() - c.moments().total_mean).abs() < 1e-12);
    }

    #[test]
    fn second_factorial_marginals() {
        let b = ModelSpec::bernoulli(vec![0.5, 0.5]).unwrap();
        assert_eq!(b.second_factorial_site_marginal(0).unwrap(), 0.25);
        assert_eq!(b.second_factorial_site_marginal(1).unwrap(), 0.25);
        for m in [ModelSpec::runs(12, 3, 0.6).unwrap(), ModelSpec::bernoulli(vec![0.1, 0.6, 0.3]).unwrap(), cp_example()] {
            let total = m.second_factorial_marginals().unwrap().total();
            assert!((total - m.moments().second_factorial_total).abs() < 1e-10, "{}", m.name());
            for s in 0..m.sites().len().min(3) {
                let exact = m.second_factorial_site_marginal(s).unwrap();
                let mc = m.second_factorial_site_marginal_mc(s, 40_000, 17).unwrap();
                assert!(mc.agrees_with(exact, 4.0, 1e-12), "{} site {s}: {mc:?} vs {exact}", m.name());
            }
        }
    }

    #[test]
    fn neighbourhood_examples() {
        let r = ModelSpec::runs(20, 2, 0.3).unwrap();
        // site 5/n is index 4
        let nb = r.neighbourhoods(4).unwrap();
        assert_eq!(nb.a, vec![3, 4, 5]);
        assert_eq!(nb.b, vec![2, 3, 4, 5, 6]);
        let wrap = r.neighbourhoods(0).unwrap();
        assert_eq!(wrap.a, vec![0, 1, 19]);
        let small = ModelSpec::runs(4, 3, 0.3).unwrap().neighbourhoods(1).unwrap();
        assert_eq!(small.b, vec![0, 1, 2, 3]);
        let b = ModelSpec::bernoulli_equal(5, 0.3).unwrap().neighbourhoods(2).unwrap();
        assert_eq!((b.a, b.b), (vec![2], vec![2]));
    }

    #[test]
    fn cp_with_singletons_has_plain_palm() {
        let mu = DiscreteMeasure::new(vec![(0.3, 1.5), (0.6, 0.5)]).unwrap();
        let m = ModelSpec::compound_poisson(CarrierSpace::UnitInterval, vec![mu]).unwrap();
        let a = m.sample_palm(0, &mut replicate_rng(4, 1)).unwrap();
        let b = m.sample(&mut replicate_rng(4, 1));
        assert_eq!(a, b);
    }

    #[test]
    fn palm_identity_for_counts() {
        // E[Ξ({x}) g(Ξ - δ_x)] = λ({x}) E g(Ξ_x), with g = point count in a set
        for m in [ModelSpec::runs(10, 2, 0.5).unwrap(), ModelSpec::bernoulli(vec![0.3, 0.6, 0.2, 0.9]).unwrap(), cp_example()] {
            let sites = m.sites();
            let lambda = m.mean_measure();
            for s in 0..sites.len().min(3) {
                let x = sites[s];
                let g = |p: &PointPattern| p.count_where(|y| y <= 0.5) as f64;
                let lhs: Vec<f64> = par_replicates(21, 60_000, |rng, _| {
                    let p = m.sample(rng);
                    let c = p.count(x);
                    if c == 0 {
                        0.0
                    } else {
                        let mut q = p.clone();
                        q.remove_one(x);
                        c as f64 * g(&q)
                    }
                });
                let rhs: Vec<f64> = par_replicates(22, 60_000, |rng, _| lambda.weight_at(x) * g(&m.sample_palm(s, rng).unwrap()));
                let l = MeanEstimate::from_samples(&lhs);
                let r = MeanEstimate::from_samples(&rhs);
                let se = (l.stderr.powi(2) + r.stderr.powi(2)).sqrt();
                assert!((l.mean - r.mean).abs() <= 4.0 * se + 1e-12, "{} site {s}: {l:?} vs {r:?}", m.name());
            }
        }
    }

    #[test]
    fn dispersion_boundary_matches_moments() {
        for k in 2..5 {
            for i in 1..40 {
                let p = i as f64 / 40.0;
                let m = ModelSpec::runs(60, k, p).unwrap().moments();
                let over = m.variance >= m.total_mean;
                // skip the knife edge where rounding decides
                if (m.variance - m.total_mean).abs() > 1e-9 {
                    assert_eq!(over, runs_overdispersed(k, p), "k={k} p={p}");
                }
            }
        }
    }

    #[test]
    fn json_schema() {
        let m: ModelSpec = serde_json::from_str(r#"{"model":"bernoulli","n":3,"p":0.2}"#).unwrap();
        assert_eq!(m, ModelSpec::bernoulli_equal(3, 0.2).unwrap());
        let r: ModelSpec = serde_json::from_str(r#"{"model":"runs","n":10,"k":2,"p":0.3}"#).unwrap();
        assert_eq!(r.n(), Some(10));
        let c: ModelSpec = serde_json::from_str(
            r#"{"model":"cp","space":{"kind":"unit_interval"},"mus":[{"atoms":[[0.5,1.0]]}]}"#,
        )
        .unwrap();
        assert_eq!(c.moments().total_mean, 1.0);
        let back: ModelSpec = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<ModelSpec>(r#"{"model":"bernoulli","n":3,"p":1.5}"#).is_err());
    }

    #[test]
    fn equal_bernoulli_is_binomial() {
        let m = ModelSpec::bernoulli_equal(6, 0.3).unwrap();
        let law = m.exact_law().unwrap();
        let mut by_size = [0.0; 7];
        for (p, w) in &law {
            by_size[p.size()] += w;
        }
        for (k, got) in by_size.iter().enumerate() {
            let binom = (1..=k).fold(1.0, |c, j| c * (6 - j + 1) as f64 / j as f64) * 0.3f64.powi(k as i32) * 0.7f64.powi(6 - k as i32);
            assert!((got - binom).abs() < 1e-14);
        }
    }
}
