//! Polynomial birth-death point processes: the stationary configuration
//! law, the spatial birth-death particle system whose equilibrium it is,
//! and coupled estimators built on that system.

use rand::Rng as _;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::carrier::{CarrierSpace, DiscreteMeasure, PointPattern};
use crate::chain::{stationary, BirthDeathParams, CountDistribution};
use crate::error::{Error, Result};
use crate::stats::{par_replicates, KahanSum, MeanEstimate, Rng};

/// Truncation tolerance for the count law cached inside a [`PbdpSpec`].
pub const SPEC_TOL: f64 = 1e-12;

/// `Z` points i.i.d. from `nu`, with `Z` drawn from the stationary law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SpecRepr", try_from = "SpecRepr")]
pub struct PbdpSpec {
    space: CarrierSpace,
    params: BirthDeathParams,
    nu: DiscreteMeasure,
    counts: CountDistribution,
    nu_cdf: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    space: CarrierSpace,
    a: f64,
    b: f64,
    beta: f64,
    nu: DiscreteMeasure,
}

impl From<PbdpSpec> for SpecRepr {
    fn from(s: PbdpSpec) -> Self {
        SpecRepr {
            a: s.params.a(),
            b: s.params.b(),
            beta: s.params.beta(),
            space: s.space,
            nu: s.nu,
        }
    }
}

impl TryFrom<SpecRepr> for PbdpSpec {
    type Error = Error;
    fn try_from(r: SpecRepr) -> Result<Self> {
        PbdpSpec::new(r.space, BirthDeathParams::new(r.a, r.b, r.beta)?, r.nu)
    }
}

impl PbdpSpec {
    pub fn new(space: CarrierSpace, params: BirthDeathParams, nu: DiscreteMeasure) -> Result<Self> {
        let total = nu.total();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "placement measure must have total mass 1, got {total}"
            )));
        }
        nu.validate(&space)?;
        let counts = stationary(&params, SPEC_TOL)?;
        let mut acc = KahanSum::new();
        let nu_cdf = nu
            .atoms()
            .iter()
            .map(|a| {
                acc.add(a.1);
                acc.value() / total
            })
            .collect();
        Ok(Self {
            space,
            params,
            nu,
            counts,
            nu_cdf,
        })
    }

    pub fn space(&self) -> &CarrierSpace {
        &self.space
    }

    pub fn params(&self) -> &BirthDeathParams {
        &self.params
    }

    pub fn nu(&self) -> &DiscreteMeasure {
        &self.nu
    }

    pub fn counts(&self) -> &CountDistribution {
        &self.counts
    }

    /// One location drawn from `nu`.
    pub fn sample_location(&self, rng: &mut Rng) -> f64 {
        let u: f64 = rng.random();
        let i = self.nu_cdf.partition_point(|&c| c <= u).min(self.nu_cdf.len() - 1);
        self.nu.atoms()[i].0
    }
}

pub fn sample_count(dist: &CountDistribution, rng: &mut Rng) -> usize {
    dist.quantile(rng.random())
}

pub fn sample_pbdp(spec: &PbdpSpec, rng: &mut Rng) -> PointPattern {
    let z = sample_count(&spec.counts, rng);
    PointPattern::new((0..z).map(|_| spec.sample_location(rng)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Immigration,
    Birth,
    NaturalDeath,
    Kill,
}

impl EventKind {
    pub fn is_arrival(self) -> bool {
        matches!(self, EventKind::Immigration | EventKind::Birth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub point: f64,
    /// Identity of the particle created or removed.
    pub tag: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemTrajectory {
    pub initial: PointPattern,
    pub horizon: f64,
    pub events: Vec<Event>,
}

impl SystemTrajectory {
    /// Configuration after every event, starting with the initial one at time 0.
    pub fn states(&self) -> Vec<(f64, PointPattern)> {
        let mut out = Vec::with_capacity(self.events.len() + 1);
        let mut cur = self.initial.clone();
        out.push((0.0, cur.clone()));
        for e in &self.events {
            if e.kind.is_arrival() {
                cur.insert(e.point);
            } else {
                let removed = cur.remove_one(e.point);
                debug_assert!(removed, "replay removed an absent point");
            }
            out.push((e.time, cur.clone()));
        }
        out
    }

    pub fn final_pattern(&self) -> PointPattern {
        self.states().pop().map(|s| s.1).unwrap_or_default()
    }

    /// One JSON object per event.
    pub fn to_json_lines(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("event serializes") + "\n")
            .collect()
    }
}

/// Live particles with identity tags.
#[derive(Debug, Clone)]
pub struct ParticleSystem<'a> {
    spec: &'a PbdpSpec,
    tags: Vec<u64>,
    points: Vec<f64>,
    next_tag: u64,
    time: f64,
}

impl<'a> ParticleSystem<'a> {
    /// Initial particles get tags `0..|initial|` in sorted point order.
    pub fn new(spec: &'a PbdpSpec, initial: &PointPattern) -> Self {
        let n = initial.size() as u64;
        Self {
            spec,
            tags: (0..n).collect(),
            points: initial.points().to_vec(),
            next_tag: n,
            time: 0.0,
        }
    }

    pub fn size(&self) -> usize {
        self.tags.len()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn contains_tag(&self, tag: u64) -> bool {
        self.tags.contains(&tag)
    }

    pub fn pattern(&self) -> PointPattern {
        PointPattern::new(self.points.clone())
    }

    /// Holding time until the next event and the event itself.
    pub fn step(&mut self, rng: &mut Rng) -> (f64, Event) {
        let p = self.spec.params;
        let n = self.size();
        let (alpha, beta) = p.rates(n);
        let total = alpha + beta;
        let dt = Exp::new(total).expect("total rate positive").sample(rng);
        self.time += dt;
        let u = rng.random::<f64>() * total;
        let event = if u < alpha {
            let kind = if u < p.a() {
                EventKind::Immigration
            } else {
                EventKind::Birth
            };
            let point = self.spec.sample_location(rng);
            let tag = self.next_tag;
            self.next_tag += 1;
            self.tags.push(tag);
            self.points.push(point);
            Event {
                time: self.time,
                kind,
                point,
                tag,
            }
        } else {
            let kind = if u < alpha + n as f64 {
                EventKind::NaturalDeath
            } else {
                EventKind::Kill
            };
            let victim = rng.random_range(0..n);
            let tag = self.tags.swap_remove(victim);
            let point = self.points.swap_remove(victim);
            Event {
                time: self.time,
                kind,
                point,
                tag,
            }
        };
        (dt, event)
    }
}

/// Event-driven simulation of the particle system up to `horizon`.
pub fn simulate_system(spec: &PbdpSpec, initial: &PointPattern, horizon: f64, rng: &mut Rng) -> Result<SystemTrajectory> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    initial.validate(spec.space())?;
    let mut sys = ParticleSystem::new(spec, initial);
    let mut events = Vec::new();
    loop {
        let (_, e) = sys.step(rng);
        if e.time > horizon {
            break;
        }
        events.push(e);
    }
    Ok(SystemTrajectory {
        initial: initial.clone(),
        horizon,
        events,
    })
}

/// Fraction of `[0, horizon]` the size process spends in each state.
pub fn occupation_law(params: &BirthDeathParams, start: usize, horizon: f64, rng: &mut Rng) -> Vec<f64> {
    let mut time_in: Vec<KahanSum> = Vec::new();
    let mut n = start;
    let mut t = 0.0;
    while t < horizon {
        let (alpha, beta) = params.rates(n);
        let dt = Exp::new(alpha + beta).expect("positive rate").sample(rng);
        let stay = dt.min(horizon - t);
        if time_in.len() <= n {
            time_in.resize(n + 1, KahanSum::new());
        }
        time_in[n].add(stay);
        t += dt;
        if rng.random::<f64>() * (alpha + beta) < alpha {
            n += 1;
        } else {
            n -= 1;
        }
    }
    time_in.iter().map(|s| s.value() / horizon).collect()
}

/// First time the size process started at `from` hits `to`.
pub fn first_passage_time(params: &BirthDeathParams, from: usize, to: usize, rng: &mut Rng) -> f64 {
    let mut n = from;
    let mut t = 0.0;
    while n != to {
        let (alpha, beta) = params.rates(n);
        t += Exp::new(alpha + beta).expect("positive rate").sample(rng);
        if rng.random::<f64>() * (alpha + beta) < alpha {
            n += 1;
        } else {
            n -= 1;
        }
    }
    t
}

/// Start with `m` tagged particles and run until the size first reaches
/// `target`; return how many of the tagged ones died on the way.
pub fn initial_deaths_before(params: &BirthDeathParams, m: usize, target: usize, rng: &mut Rng) -> usize {
    let mut n = m;
    let mut survivors = m;
    while n != target {
        let (alpha, beta) = params.rates(n);
        if rng.random::<f64>() * (alpha + beta) < alpha {
            n += 1;
        } else {
            if rng.random_range(0..n) < survivors {
                survivors -= 1;
            }
            n -= 1;
        }
    }
    m - survivors
}

/// Monte Carlo estimates of `h_f(eta + delta_x) - h_f(eta + delta_y)` for
/// several test functions from one set of coupled paths.
///
/// The two systems share every event; they differ only in the location of
/// the distinguished particle, so the integrand vanishes once it dies.
pub fn estimate_first_differences<F>(
    spec: &PbdpSpec,
    eta: &PointPattern,
    x: f64,
    y: f64,
    fs: &[F],
    reps: usize,
    seed: u64,
) -> Result<Vec<MeanEstimate>>
where
    F: Fn(&PointPattern) -> f64 + Sync,
{
    eta.validate(spec.space())?;
    spec.space().check_point(x)?;
    spec.space().check_point(y)?;
    let k = fs.len();
    if x == y {
        return Ok(vec![MeanEstimate::from_samples(&vec![0.0; reps]); k]);
    }
    let per_rep: Vec<Vec<f64>> = par_replicates(seed, reps, |rng, _| coupled_difference(spec, eta, x, y, fs, rng));
    Ok((0..k)
        .map(|j| {
            let col: Vec<f64> = per_rep.iter().map(|r| r[j]).collect();
            MeanEstimate::from_samples(&col)
        })
        .collect())
}

/// Single test function variant of [`estimate_first_differences`].
pub fn estimate_first_difference<F>(spec: &PbdpSpec, eta: &PointPattern, x: f64, y: f64, f: F, reps: usize, seed: u64) -> Result<MeanEstimate>
where
    F: Fn(&PointPattern) -> f64 + Sync,
{
    Ok(estimate_first_differences(spec, eta, x, y, &[f], reps, seed)?[0])
}

fn coupled_difference<F>(spec: &PbdpSpec, eta: &PointPattern, x: f64, y: f64, fs: &[F], rng: &mut Rng) -> Vec<f64>
where
    F: Fn(&PointPattern) -> f64,
{
    // distinguished particle carries the last initial tag
    let start = eta.with(x);
    let mut sys = ParticleSystem::new(spec, &PointPattern::empty());
    sys.points = eta.points().to_vec();
    sys.points.push(x);
    sys.tags = (0..start.size() as u64).collect();
    sys.next_tag = start.size() as u64;
    let special = start.size() as u64 - 1;

    let mut zx = start;
    let mut zy = eta.with(y);
    let mut acc = vec![KahanSum::new(); fs.len()];
    loop {
        let diffs: Vec<f64> = fs.iter().map(|f| f(&zx) - f(&zy)).collect();
        let (dt, e) = sys.step(rng);
        for (a, d) in acc.iter_mut().zip(&diffs) {
            a.add(d * dt);
        }
        if e.kind.is_arrival() {
            zx.insert(e.point);
            zy.insert(e.point);
        } else if e.tag == special {
            break;
        } else {
            zx.remove_one(e.point);
            zy.remove_one(e.point);
        }
    }
    acc.iter().map(|a| -a.value()).collect()
}

/// `min{(1 + a (e^t - 1) / (2 |eta|))^-1, e^{-(a min b) t}}`.
pub fn survival_ratio_bound(params: &BirthDeathParams, eta_size: usize, t: f64) -> f64 {
    let first = 1.0 / (1.0 + params.a() / (2.0 * eta_size as f64) * t.exp_m1());
    let second = (-(params.a().min(params.b())) * t).exp();
    first.min(second)
}

/// Estimates of the expected share of initial particles among the live
/// ones at each time (zero when the system is empty).
pub fn survival_ratio_curve(spec: &PbdpSpec, eta: &PointPattern, times: &[f64], reps: usize, seed: u64) -> Result<Vec<MeanEstimate>> {
    if eta.is_empty() {
        return Err(Error::InvalidParameter("survival ratio needs a nonempty start".into()));
    }
    eta.validate(spec.space())?;
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = eta.size() as u64;
    let per_rep: Vec<Vec<f64>> = par_replicates(seed, reps, |rng, _| {
        let mut sys = ParticleSystem::new(spec, eta);
        let mut survivors = m as usize;
        let mut out = Vec::with_capacity(sorted.len());
        let mut idx = 0;
        let ratio = |s: usize, n: usize| if n == 0 { 0.0 } else { s as f64 / n as f64 };
        while idx < sorted.len() {
            let (n_before, s_before) = (sys.size(), survivors);
            let (_, e) = sys.step(rng);
            while idx < sorted.len() && sorted[idx] < e.time {
                out.push(ratio(s_before, n_before));
                idx += 1;
            }
            if !e.kind.is_arrival() && e.tag < m {
                survivors -= 1;
            }
        }
        out
    });
    let mut by_time = vec![MeanEstimate::from_samples(&[]); sorted.len()];
    for (j, slot) in by_time.iter_mut().enumerate() {
        let col: Vec<f64> = per_rep.iter().map(|r| r[j]).collect();
        *slot = MeanEstimate::from_samples(&col);
    }
    // restore the caller's order
    let mut out = Vec::with_capacity(times.len());
    for t in times {
        let j = sorted.iter().position(|s| s == t).expect("time present");
        out.push(by_time[j]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carrier::d1;
    use crate::chain::{hitting_up, k_plus};
    use crate::stats::replicate_rng;

    fn unit_spec(a: f64, b: f64, beta: f64) -> PbdpSpec {
        let nu = DiscreteMeasure::uniform(&[0.1, 0.4, 0.8]).unwrap();
        PbdpSpec::new(CarrierSpace::UnitInterval, BirthDeathParams::new(a, b, beta).unwrap(), nu).unwrap()
    }

    #[test]
    fn rejects_unnormalized_nu() {
        let nu = DiscreteMeasure::new(vec![(0.5, 0.5)]).unwrap();
        assert!(PbdpSpec::new(CarrierSpace::UnitInterval, BirthDeathParams::poisson(1.0).unwrap(), nu).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = unit_spec(1.5, 0.25, 0.5);
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains(r#""a":1.5"#));
        let back: PbdpSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn point_mass_counts() {
        let d = CountDistribution::point_mass(3);
        let mut rng = replicate_rng(1, 0);
        assert!((0..100).all(|_| sample_count(&d, &mut rng) == 3));
    }

    #[test]
    fn poisson_count_mean() {
        let spec = unit_spec(2.0, 0.0, 0.0);
        let draws: Vec<f64> = par_replicates(4, 200_000, |rng, _| sample_pbdp(&spec, rng).size() as f64);
        let m = MeanEstimate::from_samples(&draws);
        assert!(m.agrees_with(2.0, 3.0, 0.0), "{m:?}");
    }

    #[test]
    fn short_horizon_has_no_events() {
        let spec = unit_spec(1.0, 0.0, 0.0);
        let t = simulate_system(&spec, &PointPattern::empty(), 1e-12, &mut replicate_rng(0, 0)).unwrap();
        assert!(t.events.is_empty());
        let err = simulate_system(&spec, &PointPattern::empty(), 0.0, &mut replicate_rng(0, 0));
        assert!(err.is_err());
    }

    #[test]
    fn trajectory_replay_is_consistent() {
        let spec = unit_spec(3.0, 0.4, 0.2);
        let init = PointPattern::new(vec![0.1, 0.4]);
        let t = simulate_system(&spec, &init, 20.0, &mut replicate_rng(2, 0)).unwrap();
        assert!(t.events.windows(2).all(|w| w[0].time < w[1].time));
        let states = t.states();
        assert_eq!(states.len(), t.events.len() + 1);
        let kinds: std::collections::HashSet<_> = t.events.iter().map(|e| e.kind).collect();
        assert_eq!(kinds.len(), 4);
        let line = t.to_json_lines();
        let first: Event = serde_json::from_str(line.lines().next().unwrap()).unwrap();
        assert_eq!(first, t.events[0]);
    }

    #[test]
    fn occupation_matches_stationary() {
        let p = BirthDeathParams::new(2.0, 0.3, 0.1).unwrap();
        let pi = stationary(&p, 1e-12).unwrap();
        let occ = occupation_law(&p, 0, 20_000.0, &mut replicate_rng(3, 0));
        let len = occ.len().max(pi.probs().len());
        let tv: f64 = 0.5 * (0..len).map(|k| (occ.get(k).copied().unwrap_or(0.0) - pi.pmf(k)).abs()).sum::<f64>();
        assert!(tv < 0.02, "tv {tv}");
    }

    #[test]
    fn hitting_up_matches_first_passage() {
        let p = BirthDeathParams::poisson(2.0).unwrap();
        let pi = stationary(&p, 1e-12).unwrap();
        let draws: Vec<f64> = par_replicates(5, 50_000, |rng, _| first_passage_time(&p, 3, 4, rng));
        let m = MeanEstimate::from_samples(&draws);
        assert!(m.agrees_with(hitting_up(&p, &pi, 3).unwrap(), 3.0, 0.0), "{m:?}");
    }

    #[test]
    fn k_plus_matches_simulation() {
        let p = BirthDeathParams::new(1.0, 0.5, 0.2).unwrap();
        let draws: Vec<f64> = par_replicates(6, 50_000, |rng, _| initial_deaths_before(&p, 5, 6, rng) as f64);
        let m = MeanEstimate::from_samples(&draws);
        assert!(m.agrees_with(k_plus(&p, 5), 3.0, 0.0), "{m:?} vs {}", k_plus(&p, 5));
    }

    #[test]
    fn equal_points_give_zero_difference() {
        let spec = unit_spec(1.0, 0.2, 0.1);
        let eta = PointPattern::new(vec![0.4]);
        let r = estimate_first_difference(&spec, &eta, 0.1, 0.1, |p: &PointPattern| p.size() as f64, 50, 1).unwrap();
        assert_eq!(r.mean, 0.0);
        let c = estimate_first_difference(&spec, &eta, 0.1, 0.8, |_: &PointPattern| 7.0, 200, 1).unwrap();
        assert_eq!(c.mean, 0.0);
        assert_eq!(c.stderr, 0.0);
    }

    #[test]
    fn first_difference_respects_c_bound() {
        let spec = unit_spec(2.0, 0.3, 0.0);
        let eta = PointPattern::new(vec![0.4, 0.8]);
        let reference = PointPattern::new(vec![0.1, 0.1, 0.4]);
        let space = spec.space().clone();
        let f = move |p: &PointPattern| d1(&space, p, &reference);
        let r = estimate_first_difference(&spec, &eta, 0.1, 0.8, f, 4000, 3).unwrap();
        let bound = crate::chain::stein_c_bound(spec.params(), 2);
        assert!(r.mean.abs() <= bound + 3.0 * r.stderr, "{r:?} vs {bound}");
        assert!(r.stderr > 0.0);
    }

    #[test]
    fn survival_curve_starts_at_one_and_stays_below_bound() {
        let spec = unit_spec(2.0, 0.5, 0.1);
        let eta = PointPattern::new(vec![0.1, 0.4, 0.8]);
        let times = [0.0, 0.5, 1.0, 2.0];
        let est = survival_ratio_curve(&spec, &eta, &times, 5000, 9).unwrap();
        assert_eq!(est[0].mean, 1.0);
        for (t, e) in times.iter().zip(&est) {
            let b = survival_ratio_bound(spec.params(), 3, *t);
            assert!(e.mean <= b + 3.0 * e.stderr + 1e-12, "t={t}: {e:?} vs {b}");
        }
    }
}
