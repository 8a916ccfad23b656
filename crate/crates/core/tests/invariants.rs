use proptest::prelude::*;

use pbdp::bounds::{bound_shape, default_partition, rbar, DEFAULT_U};
use pbdp::carrier::{shuffle, CarrierSpace, PartitionScheme, PointPattern};
use pbdp::chain::{k_minus_converged, k_plus, BirthDeathParams};
use pbdp::distance::empirical_d2;
use pbdp::experiment::cp_sweep_model;
use pbdp::fitting::fit_model;
use pbdp::models::ModelSpec;
use pbdp::process::{sample_count, sample_pbdp};
use pbdp::stats::par_replicates;

fn exact_rbar(p: &[f64], site: usize, scheme: &PartitionScheme, a: f64, u: f64) -> f64 {
    use std::collections::HashMap;
    let n = p.len();
    let cells: Vec<usize> = (0..n).map(|i| scheme.cell_of((i + 1) as f64 / n as f64).unwrap()).collect();
    let k = scheme.len();
    let mut law: HashMap<Vec<u32>, f64> = HashMap::new();
    let mut low = 0.0;
    for mask in 0u32..(1 << n) {
        let mut w = 1.0;
        let mut v = vec![0u32; k];
        let mut outside = 0;
        for i in 0..n {
            let on = mask >> i & 1 == 1;
            w *= if on { p[i] } else { 1.0 - p[i] };
            if on && i != site {
                v[cells[i]] += 1;
                outside += 1;
            }
        }
        if outside as f64 + 1.0 <= a / u {
            low += w;
        }
        *law.entry(v).or_insert(0.0) += w;
    }
    let mut max_tv: f64 = 0.0;
    for j in 0..k {
        let mut support: Vec<Vec<u32>> = law.keys().cloned().collect();
        support.extend(law.keys().map(|v| {
            let mut w = v.clone();
            w[j] += 1;
            w
        }));
        support.sort();
        support.dedup();
        let tv: f64 = support
            .iter()
            .map(|v| {
                let here = law.get(v).copied().unwrap_or(0.0);
                let below = if v[j] == 0 {
                    0.0
                } else {
                    let mut w = v.clone();
                    w[j] -= 1;
                    law.get(&w).copied().unwrap_or(0.0)
                };
                (here - below).abs()
            })
            .sum::<f64>()
            / 2.0;
        max_tv = max_tv.max(tv);
    }
    4.0 * low + (4.0 * u + 10.0) / a * max_tv
}

#[test]
fn rbar_matches_enumeration_on_small_bernoulli() {
    let p = vec![0.1, 0.25, 0.15, 0.3, 0.2, 0.05, 0.35, 0.2, 0.1, 0.25];
    let model = ModelSpec::bernoulli(p.clone()).unwrap();
    let fit = fit_model(&model).unwrap();
    let a = fit.params().a();
    let scheme = PartitionScheme::blocks(CarrierSpace::UnitInterval, 10, 5).unwrap();
    for (site, u) in [(0, DEFAULT_U), (6, DEFAULT_U), (3, 0.2)] {
        let est = rbar(&model, a, site, &scheme, u, 100_000, 20 + site as u64).unwrap();
        let exact = exact_rbar(&p, site, &scheme, a, u);
        assert!(
            (est.estimate - exact).abs() <= 3.0 * est.stderr,
            "site {site} u {u}: {} +- {} vs {exact}",
            est.estimate,
            est.stderr
        );
    }
}

#[test]
fn empirical_d2_is_symmetric_in_its_samplers() {
    let m = ModelSpec::bernoulli(vec![0.2, 0.4, 0.3, 0.1]).unwrap();
    let fit = fit_model(&m).unwrap();
    let space = m.space();
    let fwd = empirical_d2(&space, |r| m.sample(r), 3, |r| sample_pbdp(&fit.spec, r), 4, 200).unwrap();
    let back = empirical_d2(&space, |r| sample_pbdp(&fit.spec, r), 4, |r| m.sample(r), 3, 200).unwrap();
    assert!((fwd.value - back.value).abs() <= 1e-9);
    assert!((fwd.value - back.value).abs() <= 3.0 * fwd.stderr.max(back.stderr));
}

#[test]
fn self_distance_bias_shrinks_with_samples() {
    let m = ModelSpec::bernoulli_equal(5, 0.3).unwrap();
    let space = m.space();
    let avg = |n: usize| -> f64 {
        (0..20u64)
            .map(|r| empirical_d2(&space, |g| m.sample(g), 2 * r, |g| m.sample(g), 2 * r + 1, n).unwrap().value)
            .sum::<f64>()
            / 20.0
    };
    let (small, large) = (avg(50), avg(800));
    assert!(large < small, "n=50: {small}, n=800: {large}");
}

/// Upper 1% point of chi-square via the Wilson-Hilferty approximation.
fn chi2_upper_1pct(df: f64) -> f64 {
    let h = 2.0 / (9.0 * df);
    df * (1.0 - h + 2.326_348 * h.sqrt()).powi(3)
}

#[test]
fn pbdp_counts_follow_stationary_law() {
    for (a, b, beta) in [(2.0, 0.3, 0.0), (4.0, 0.0, 0.2), (1.0, 0.5, 0.1)] {
        let params = BirthDeathParams::new(a, b, beta).unwrap();
        let dist = pbdp::chain::stationary(&params, 1e-12).unwrap();
        let reps = 50_000;
        let draws = par_replicates(77, reps, |rng, _| sample_count(&dist, rng));
        // pool states so every expected count is at least 20
        let mut bins: Vec<(f64, f64)> = Vec::new();
        let (mut e, mut o) = (0.0, 0.0);
        let big = dist.max_state();
        for k in 0..=big {
            e += dist.pmf(k) * reps as f64;
            o += draws.iter().filter(|&&d| d == k).count() as f64;
            if e >= 20.0 && dist.survival(k + 1) * reps as f64 >= 20.0 {
                bins.push((o, e));
                e = 0.0;
                o = 0.0;
            }
        }
        bins.push((o, e));
        let stat: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
        let df = (bins.len() - 1) as f64;
        assert!(stat <= chi2_upper_1pct(df), "({a},{b},{beta}): chi2 {stat} on {df} df");
    }
}

#[test]
fn simulated_count_moments_match_model_moments() {
    let models = [
        ModelSpec::bernoulli(vec![0.1, 0.5, 0.3, 0.7, 0.2]).unwrap(),
        ModelSpec::runs(40, 3, 0.5).unwrap(),
        cp_sweep_model(4.0).unwrap(),
    ];
    for m in &models {
        let exact = m.moments();
        let mc = m.mc_moments(100_000, 5);
        assert!(mc.mean.agrees_with(exact.total_mean, 3.0, 0.0), "{} mean", m.name());
        assert!(mc.variance.agrees_with(exact.variance, 3.0, 0.0), "{} variance", m.name());
    }
}

#[test]
fn runs_bound_shape_decreases_in_n() {
    for p in [0.2, 0.5] {
        let shapes: Vec<f64> = [100usize, 1000, 10_000]
            .iter()
            .map(|&n| {
                let m = ModelSpec::runs(n, 2, p).unwrap();
                bound_shape(&m, &fit_model(&m).unwrap(), &default_partition(&m).unwrap()).unwrap()
            })
            .collect();
        assert!(shapes.windows(2).all(|w| w[1] < w[0]), "p = {p}: {shapes:?}");
    }
}

proptest! {
    #[test]
    fn shuffle_is_idempotent(pts in prop::collection::vec(0.0..=1.0f64, 0..30), n in 1usize..40, w in 1usize..10, circle in any::<bool>()) {
        let space = if circle { CarrierSpace::Circle } else { CarrierSpace::UnitInterval };
        let scheme = PartitionScheme::blocks(space, n, w).unwrap();
        let once = shuffle(&scheme, &PointPattern::new(pts)).unwrap();
        prop_assert_eq!(shuffle(&scheme, &once).unwrap(), once);
    }

    #[test]
    fn death_counts_stay_in_range(a in 0.1..10.0f64, b in 0.0..0.9f64, beta in 0.0..3.0f64, m in 1usize..40) {
        let params = BirthDeathParams::new(a, b, beta).unwrap();
        let kp = k_plus(&params, m);
        prop_assert!((0.0..=m as f64).contains(&kp));
        let br = k_minus_converged(&params, m, 1e-8).unwrap();
        prop_assert!(br.low >= 1.0 - 1e-12 && br.high <= m as f64 + 1e-12 && br.low <= br.high);
    }
}
