//! Empirical d2 between equal-p Bernoulli processes and their fitted PBDP,
//! against the same sweep for the Poisson-process fit.

use pbdp::distance::empirical_d2;
use pbdp::fitting::{fit_model, poisson_fit};
use pbdp::models::ModelSpec;
use pbdp::process::sample_pbdp;

fn main() -> pbdp::error::Result<()> {
    let samples = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(400);
    println!("n,fitted,fitted_se,poisson,poisson_se");
    for n in [8, 32, 128, 512] {
        let model = ModelSpec::bernoulli_equal(n, 0.2)?;
        let fit = fit_model(&model)?.spec;
        let pois = poisson_fit(&model)?;
        let space = model.space();
        let e = empirical_d2(&space, |r| model.sample(r), 1, |r| sample_pbdp(&fit, r), 2, samples)?;
        let q = empirical_d2(&space, |r| model.sample(r), 1, |r| sample_pbdp(&pois, r), 2, samples)?;
        println!("{n},{:.4},{:.4},{:.4},{:.4}", e.value, e.stderr, q.value, q.stderr);
    }
    Ok(())
}
