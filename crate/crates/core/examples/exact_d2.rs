//! Exact d2 by enumeration for a tiny Bernoulli model and its fit, next to
//! the empirical estimate and the count/location coupling bound.

use pbdp::distance::{coupling_bound, empirical_d2, enumerate_pbdp_auto, exact_d2_small, ConfigDistribution};
use pbdp::fitting::{fit_model, poisson_fit};
use pbdp::models::ModelSpec;
use pbdp::process::sample_pbdp;

fn main() -> pbdp::error::Result<()> {
    let model = ModelSpec::bernoulli(vec![0.2, 0.3, 0.1])?;
    let fit = fit_model(&model)?;
    let pois = poisson_fit(&model)?;
    let target = ConfigDistribution::from_model(&model)?;
    let fitted = enumerate_pbdp_auto(&fit.spec)?;
    println!("configurations: target {}, fitted {}", target.len(), fitted.len());
    println!("exact d2(model, fit)     = {:.5}", exact_d2_small(&target, &fitted)?.value);
    println!("exact d2(model, poisson) = {:.5}", exact_d2_small(&target, &enumerate_pbdp_auto(&pois)?)?.value);
    println!("coupling bound(fit, poisson) = {:.5}", coupling_bound(&fit.spec, &pois)?);
    for n in [100, 400, 1600] {
        let e = empirical_d2(&model.space(), |r| model.sample(r), 5, |r| sample_pbdp(&fit.spec, r), 5, n)?;
        println!("empirical d2 at {n:>4} samples = {:.5} +- {:.5}", e.value, e.stderr);
    }
    Ok(())
}
