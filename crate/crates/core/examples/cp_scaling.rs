//! Compound Poisson: third central moment and d2 to the fitted PBDP as the
//! single-point intensity grows.

use pbdp::distance::empirical_d2;
use pbdp::experiment::cp_sweep_model;
use pbdp::fitting::fit_model;
use pbdp::process::sample_pbdp;

fn main() -> pbdp::error::Result<()> {
    println!("scale,third_central,third_mc,d2,d2_se");
    for s in [1.0, 4.0, 16.0] {
        let model = cp_sweep_model(s)?;
        let fit = fit_model(&model)?;
        let mc = model.mc_moments(50_000, 3);
        let e = empirical_d2(&model.space(), |r| model.sample(r), 13, |r| sample_pbdp(&fit.spec, r), 13, 400)?;
        println!("{s},{:.4},{:.4},{:.4},{:.4}", model.moments().third_central(), mc.third_central.mean, e.value, e.stderr);
    }
    Ok(())
}
