//! Variance of the runs count: closed form against simulation, and the
//! over/underdispersion regime across `p`.

use pbdp::models::{runs_overdispersed, runs_variance_closed_form, ModelSpec};

fn main() -> pbdp::error::Result<()> {
    let (n, k) = (100, 2);
    println!("p,mean,var_closed,var_mc,var_mc_se,overdispersed");
    for i in 1..=9 {
        let p = 0.1 * i as f64;
        let mc = ModelSpec::runs(n, k, p)?.mc_moments(20_000, i);
        println!(
            "{p:.1},{:.4},{:.4},{:.4},{:.4},{}",
            n as f64 * p.powi(k as i32),
            runs_variance_closed_form(n, k, p),
            mc.variance.mean,
            mc.variance.stderr,
            runs_overdispersed(k, p)
        );
    }
    Ok(())
}
