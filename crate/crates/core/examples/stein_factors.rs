//! Coupled Monte Carlo first differences of the Stein solution against the
//! analytic bound `C_n`.

use pbdp::carrier::{CarrierSpace, DiscreteMeasure, PointPattern};
use pbdp::chain::{stein_c_bound, BirthDeathParams};
use pbdp::experiment::stein_test_functions;
use pbdp::process::{estimate_first_differences, PbdpSpec};

fn main() -> pbdp::error::Result<()> {
    let reps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let space = CarrierSpace::UnitInterval;
    let params = BirthDeathParams::new(2.0, 0.3, 0.0)?;
    let spec = PbdpSpec::new(space.clone(), params, DiscreteMeasure::uniform(&[0.1, 0.5, 0.9])?)?;
    let fs = stein_test_functions(&space);
    println!("n,function,estimate,stderr,c_bound");
    for n in [0usize, 2, 4, 8] {
        let eta = PointPattern::new((0..n).map(|i| (i as f64 + 0.5) / n as f64).collect());
        let est = estimate_first_differences(&spec, &eta, 0.0, 1.0, &fs, reps, n as u64)?;
        for (j, e) in est.iter().enumerate() {
            println!("{n},{j},{:.5},{:.5},{:.5}", e.mean, e.stderr, stein_c_bound(&params, n));
        }
    }
    Ok(())
}
