//! Run the spatial birth-death particle system and compare the time spent
//! at each size with the stationary law.

use pbdp::carrier::{CarrierSpace, DiscreteMeasure, PointPattern};
use pbdp::chain::BirthDeathParams;
use pbdp::process::{occupation_law, simulate_system, PbdpSpec};
use pbdp::stats::replicate_rng;

fn main() -> pbdp::error::Result<()> {
    let params = BirthDeathParams::new(2.0, 0.3, 0.05)?;
    let nu = DiscreteMeasure::new(vec![(0.2, 0.5), (0.7, 0.5)])?;
    let spec = PbdpSpec::new(CarrierSpace::UnitInterval, params, nu)?;

    let mut rng = replicate_rng(1, 0);
    let traj = simulate_system(&spec, &PointPattern::new(vec![0.2]), 5.0, &mut rng)?;
    print!("{}", traj.to_json_lines());
    println!("final pattern {:?}", traj.final_pattern().points());

    let occ = occupation_law(&params, 0, 20_000.0, &mut rng);
    println!("k,occupation,stationary");
    for (k, o) in occ.iter().enumerate().take(10) {
        println!("{k},{o:.4},{:.4}", spec.counts().pmf(k));
    }
    Ok(())
}
