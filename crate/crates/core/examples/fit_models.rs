//! Moment-fit PBDPs to the three model families.

use pbdp::experiment::cp_sweep_model;
use pbdp::fitting::fit_model;
use pbdp::models::ModelSpec;

fn main() -> pbdp::error::Result<()> {
    let models = [
        ModelSpec::bernoulli_equal(10, 0.1)?,
        ModelSpec::bernoulli(vec![0.1, 0.3, 0.2, 0.05])?,
        ModelSpec::runs(100, 2, 0.3)?,
        ModelSpec::runs(100, 2, 0.8)?,
        cp_sweep_model(4.0)?,
    ];
    for m in &models {
        match fit_model(m) {
            Ok(fit) => println!("{}: {}", m.name(), fit.to_json()),
            Err(e) => println!("{}: {}", m.name(), pbdp::experiment::error_json(&e)),
        }
    }
    Ok(())
}
