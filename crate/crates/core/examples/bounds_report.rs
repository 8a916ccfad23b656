//! Assemble the error bound for a Bernoulli model and print its terms.

use pbdp::bounds::{assemble_theorem_bound, default_partition, DEFAULT_U};
use pbdp::fitting::fit_model;
use pbdp::models::ModelSpec;

fn main() -> pbdp::error::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let model = ModelSpec::bernoulli_equal(n, 0.2)?;
    let fit = fit_model(&model)?;
    let scheme = default_partition(&model)?;
    let report = assemble_theorem_bound(&model, &fit, &scheme, DEFAULT_U, 2000, 1)?;
    println!("section,name,value,stderr");
    for (section, name, value, stderr) in report.rows() {
        println!("{section},{name},{value:.5},{stderr:.5}");
    }
    println!("bound {:.5} +- {:.5} (order terms {:.5})", report.value(), report.stderr(), report.order_value());
    Ok(())
}
