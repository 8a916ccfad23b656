//! Stationary law, hitting times and Stein factors for one rate triple.
//!
//! Usage: `cargo run --example stationary_chain -- [a] [b] [beta]`

use pbdp::chain::{hitting_down, hitting_up, stationary, stein_c_bound, stein_d2_bound, BirthDeathParams};

fn main() -> pbdp::error::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let get = |i: usize, d: f64| args.get(i).copied().unwrap_or(d);
    let params = BirthDeathParams::new(get(0, 3.0), get(1, 0.2), get(2, 0.1))?;
    let dist = stationary(&params, 1e-12)?;
    println!("mean {:.6}  variance {:.6}  tail bound {:.2e}", dist.mean(), dist.variance(), dist.tail_bound());
    println!("k,pi,up_time,down_time,c_bound,d2_bound");
    for k in 0..=10.min(dist.max_state()) {
        let down = if k == 0 { f64::NAN } else { hitting_down(&params, &dist, k)? };
        println!(
            "{k},{:.6e},{:.6},{:.6},{:.6},{:.6}",
            dist.pmf(k),
            hitting_up(&params, &dist, k)?,
            down,
            stein_c_bound(&params, k),
            stein_d2_bound(&params, k)
        );
    }
    Ok(())
}
