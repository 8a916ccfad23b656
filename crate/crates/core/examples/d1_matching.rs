//! d1 between patterns on the interval, the circle and a finite site set,
//! and the cost of shuffling a pattern to cell centers.

use pbdp::carrier::{d1, shuffle, CarrierSpace, PartitionScheme, PointPattern};

fn main() -> pbdp::error::Result<()> {
    let xi = PointPattern::new(vec![0.05, 0.4, 0.95]);
    let eta = PointPattern::new(vec![0.1, 0.5, 0.9]);
    for space in [CarrierSpace::UnitInterval, CarrierSpace::Circle] {
        println!("{space:?}: d1 = {:.4}", d1(&space, &xi, &eta));
    }
    let sites = CarrierSpace::sites_on_line(vec![0.0, 0.3, 0.6, 1.0])?;
    let a = PointPattern::new(vec![0.0, 0.0, 1.0]);
    let b = PointPattern::new(vec![0.3, 0.6, 1.0]);
    println!("sites: d1 = {:.4}", d1(&sites, &a, &b));
    println!("different sizes: d1 = {}", d1(&CarrierSpace::UnitInterval, &xi, &PointPattern::new(vec![0.5])));

    let scheme = PartitionScheme::blocks(CarrierSpace::UnitInterval, 10, 2)?;
    let moved = shuffle(&scheme, &xi)?;
    println!(
        "shuffled {:?} -> {:?}: d1 = {:.4} <= d0(G) = {:.4}",
        xi.points(),
        moved.points(),
        d1(&CarrierSpace::UnitInterval, &xi, &moved),
        scheme.resolution()
    );
    Ok(())
}
