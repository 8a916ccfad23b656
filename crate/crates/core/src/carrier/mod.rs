//! Carrier spaces, configurations, the d1 matching metric, W1 between
//! probability measures and partition shuffles.

pub mod assignment;
pub mod transport;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::compensated_sum;
pub use assignment::{solve_assignment, solve_assignment_flat, Assignment};
pub use transport::{solve_transport, TransportPlan};

/// Compact carrier space with a metric (or pseudometric) bounded by 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "SpaceRepr")]
pub enum CarrierSpace {
    UnitInterval,
    /// `[0, 1)` with `0` and `1` identified.
    Circle,
    /// Labelled sites with an explicit distance matrix.
    FiniteSites { sites: Vec<f64>, distances: Vec<Vec<f64>> },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SpaceRepr {
    UnitInterval,
    Circle,
    FiniteSites { sites: Vec<f64>, distances: Vec<Vec<f64>> },
}

impl TryFrom<SpaceRepr> for CarrierSpace {
    type Error = Error;
    fn try_from(r: SpaceRepr) -> Result<Self> {
        match r {
            SpaceRepr::UnitInterval => Ok(CarrierSpace::UnitInterval),
            SpaceRepr::Circle => Ok(CarrierSpace::Circle),
            SpaceRepr::FiniteSites { sites, distances } => CarrierSpace::finite_sites(sites, distances),
        }
    }
}

const METRIC_TOL: f64 = 1e-12;

impl CarrierSpace {
    /// Validated finite site space. Sites are reordered ascending together
    /// with the matrix; the triangle inequality is checked exhaustively.
    pub fn finite_sites(sites: Vec<f64>, distances: Vec<Vec<f64>>) -> Result<Self> {
        let m = sites.len();
        if m == 0 {
            return Err(Error::InvalidParameter("finite site space needs at least one site".into()));
        }
        if distances.len() != m || distances.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidParameter(format!(
                "distance matrix must be {m} x {m}"
            )));
        }
        if sites.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter("site labels must be finite".into()));
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| sites[i].total_cmp(&sites[j]));
        let sorted_sites: Vec<f64> = order.iter().map(|&i| sites[i]).collect();
        if sorted_sites.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("site labels must be distinct".into()));
        }
        let d: Vec<Vec<f64>> = order
            .iter()
            .map(|&i| order.iter().map(|&j| distances[i][j]).collect())
            .collect();
        for i in 0..m {
            if d[i][i] != 0.0 {
                return Err(Error::InvalidParameter(format!("nonzero diagonal at site {i}")));
            }
            for j in 0..m {
                let x = d[i][j];
                if !(0.0..=1.0).contains(&x) {
                    return Err(Error::InvalidParameter(format!(
                        "distance {x} at ({i}, {j}) outside [0, 1]"
                    )));
                }
                if x != d[j][i] {
                    return Err(Error::InvalidParameter(format!("asymmetric distance at ({i}, {j})")));
                }
            }
        }
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    if d[i][k] > d[i][j] + d[j][k] + METRIC_TOL {
                        return Err(Error::InvalidParameter(format!(
                            "triangle inequality fails for sites ({i}, {j}, {k})"
                        )));
                    }
                }
            }
        }
        Ok(CarrierSpace::FiniteSites {
            sites: sorted_sites,
            distances: d,
        })
    }

    /// Sites with `d0 = |x - y|` clipped to 1 (a true metric).
    pub fn sites_on_line(sites: Vec<f64>) -> Result<Self> {
        let d = sites
            .iter()
            .map(|x| sites.iter().map(|y| (x - y).abs().min(1.0)).collect())
            .collect();
        Self::finite_sites(sites, d)
    }

    /// Sites under the all-zero pseudometric; d1 then only sees sizes.
    pub fn sites_zero_metric(sites: Vec<f64>) -> Result<Self> {
        let m = sites.len();
        Self::finite_sites(sites, vec![vec![0.0; m]; m])
    }

    pub fn site_index(&self, x: f64) -> Option<usize> {
        match self {
            CarrierSpace::FiniteSites { sites, .. } => sites.binary_search_by(|s| s.total_cmp(&x)).ok(),
            _ => None,
        }
    }

    pub fn sites(&self) -> Option<&[f64]> {
        match self {
            CarrierSpace::FiniteSites { sites, .. } => Some(sites),
            _ => None,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match self {
            CarrierSpace::UnitInterval | CarrierSpace::Circle => (0.0..=1.0).contains(&x),
            CarrierSpace::FiniteSites { .. } => self.site_index(x).is_some(),
        }
    }

    pub fn check_point(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else if matches!(self, CarrierSpace::FiniteSites { .. }) {
            Err(Error::NotASite { point: x })
        } else {
            Err(Error::InvalidParameter(format!("point {x} outside [0, 1]")))
        }
    }

    /// The ground distance. Off-site points on a site space are at distance 1.
    pub fn d0(&self, x: f64, y: f64) -> f64 {
        match self {
            CarrierSpace::UnitInterval => (x - y).abs().min(1.0),
            CarrierSpace::Circle => circle_distance(x, y),
            CarrierSpace::FiniteSites { distances, .. } => {
                match (self.site_index(x), self.site_index(y)) {
                    (Some(i), Some(j)) => distances[i][j],
                    _ => 1.0,
                }
            }
        }
    }

    /// True when every pair of distinct points has positive distance.
    pub fn is_true_metric(&self) -> bool {
        match self {
            CarrierSpace::FiniteSites { distances, .. } => distances
                .iter()
                .enumerate()
                .all(|(i, r)| r.iter().enumerate().all(|(j, &d)| i == j || d > 0.0)),
            _ => true,
        }
    }
}

fn circle_distance(x: f64, y: f64) -> f64 {
    let t = (x - y).abs().rem_euclid(1.0);
    t.min(1.0 - t)
}

/// Finite multiset of carrier points, kept sorted.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointPattern {
    points: Vec<f64>,
}

impl PointPattern {
    pub fn new(mut points: Vec<f64>) -> Self {
        points.sort_by(f64::total_cmp);
        Self { points }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn insert(&mut self, x: f64) {
        let pos = self.points.partition_point(|p| p.total_cmp(&x) == Ordering::Less);
        self.points.insert(pos, x);
    }

    /// Remove one copy of `x`; false if absent.
    pub fn remove_one(&mut self, x: f64) -> bool {
        match self.points.binary_search_by(|p| p.total_cmp(&x)) {
            Ok(pos) => {
                self.points.remove(pos);
                true
            }
            Err(_) => false,
        }
    }

    pub fn with(&self, x: f64) -> Self {
        let mut p = self.clone();
        p.insert(x);
        p
    }

    /// Multiplicity of `x`.
    pub fn count(&self, x: f64) -> usize {
        let lo = self.points.partition_point(|p| p.total_cmp(&x) == Ordering::Less);
        let hi = self.points.partition_point(|p| p.total_cmp(&x) != Ordering::Greater);
        hi - lo
    }

    /// Number of points satisfying `pred`.
    pub fn count_where<F: Fn(f64) -> bool>(&self, pred: F) -> usize {
        self.points.iter().filter(|&&p| pred(p)).count()
    }

    pub fn filter<F: Fn(f64) -> bool>(&self, pred: F) -> Self {
        Self {
            points: self.points.iter().copied().filter(|&p| pred(p)).collect(),
        }
    }

    pub fn validate(&self, space: &CarrierSpace) -> Result<()> {
        self.points.iter().try_for_each(|&p| space.check_point(p))
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("pattern serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let p: PointPattern = serde_json::from_str(line)
            .map_err(|e| Error::InvalidParameter(format!("bad pattern line: {e}")))?;
        Ok(Self::new(p.points))
    }
}

/// Weighted atoms; equal points are merged and zero weights dropped.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr")]
pub struct DiscreteMeasure {
    atoms: Vec<(f64, f64)>,
}

#[derive(Deserialize)]
struct MeasureRepr {
    atoms: Vec<(f64, f64)>,
}

impl TryFrom<MeasureRepr> for DiscreteMeasure {
    type Error = Error;
    fn try_from(r: MeasureRepr) -> Result<Self> {
        DiscreteMeasure::new(r.atoms)
    }
}

impl DiscreteMeasure {
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        for &(x, w) in &atoms {
            if !x.is_finite() || !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidParameter(format!("bad atom ({x}, {w})")));
            }
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += w,
                _ => merged.push((x, w)),
            }
        }
        merged.retain(|a| a.1 > 0.0);
        Ok(Self { atoms: merged })
    }

    pub fn dirac(x: f64) -> Self {
        Self { atoms: vec![(x, 1.0)] }
    }

    /// Equal weights on the given points.
    pub fn uniform(points: &[f64]) -> Result<Self> {
        let w = 1.0 / points.len() as f64;
        Self::new(points.iter().map(|&x| (x, w)).collect())
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.atoms.iter().map(|a| a.1))
    }

    pub fn weight_at(&self, x: f64) -> f64 {
        self.atoms
            .binary_search_by(|a| a.0.total_cmp(&x))
            .map(|i| self.atoms[i].1)
            .unwrap_or(0.0)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.atoms.iter().map(|&(x, w)| (x, w * c)).collect())
    }

    pub fn normalized(&self) -> Result<Self> {
        let t = self.total();
        if t <= 0.0 {
            return Err(Error::InvalidParameter("cannot normalize a zero measure".into()));
        }
        self.scaled(1.0 / t)
    }

    pub fn validate(&self, space: &CarrierSpace) -> Result<()> {
        self.atoms.iter().try_for_each(|&(x, _)| space.check_point(x))
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("measure serializes")
    }
}

/// d1 between two configurations. Sorted matching on the interval and the
/// best cyclic shift of sorted orders on the circle are exact; site spaces
/// go through the assignment solver.
pub fn d1(space: &CarrierSpace, xi: &PointPattern, eta: &PointPattern) -> f64 {
    let n = xi.size();
    if n != eta.size() {
        return 1.0;
    }
    if n == 0 {
        return 0.0;
    }
    let (a, b) = (xi.points(), eta.points());
    let total = match space {
        CarrierSpace::UnitInterval => compensated_sum(a.iter().zip(b).map(|(x, y)| space.d0(*x, *y))),
        CarrierSpace::Circle => (0..n)
            .map(|s| compensated_sum((0..n).map(|i| circle_distance(a[i], b[(i + s) % n]))))
            .fold(f64::INFINITY, f64::min),
        CarrierSpace::FiniteSites { .. } => return d1_by_assignment(space, xi, eta),
    };
    (total / n as f64).min(1.0)
}

/// d1 through the general assignment solver, whatever the space.
pub fn d1_by_assignment(space: &CarrierSpace, xi: &PointPattern, eta: &PointPattern) -> f64 {
    let n = xi.size();
    if n != eta.size() {
        return 1.0;
    }
    if n == 0 {
        return 0.0;
    }
    let cost: Vec<f64> = xi
        .points()
        .iter()
        .flat_map(|&x| eta.points().iter().map(move |&y| space.d0(x, y)))
        .collect();
    let a = solve_assignment_flat(n, &cost).expect("d0 costs are finite");
    (a.cost / n as f64).min(1.0)
}

/// Wasserstein-1 under d0 between two probability measures.
pub fn w1_measures(space: &CarrierSpace, rho1: &DiscreteMeasure, rho2: &DiscreteMeasure) -> Result<f64> {
    let (t1, t2) = (rho1.total(), rho2.total());
    for t in [t1, t2] {
        if (t - 1.0).abs() > 1e-9 {
            return Err(Error::MassMismatch { left: t1, right: t2 });
        }
    }
    rho1.validate(space)?;
    rho2.validate(space)?;
    if matches!(space, CarrierSpace::UnitInterval) {
        let v = w1_line(rho1, rho2);
        if rho1.atoms().len() + rho2.atoms().len() <= 64 {
            let s = w1_solver(space, rho1, rho2)?;
            debug_assert!((s - v).abs() < 1e-9, "line formula {v} vs solver {s}");
        }
        return Ok(v);
    }
    w1_solver(space, rho1, rho2)
}

/// `∫ |F1 - F2|` on the line.
fn w1_line(rho1: &DiscreteMeasure, rho2: &DiscreteMeasure) -> f64 {
    let mut events: Vec<(f64, f64)> = rho1
        .atoms()
        .iter()
        .copied()
        .chain(rho2.atoms().iter().map(|&(x, w)| (x, -w)))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = crate::stats::KahanSum::new();
    let mut diff = 0.0;
    for w in events.windows(2) {
        diff += w[0].1;
        acc.add(diff.abs() * (w[1].0 - w[0].0));
    }
    acc.value()
}

fn w1_solver(space: &CarrierSpace, rho1: &DiscreteMeasure, rho2: &DiscreteMeasure) -> Result<f64> {
    let supply: Vec<f64> = rho1.atoms().iter().map(|a| a.1).collect();
    let demand: Vec<f64> = rho2.atoms().iter().map(|a| a.1).collect();
    let cost: Vec<Vec<f64>> = rho1
        .atoms()
        .iter()
        .map(|&(x, _)| rho2.atoms().iter().map(|&(y, _)| space.d0(x, y)).collect())
        .collect();
    Ok(solve_transport(&supply, &demand, &cost)?.cost)
}

/// One cell of a partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CellRegion {
    /// `(lo, hi]`, or `[lo, hi]` when `closed_lo`.
    Interval { lo: f64, hi: f64, closed_lo: bool },
    Sites { members: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub region: CellRegion,
    pub center: f64,
}

impl Cell {
    fn contains(&self, x: f64) -> bool {
        match &self.region {
            CellRegion::Interval { lo, hi, closed_lo } => (x > *lo || (*closed_lo && x == *lo)) && x <= *hi,
            CellRegion::Sites { members } => members.binary_search_by(|m| m.total_cmp(&x)).is_ok(),
        }
    }

    fn radius(&self, space: &CarrierSpace) -> f64 {
        let c = self.center;
        match &self.region {
            CellRegion::Interval { lo, hi, .. } => match space {
                CarrierSpace::Circle => {
                    let t_max = (lo - c).abs().max((hi - c).abs());
                    let t_min = if (*lo..=*hi).contains(&c) {
                        0.0
                    } else {
                        (lo - c).abs().min((hi - c).abs())
                    };
                    if t_min <= 0.5 && 0.5 <= t_max {
                        0.5
                    } else {
                        t_min.min(1.0 - t_min).max(t_max.min(1.0 - t_max))
                    }
                }
                _ => (lo - c).abs().max((hi - c).abs()).min(1.0),
            },
            CellRegion::Sites { members } => members.iter().map(|&s| space.d0(s, c)).fold(0.0, f64::max),
        }
    }
}

/// Partition G of the carrier with a center per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionScheme {
    space: CarrierSpace,
    cells: Vec<Cell>,
    resolution: f64,
}

impl PartitionScheme {
    pub fn new(space: CarrierSpace, mut cells: Vec<Cell>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidParameter("partition needs at least one cell".into()));
        }
        for c in &mut cells {
            if let CellRegion::Sites { members } = &mut c.region {
                members.sort_by(f64::total_cmp);
            }
            space.check_point(c.center)?;
        }
        let intervals = cells.iter().all(|c| matches!(c.region, CellRegion::Interval { .. }));
        let site_cells = cells.iter().all(|c| matches!(c.region, CellRegion::Sites { .. }));
        if intervals {
            if matches!(space, CarrierSpace::FiniteSites { .. }) {
                return Err(Error::InvalidParameter("interval cells need a continuous space".into()));
            }
            let mut expect = 0.0;
            for (k, c) in cells.iter().enumerate() {
                let CellRegion::Interval { lo, hi, closed_lo } = c.region else { unreachable!() };
                if lo != expect || hi <= lo || closed_lo != (k == 0) {
                    return Err(Error::InvalidParameter(format!(
                        "interval cell {k} does not continue the partition"
                    )));
                }
                expect = hi;
            }
            if expect != 1.0 {
                return Err(Error::InvalidParameter("interval cells must end at 1".into()));
            }
        } else if site_cells {
            let mut all: Vec<f64> = cells
                .iter()
                .flat_map(|c| match &c.region {
                    CellRegion::Sites { members } => members.clone(),
                    _ => unreachable!(),
                })
                .collect();
            all.sort_by(f64::total_cmp);
            if all.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidParameter("a site belongs to two cells".into()));
            }
            for &s in &all {
                space.check_point(s)?;
            }
            if let Some(sites) = space.sites() {
                if sites != all.as_slice() {
                    return Err(Error::InvalidParameter("cells must cover every site exactly once".into()));
                }
            }
        } else {
            return Err(Error::InvalidParameter("cannot mix interval and site cells".into()));
        }
        let resolution = cells.iter().map(|c| c.radius(&space)).fold(0.0, f64::max);
        Ok(Self {
            space,
            cells,
            resolution,
        })
    }

    /// Cells `(s_{j-1}/n, s_j/n]` for breakpoints `0 = s_0 < ... < s_k = n`,
    /// first cell closed, centers at midpoints.
    pub fn from_index_breaks(space: CarrierSpace, n: usize, breaks: &[usize]) -> Result<Self> {
        if breaks.first() != Some(&0) || breaks.last() != Some(&n) || breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("breakpoints must rise strictly from 0 to n".into()));
        }
        let nf = n as f64;
        let cells = breaks
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let (lo, hi) = (w[0] as f64 / nf, w[1] as f64 / nf);
                Cell {
                    region: CellRegion::Interval {
                        lo,
                        hi,
                        closed_lo: k == 0,
                    },
                    center: 0.5 * (lo + hi),
                }
            })
            .collect();
        Self::new(space, cells)
    }

    /// Contiguous equal-width blocks of `width` indices, remainder folded
    /// into the last block.
    pub fn blocks(space: CarrierSpace, n: usize, width: usize) -> Result<Self> {
        let width = width.clamp(1, n.max(1));
        let count = (n / width).max(1);
        let mut breaks: Vec<usize> = (0..count).map(|j| j * width).collect();
        breaks.push(n);
        Self::from_index_breaks(space, n, &breaks)
    }

    /// One singleton cell per site.
    pub fn singletons(space: CarrierSpace, sites: &[f64]) -> Result<Self> {
        let cells = sites
            .iter()
            .map(|&s| Cell {
                region: CellRegion::Sites { members: vec![s] },
                center: s,
            })
            .collect();
        Self::new(space, cells)
    }

    pub fn space(&self) -> &CarrierSpace {
        &self.space
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// d0(G).
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn recompute_resolution(&self) -> f64 {
        self.cells.iter().map(|c| c.radius(&self.space)).fold(0.0, f64::max)
    }

    pub fn cell_of(&self, x: f64) -> Result<usize> {
        if self.cells.iter().all(|c| matches!(c.region, CellRegion::Interval { .. })) {
            let k = self.cells.partition_point(|c| match c.region {
                CellRegion::Interval { hi, .. } => hi < x,
                _ => unreachable!(),
            });
            if k < self.cells.len() && self.cells[k].contains(x) {
                return Ok(k);
            }
            return Err(Error::Uncovered { point: x });
        }
        self.cells
            .iter()
            .position(|c| c.contains(x))
            .ok_or(Error::Uncovered { point: x })
    }

    /// Cell counts of a pattern.
    pub fn cell_counts(&self, xi: &PointPattern) -> Result<Vec<u32>> {
        let mut counts = vec![0_u32; self.cells.len()];
        for &p in xi.points() {
            counts[self.cell_of(p)?] += 1;
        }
        Ok(counts)
    }

    pub fn centers(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.center).collect()
    }
}

/// M_G: move every point to the center of its cell.
pub fn shuffle(scheme: &PartitionScheme, xi: &PointPattern) -> Result<PointPattern> {
    let moved = xi
        .points()
        .iter()
        .map(|&p| scheme.cell_of(p).map(|k| scheme.cells[k].center))
        .collect::<Result<Vec<_>>>()?;
    Ok(PointPattern::new(moved))
}
