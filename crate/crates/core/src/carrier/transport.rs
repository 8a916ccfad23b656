//! Balanced transportation problem by the transportation simplex (MODI).
//!
//! Start from the northwest-corner basis, price with potentials over the
//! basis tree, pivot around the unique cycle. Dantzig pricing, switching to
//! Bland's rule after a run of degenerate pivots.

use crate::error::{Error, Result};
use crate::stats::compensated_sum;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// Nonzero flows `(source, sink, amount)`.
    pub flows: Vec<(usize, usize, f64)>,
    pub cost: f64,
    /// Duals with `cost[i][j] - u[i] - v[j] >= 0`, zero on positive flows.
    pub row_potentials: Vec<f64>,
    pub col_potentials: Vec<f64>,
}

impl TransportPlan {
    pub fn row_marginals(&self, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; m];
        for &(i, _, x) in &self.flows {
            out[i] += x;
        }
        out
    }

    pub fn col_marginals(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(_, j, x) in &self.flows {
            out[j] += x;
        }
        out
    }
}

pub fn solve_transport(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> Result<TransportPlan> {
    let m = supply.len();
    let n = demand.len();
    if cost.len() != m {
        return Err(Error::NotSquare {
            rows: cost.len(),
            row: 0,
            cols: n,
        });
    }
    for (row, r) in cost.iter().enumerate() {
        if r.len() != n {
            return Err(Error::NotSquare {
                rows: m,
                row,
                cols: r.len(),
            });
        }
        if let Some(col) = r.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFiniteCost { row, col });
        }
    }
    if supply.iter().chain(demand).any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidParameter(
            "supplies and demands must be finite and nonnegative".into(),
        ));
    }
    let s_tot = compensated_sum(supply.iter().copied());
    let d_tot = compensated_sum(demand.iter().copied());
    if (s_tot - d_tot).abs() > 1e-9 * s_tot.max(d_tot).max(1.0) {
        return Err(Error::MassMismatch {
            left: s_tot,
            right: d_tot,
        });
    }

    let rows: Vec<usize> = (0..m).filter(|&i| supply[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n).filter(|&j| demand[j] > 0.0).collect();
    let mut u_full = vec![0.0; m];
    let mut v_full = vec![0.0; n];
    let mut flows = Vec::new();

    if !rows.is_empty() && !cols.is_empty() {
        let sub_cost: Vec<f64> = rows
            .iter()
            .flat_map(|&i| cols.iter().map(move |&j| cost[i][j]))
            .collect();
        let s: Vec<f64> = rows.iter().map(|&i| supply[i]).collect();
        let scale = d_tot / s_tot;
        let d: Vec<f64> = cols.iter().map(|&j| demand[j] / scale).collect();
        let sol = Simplex::new(&s, &d, sub_cost).solve()?;
        for (a, &i) in rows.iter().enumerate() {
            u_full[i] = sol.u[a];
        }
        for (b, &j) in cols.iter().enumerate() {
            v_full[j] = sol.v[b];
        }
        for (a, b, x) in sol.flows {
            if x > 0.0 {
                flows.push((rows[a], cols[b], x * scale));
            }
        }
    }
    // extend duals to zero-mass rows and columns, keeping feasibility
    let row_live: Vec<bool> = (0..m).map(|i| supply[i] > 0.0).collect();
    let col_live: Vec<bool> = (0..n).map(|j| demand[j] > 0.0).collect();
    for i in 0..m {
        if !row_live[i] {
            u_full[i] = (0..n)
                .filter(|&j| col_live[j])
                .map(|j| cost[i][j] - v_full[j])
                .fold(f64::INFINITY, f64::min);
            if !u_full[i].is_finite() {
                u_full[i] = 0.0;
            }
        }
    }
    for j in 0..n {
        if !col_live[j] {
            v_full[j] = (0..m)
                .map(|i| cost[i][j] - u_full[i])
                .fold(f64::INFINITY, f64::min);
            if !v_full[j].is_finite() {
                v_full[j] = 0.0;
            }
        }
    }
    flows.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    let total = compensated_sum(flows.iter().map(|&(i, j, x)| x * cost[i][j]));
    Ok(TransportPlan {
        flows,
        cost: total,
        row_potentials: u_full,
        col_potentials: v_full,
    })
}

struct Solution {
    flows: Vec<(usize, usize, f64)>,
    u: Vec<f64>,
    v: Vec<f64>,
}

struct Simplex {
    m: usize,
    n: usize,
    cost: Vec<f64>,
    x: Vec<f64>,
    basic: Vec<bool>,
    basis: Vec<usize>,
}

impl Simplex {
    fn new(supply: &[f64], demand: &[f64], cost: Vec<f64>) -> Self {
        let m = supply.len();
        let n = demand.len();
        let mut x = vec![0.0; m * n];
        let mut basic = vec![false; m * n];
        let mut basis = Vec::with_capacity(m + n - 1);
        let mut s = supply.to_vec();
        let mut d = demand.to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            let idx = i * n + j;
            basic[idx] = true;
            basis.push(idx);
            if i == m - 1 {
                x[idx] = d[j].max(0.0);
                s[i] -= x[idx];
                if j == n - 1 {
                    break;
                }
                j += 1;
                continue;
            }
            if j == n - 1 {
                x[idx] = s[i].max(0.0);
                d[j] -= x[idx];
                i += 1;
                continue;
            }
            let t = s[i].min(d[j]).max(0.0);
            x[idx] = t;
            s[i] -= t;
            d[j] -= t;
            // advance one index only, so the basis stays a spanning tree
            if s[i] <= d[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
        debug_assert_eq!(basis.len(), m + n - 1);
        Self {
            m,
            n,
            cost,
            x,
            basic,
            basis,
        }
    }

    fn potentials(&self, u: &mut [f64], v: &mut [f64], adj_r: &mut [Vec<usize>], adj_c: &mut [Vec<usize>]) {
        let n = self.n;
        adj_r.iter_mut().for_each(Vec::clear);
        adj_c.iter_mut().for_each(Vec::clear);
        for &idx in &self.basis {
            adj_r[idx / n].push(idx % n);
            adj_c[idx % n].push(idx / n);
        }
        let mut seen_r = vec![false; self.m];
        let mut seen_c = vec![false; n];
        // nodes: rows 0..m, cols m..m+n
        let mut stack = vec![0_usize];
        seen_r[0] = true;
        u[0] = 0.0;
        while let Some(node) = stack.pop() {
            if node < self.m {
                let i = node;
                for &j in &adj_r[i] {
                    if !seen_c[j] {
                        seen_c[j] = true;
                        v[j] = self.cost[i * n + j] - u[i];
                        stack.push(self.m + j);
                    }
                }
            } else {
                let j = node - self.m;
                for &i in &adj_c[j] {
                    if !seen_r[i] {
                        seen_r[i] = true;
                        u[i] = self.cost[i * n + j] - v[j];
                        stack.push(i);
                    }
                }
            }
        }
    }

    /// Cells of the cycle created by adding `(ei, ej)`, entering cell first,
    /// alternating + / - signs.
    fn cycle(&self, ei: usize, ej: usize, adj_r: &[Vec<usize>], adj_c: &[Vec<usize>]) -> Vec<usize> {
        let n = self.n;
        let total = self.m + n;
        let mut parent = vec![usize::MAX; total];
        let start = ei;
        parent[start] = start;
        let mut queue = vec![start];
        let target = self.m + ej;
        let mut head = 0;
        while head < queue.len() {
            let node = queue[head];
            head += 1;
            if node == target {
                break;
            }
            if node < self.m {
                for &j in &adj_r[node] {
                    let c = self.m + j;
                    if parent[c] == usize::MAX {
                        parent[c] = node;
                        queue.push(c);
                    }
                }
            } else {
                for &i in &adj_c[node - self.m] {
                    if parent[i] == usize::MAX {
                        parent[i] = node;
                        queue.push(i);
                    }
                }
            }
        }
        let mut cells = vec![ei * n + ej];
        let mut node = target;
        while node != start {
            let p = parent[node];
            let (i, j) = if node < self.m {
                (node, p - self.m)
            } else {
                (p, node - self.m)
            };
            cells.push(i * n + j);
            node = p;
        }
        cells
    }

    fn solve(mut self) -> Result<Solution> {
        let (m, n) = (self.m, self.n);
        let scale = self.cost.iter().fold(1.0_f64, |a, c| a.max(c.abs()));
        let tol = 1e-12 * scale;
        let cap = 50 * (m + n) * (m + n) + 1000;
        let mut u = vec![0.0; m];
        let mut v = vec![0.0; n];
        let mut adj_r = vec![Vec::new(); m];
        let mut adj_c = vec![Vec::new(); n];
        let mut degenerate_run = 0_usize;
        let mut pivots = 0_usize;
        loop {
            self.potentials(&mut u, &mut v, &mut adj_r, &mut adj_c);
            let bland = degenerate_run > m + n;
            let mut enter = None;
            let mut best = -tol;
            'scan: for i in 0..m {
                for j in 0..n {
                    let idx = i * n + j;
                    if self.basic[idx] {
                        continue;
                    }
                    let r = self.cost[idx] - u[i] - v[j];
                    if r < best {
                        enter = Some(idx);
                        if bland {
                            break 'scan;
                        }
                        best = r;
                    }
                }
            }
            let Some(e) = enter else { break };
            pivots += 1;
            if pivots > cap {
                return Err(Error::TransportNoConvergence(cap));
            }
            let cycle = self.cycle(e / n, e % n, &adj_r, &adj_c);
            let mut theta = f64::INFINITY;
            let mut leave = usize::MAX;
            for &c in cycle.iter().skip(1).step_by(2) {
                let xc = self.x[c];
                if xc < theta || (xc == theta && c < leave) {
                    theta = xc;
                    leave = c;
                }
            }
            if theta <= 0.0 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            for (k, &c) in cycle.iter().enumerate() {
                if k % 2 == 0 {
                    self.x[c] += theta;
                } else {
                    self.x[c] = (self.x[c] - theta).max(0.0);
                }
            }
            self.x[leave] = 0.0;
            self.basic[leave] = false;
            self.basic[e] = true;
            let pos = self.basis.iter().position(|&b| b == leave).expect("leaving cell is basic");
            self.basis[pos] = e;
        }
        let flows = self
            .basis
            .iter()
            .map(|&idx| (idx / n, idx % n, self.x[idx]))
            .collect();
        Ok(Solution { flows, u, v })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carrier::assignment::solve_assignment;
    use rand::{Rng, SeedableRng};

    fn check_optimality(supply: &[f64], demand: &[f64], cost: &[Vec<f64>], plan: &TransportPlan) {
        let rm = plan.row_marginals(supply.len());
        let cm = plan.col_marginals(demand.len());
        for (a, b) in rm.iter().zip(supply) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in cm.iter().zip(demand) {
            assert!((a - b).abs() < 1e-9);
        }
        for (i, row) in cost.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                assert!(c - plan.row_potentials[i] - plan.col_potentials[j] >= -1e-9);
            }
        }
        for &(i, j, x) in &plan.flows {
            if x > 1e-12 {
                let r = cost[i][j] - plan.row_potentials[i] - plan.col_potentials[j];
                assert!(r.abs() < 1e-9, "complementary slackness violated: {r}");
            }
        }
        let dual: f64 = supply.iter().zip(&plan.row_potentials).map(|(s, u)| s * u).sum::<f64>()
            + demand.iter().zip(&plan.col_potentials).map(|(d, v)| d * v).sum::<f64>();
        assert!((dual - plan.cost).abs() < 1e-9);
    }

    #[test]
    fn zero_diagonal_costs_nothing() {
        let c = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let p = solve_transport(&[0.3, 0.7], &[0.3, 0.7], &c).unwrap();
        assert!(p.cost.abs() < 1e-15);
    }

    #[test]
    fn three_atoms_to_one() {
        let c = vec![vec![0.5], vec![0.0], vec![0.5]];
        let t = 1.0 / 3.0;
        let p = solve_transport(&[t, t, t], &[1.0], &c).unwrap();
        assert!((p.cost - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_source_single_sink() {
        let p = solve_transport(&[2.0], &[2.0], &[vec![0.25]]).unwrap();
        assert_eq!(p.flows, vec![(0, 0, 2.0)]);
        assert!((p.cost - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mass_mismatch_rejected() {
        assert!(matches!(
            solve_transport(&[1.0], &[0.5], &[vec![0.0]]),
            Err(Error::MassMismatch { .. })
        ));
    }

    #[test]
    fn zero_mass_rows_are_tolerated() {
        let c = vec![vec![0.1, 0.4], vec![0.3, 0.2], vec![0.0, 0.0]];
        let supply = [0.5, 0.5, 0.0];
        let demand = [0.0, 1.0];
        let p = solve_transport(&supply, &demand, &c).unwrap();
        assert!((p.cost - 0.3).abs() < 1e-12);
        check_optimality(&supply, &demand, &c, &p);
    }

    #[test]
    fn unit_supplies_agree_with_assignment() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.random_range(1..=8);
            let cost: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| rng.random::<f64>()).collect())
                .collect();
            let ones = vec![1.0; n];
            let p = solve_transport(&ones, &ones, &cost).unwrap();
            let a = solve_assignment(&cost).unwrap();
            assert!((p.cost - a.cost).abs() < 1e-10, "{} vs {}", p.cost, a.cost);
            check_optimality(&ones, &ones, &cost, &p);
        }
    }

    #[test]
    fn random_instances_are_dual_certified() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..300 {
            let m = rng.random_range(1..=12);
            let n = rng.random_range(1..=12);
            let mut supply: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            let mut demand: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            // sprinkle zeros and coarse costs to force degeneracy
            if rng.random_bool(0.3) {
                supply[0] = 0.0;
                supply.push(0.5);
            }
            let m = supply.len();
            let ss: f64 = supply.iter().sum();
            let ds: f64 = demand.iter().sum();
            demand.iter_mut().for_each(|d| *d *= ss / ds);
            let coarse = rng.random_bool(0.5);
            let cost: Vec<Vec<f64>> = (0..m)
                .map(|_| {
                    (0..n)
                        .map(|_| if coarse { rng.random_range(0..3) as f64 } else { rng.random() })
                        .collect()
                })
                .collect();
            let p = solve_transport(&supply, &demand, &cost).unwrap();
            check_optimality(&supply, &demand, &cost, &p);
        }
    }
}
