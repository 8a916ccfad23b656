//! Exact minimum-cost perfect matching on square cost matrices.
//!
//! Shortest augmenting paths with dual potentials (the O(n^3) Hungarian
//! method). Among optimal assignments the lexicographically smallest
//! permutation is returned, found by searching the tight-edge subgraph.

use crate::error::{Error, Result};
use crate::stats::compensated_sum;

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `permutation[row] = column`.
    pub permutation: Vec<usize>,
    pub cost: f64,
    pub row_potentials: Vec<f64>,
    pub col_potentials: Vec<f64>,
}

/// Solve the assignment problem for a square matrix given as rows.
pub fn solve_assignment(cost: &[Vec<f64>]) -> Result<Assignment> {
    let n = cost.len();
    let mut flat = Vec::with_capacity(n * n);
    for (row, r) in cost.iter().enumerate() {
        if r.len() != n {
            return Err(Error::NotSquare {
                rows: n,
                row,
                cols: r.len(),
            });
        }
        flat.extend_from_slice(r);
    }
    solve_assignment_flat(n, &flat)
}

/// Same as [`solve_assignment`] for a row-major `n x n` buffer.
pub fn solve_assignment_flat(n: usize, cost: &[f64]) -> Result<Assignment> {
    if cost.len() != n * n {
        return Err(Error::NotSquare {
            rows: n,
            row: 0,
            cols: cost.len() / n.max(1),
        });
    }
    if let Some(pos) = cost.iter().position(|c| !c.is_finite()) {
        return Err(Error::NonFiniteCost {
            row: pos / n,
            col: pos % n,
        });
    }
    if n == 0 {
        return Ok(Assignment {
            permutation: vec![],
            cost: 0.0,
            row_potentials: vec![],
            col_potentials: vec![],
        });
    }

    let at = |i: usize, j: usize| cost[i * n + j];
    // 1-based arrays; index 0 is the virtual column
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; n + 1];
    let mut col_row = vec![0_usize; n + 1];
    let mut way = vec![0_usize; n + 1];
    let mut minv = vec![0.0_f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        col_row[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = col_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_col = vec![0_usize; n];
    for j in 1..=n {
        row_col[col_row[j] - 1] = j - 1;
    }
    let row_pot: Vec<f64> = u[1..].to_vec();
    let col_pot: Vec<f64> = v[1..].to_vec();

    let scale = cost.iter().fold(1.0_f64, |m, c| m.max(c.abs()));
    let tol = 1e-12 * scale / n as f64;
    let tight = |i: usize, j: usize| at(i, j) - row_pot[i] - col_pot[j] <= tol;
    lexicographic_tight_matching(n, &mut row_col, tight);

    let total = compensated_sum((0..n).map(|i| at(i, row_col[i])));
    Ok(Assignment {
        permutation: row_col,
        cost: total,
        row_potentials: row_pot,
        col_potentials: col_pot,
    })
}

/// Rewrite `row_col` into the lexicographically smallest perfect matching
/// that uses only tight edges (plus the edges already in `row_col`).
fn lexicographic_tight_matching<F>(n: usize, row_col: &mut [usize], tight: F)
where
    F: Fn(usize, usize) -> bool,
{
    let mut col_row = vec![0_usize; n];
    for (i, &j) in row_col.iter().enumerate() {
        col_row[j] = i;
    }
    let original: Vec<usize> = row_col.to_vec();
    let usable = |i: usize, j: usize| tight(i, j) || original[i] == j;
    let mut col_fixed = vec![false; n];
    let mut prev = vec![usize::MAX; n];
    let mut seen_row = vec![false; n];
    let mut queue = Vec::with_capacity(n);

    for i in 0..n {
        let current = row_col[i];
        for j in 0..current {
            if col_fixed[j] || !usable(i, j) {
                continue;
            }
            // Move i onto j: the row holding j must reach `current` through
            // an alternating path over unfixed rows and columns.
            let start = col_row[j];
            seen_row.iter_mut().for_each(|s| *s = false);
            prev.iter_mut().for_each(|p| *p = usize::MAX);
            queue.clear();
            queue.push(start);
            seen_row[start] = true;
            let mut found = false;
            let mut head = 0;
            'bfs: while head < queue.len() {
                let r = queue[head];
                head += 1;
                for c in 0..n {
                    if col_fixed[c] || c == j || prev[c] != usize::MAX || !usable(r, c) {
                        continue;
                    }
                    prev[c] = r;
                    if c == current {
                        found = true;
                        break 'bfs;
                    }
                    let nr = col_row[c];
                    if nr != i && !seen_row[nr] {
                        seen_row[nr] = true;
                        queue.push(nr);
                    }
                }
            }
            if found {
                let mut c = current;
                loop {
                    let r = prev[c];
                    let old = row_col[r];
                    row_col[r] = c;
                    col_row[c] = r;
                    if r == start {
                        break;
                    }
                    c = old;
                }
                row_col[i] = j;
                col_row[j] = i;
                break;
            }
        }
        col_fixed[row_col[i]] = true;
    }
}
