//! Dense two-phase simplex for `min cᵀx, Ax = b, x ≥ 0` with very few rows.
//! Bland's rule keeps it cycle-free; the sizes here are a handful of rows by
//! a few thousand columns.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;

pub(crate) struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
    /// Structural columns in the final basis.
    pub basis: Vec<usize>,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col];
        self.rows[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[col] = 0.0;
            }
        }
        self.basis[r] = col;
    }

    fn reduced_cost(&self, cost: &[f64], j: usize) -> f64 {
        let mut z = cost[j];
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            z -= cost[b] * row[j];
        }
        z
    }

    /// Runs Bland's rule over the first `allowed` columns.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<()> {
        let rhs = self.width - 1;
        let scale = cost.iter().fold(1.0f64, |m, c| m.max(c.abs()));
        for _ in 0..100_000 {
            let entering = (0..allowed).find(|&j| {
                !self.basis.contains(&j) && self.reduced_cost(cost, j) < -PIVOT_EPS * scale
            });
            let Some(col) = entering else { return Ok(()) };
            let mut leave: Option<(f64, usize, usize)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                if row[col] > PIVOT_EPS {
                    let ratio = row[rhs] / row[col];
                    let better = match leave {
                        None => true,
                        Some((best, _, b)) => ratio < best || (ratio == best && self.basis[r] < b),
                    };
                    if better {
                        leave = Some((ratio, r, self.basis[r]));
                    }
                }
            }
            let Some((_, r, _)) = leave else {
                return Err(Error::Numerical("linear program is unbounded".into()));
            };
            self.pivot(r, col);
        }
        Err(Error::Numerical("simplex iteration limit reached".into()))
    }
}

pub(crate) fn solve(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<Option<LpSolution>> {
    let m = a.len();
    let n = c.len();
    let width = n + m + 1;
    let mut rows = Vec::with_capacity(m);
    for (i, arow) in a.iter().enumerate() {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut row = vec![0.0; width];
        for j in 0..n {
            row[j] = sign * arow[j];
        }
        row[n + i] = 1.0;
        row[width - 1] = sign * b[i];
        rows.push(row);
    }
    let mut t = Tableau { rows, basis: (n..n + m).collect(), width };

    let mut phase1 = vec![0.0; n + m];
    phase1[n..].iter_mut().for_each(|v| *v = 1.0);
    t.optimize(&phase1, n + m)?;
    let infeas: f64 = t.rows.iter().zip(&t.basis).filter(|(_, &bj)| bj >= n).map(|(r, _)| r[width - 1]).sum();
    let bscale = b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    if infeas > 1e-9 * bscale {
        return Ok(None);
    }
    // Pivot remaining artificials out, dropping rows that are redundant.
    let mut r = 0;
    while r < t.rows.len() {
        if t.basis[r] >= n {
            match (0..n).find(|&j| t.rows[r][j].abs() > PIVOT_EPS && !t.basis.contains(&j)) {
                Some(j) => t.pivot(r, j),
                None => {
                    t.rows.remove(r);
                    t.basis.remove(r);
                    continue;
                }
            }
        }
        r += 1;
    }
    let mut cost = c.to_vec();
    cost.extend(std::iter::repeat_n(0.0, m));
    t.optimize(&cost, n)?;

    let mut x = vec![0.0; n];
    for (row, &bj) in t.rows.iter().zip(&t.basis) {
        x[bj] = row[width - 1].max(0.0);
    }
    let value = x.iter().zip(c).map(|(xi, ci)| xi * ci).sum();
    Ok(Some(LpSolution { x, value, basis: t.basis.clone() }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_programs() {
        // min x + 2y, x + y = 1 → x = 1.
        let s = solve(&[vec![1.0, 1.0]], &[1.0], &[1.0, 2.0]).unwrap().unwrap();
        assert!((s.value - 1.0).abs() < 1e-15 && (s.x[0] - 1.0).abs() < 1e-15);
        // infeasible: x + y = −1 with x, y ≥ 0
        assert!(solve(&[vec![1.0, 1.0]], &[-1.0], &[1.0, 1.0]).unwrap().is_none());
        // redundant rows
        let s = solve(&[vec![1.0, 1.0, 1.0], vec![2.0, 2.0, 2.0]], &[1.0, 2.0], &[3.0, 1.0, 2.0]).unwrap().unwrap();
        assert!((s.value - 1.0).abs() < 1e-14);
    }
}
