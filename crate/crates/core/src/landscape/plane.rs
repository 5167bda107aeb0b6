use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FlatParams;
use crate::error::{invalid, mismatch, Error, Result};
use crate::rng;

/// Fraction of the anchor triangle's extent added on every side.
const MARGIN: f64 = 0.2;

pub const VIOLATION_PAIRS: usize = 10_000;
pub const VIOLATION_TOL: f64 = 1e-9;
const VIOLATION_SEED: u64 = 0x51ab;

/// Loss values on the plane `θ_a + α·u + β·v`, `u` and `v` orthonormal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneGrid {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// `losses[i][j]` at `(alphas[i], betas[j])`.
    pub losses: Vec<Vec<f64>>,
    pub origin: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Plane coordinates of `θ_a`, `θ_b`, `θ_c`.
    pub anchors: [(f64, f64); 3],
}

impl PlaneGrid {
    pub fn point(&self, alpha: f64, beta: f64) -> Vec<f64> {
        self.origin.iter().zip(&self.u).zip(&self.v).map(|((o, u), v)| o + alpha * u + beta * v).collect()
    }

    /// Columns `alpha,beta,loss`, one row per grid node.
    pub fn write_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["alpha", "beta", "loss"])?;
        for (i, a) in self.alphas.iter().enumerate() {
            for (j, b) in self.betas.iter().enumerate() {
                out.write_record([format!("{a:?}"), format!("{b:?}"), format!("{:?}", self.losses[i][j])])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let pad = MARGIN * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Evaluates `loss` on a `resolution × resolution` grid over the plane through
/// three parameter vectors, covering their triangle with a 20% margin.
pub fn plane_projection_grid(
    a: &FlatParams,
    b: &FlatParams,
    c: &FlatParams,
    loss: impl Fn(&[f64]) -> f64 + Sync,
    resolution: usize,
) -> Result<PlaneGrid> {
    if resolution < 2 {
        return Err(invalid("plane resolution must be at least 2"));
    }
    if a.arch != b.arch || a.arch != c.arch || a.values.len() != b.values.len() || a.values.len() != c.values.len() {
        return Err(mismatch("the three anchors have different layouts"));
    }
    let ab: Vec<f64> = b.values.iter().zip(&a.values).map(|(x, y)| x - y).collect();
    let ac: Vec<f64> = c.values.iter().zip(&a.values).map(|(x, y)| x - y).collect();
    let nb = dot(&ab, &ab).sqrt();
    let nc = dot(&ac, &ac).sqrt();
    if nb == 0.0 || nc == 0.0 {
        return Err(Error::Geometry("two of the three anchors coincide".into()));
    }
    let u: Vec<f64> = ab.iter().map(|x| x / nb).collect();
    let cu = dot(&ac, &u);
    let mut v: Vec<f64> = ac.iter().zip(&u).map(|(x, y)| x - cu * y).collect();
    // Second Gram–Schmidt pass.
    let again = dot(&v, &u);
    v.iter_mut().zip(&u).for_each(|(x, y)| *x -= again * y);
    let nv = dot(&v, &v).sqrt();
    if nv <= 1e-10 * nc {
        return Err(Error::Geometry("the three anchors are collinear".into()));
    }
    v.iter_mut().for_each(|x| *x /= nv);
    let anchors = [(0.0, 0.0), (nb, 0.0), (cu, nv)];
    let (amin, amax) = (0.0f64.min(cu), nb.max(cu));
    let alphas = axis(amin, amax, resolution);
    let betas = axis(0.0, nv, resolution);
    let mut grid = PlaneGrid { alphas, betas, losses: vec![], origin: a.values.clone(), u, v, anchors };
    grid.losses = grid
        .alphas
        .par_iter()
        .map(|&al| grid.betas.iter().map(|&be| loss(&grid.point(al, be))).collect())
        .collect();
    Ok(grid)
}

/// Fraction of random grid-point pairs `(p, q)` whose midpoint, also a grid
/// point, lies above the chord: `f(m) > (f(p) + f(q))/2 + 1e-9`. Pairs are
/// drawn with equal index parity so the midpoint is on the grid.
pub fn convexity_violation_metric(values: &[Vec<f64>]) -> Result<f64> {
    let rows = values.len();
    let cols = values.first().map_or(0, |r| r.len());
    if rows < 3 || cols < 3 || values.iter().any(|r| r.len() != cols) {
        return Err(invalid("convexity metric needs a rectangular grid of at least 3 × 3"));
    }
    if values.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid("loss grid has a non-finite value"));
    }
    let mut r = rng::seeded(VIOLATION_SEED);
    let same_parity = |r: &mut rand_chacha::ChaCha8Rng, i: usize, n: usize| -> usize {
        let count = (n - (i % 2)).div_ceil(2);
        i % 2 + 2 * r.random_range(0..count)
    };
    let mut bad = 0usize;
    for _ in 0..VIOLATION_PAIRS {
        let (i1, j1) = (r.random_range(0..rows), r.random_range(0..cols));
        let (i2, j2) = loop {
            let q = (same_parity(&mut r, i1, rows), same_parity(&mut r, j1, cols));
            if q != (i1, j1) {
                break q;
            }
        };
        let mid = values[(i1 + i2) / 2][(j1 + j2) / 2];
        if mid > 0.5 * (values[i1][j1] + values[i2][j2]) + VIOLATION_TOL {
            bad += 1;
        }
    }
    Ok(bad as f64 / VIOLATION_PAIRS as f64)
}
