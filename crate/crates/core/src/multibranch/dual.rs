//! `max_{λ ≥ 0} Q(λ) − λK`. On finite grids `Q` is a finite minimum of affine
//! functions of `λ`, so the maximum sits at `0` or at a breakpoint and is
//! computed exactly.

use serde::{Deserialize, Serialize};

use super::primal::{for_each_assignment, infeasible};
use super::{assumption_from_tables, hinge_risk_at, ksum, tables, BranchSpec, BranchTable, Dataset};
use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub value: f64,
    pub lambda_star: f64,
    /// Upper end of the searched range, doubled from 1 until it covers `λ*`
    /// and every breakpoint, or the caller's value.
    pub lambda_max: f64,
    /// `λ*` fell on or beyond `lambda_max`; the caller's range was too small.
    pub at_boundary: bool,
}

/// A line `intercept + slope·λ`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Line {
    pub slope: f64,
    pub intercept: f64,
}

/// Breakpoints in `(0, ∞)` of `λ ↦ min_j lines[j](λ)`: the lower envelope
/// built by the monotone convex-hull trick over slopes sorted downwards.
pub(crate) fn envelope_breakpoints(lines: &[Line]) -> Vec<f64> {
    let mut sorted = lines.to_vec();
    sorted.sort_by(|a, b| b.slope.total_cmp(&a.slope).then(a.intercept.total_cmp(&b.intercept)));
    sorted.dedup_by(|b, a| a.slope == b.slope);
    let cross = |a: &Line, b: &Line| (b.intercept - a.intercept) / (a.slope - b.slope);
    let mut hull: Vec<Line> = Vec::with_capacity(sorted.len());
    for l in sorted {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &l) <= cross(&hull[hull.len() - 2], &hull[hull.len() - 1]) {
            hull.pop();
        }
        hull.push(l);
    }
    hull.windows(2).map(|w| cross(&w[0], &w[1])).filter(|&x| x > 0.0).collect()
}

fn branch_lines(b: &BranchTable, count: usize) -> Vec<Line> {
    let n = count as f64;
    b.h.iter().zip(&b.c).map(|(&h, &c)| Line { slope: h / n, intercept: c / n }).collect()
}

/// `Q(λ) = (1/I) Σᵢ min_g [cᵢ(g) + λ hᵢ(g)]` (affine case).
pub(crate) fn q_separable(t: &[BranchTable], lambda: f64) -> f64 {
    let n = t.len() as f64;
    ksum(t.iter().map(|b| {
        b.c.iter().zip(&b.h).map(|(c, h)| c + lambda * h).fold(f64::INFINITY, f64::min)
    })) / n
}

/// Lines of the non-separable dual: one per grid assignment, slope `Σh/I`,
/// intercept the true hinge risk.
fn product_lines(t: &[BranchTable], data: &Dataset, tau: f64) -> Result<Vec<Line>> {
    let n = t.len() as f64;
    let mut lines = Vec::new();
    for_each_assignment(t, |pick| {
        let h = ksum(t.iter().zip(pick).map(|(b, &g)| b.h[g]));
        lines.push(Line { slope: h / n, intercept: hinge_risk_at(t, pick, data, tau) });
    })?;
    Ok(lines)
}

fn min_lines(lines: &[Line], lambda: f64) -> f64 {
    lines.iter().map(|l| l.intercept + l.slope * lambda).fold(f64::INFINITY, f64::min)
}

/// `Q(λ)`. Separable under the margin assumption; otherwise the true hinge
/// is minimized over the whole grid product.
pub fn dual_q(lambda: f64, branches: &[BranchSpec], data: &Dataset, tau: f64) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("lambda = {lambda} must be finite and non-negative")));
    }
    let t = tables(branches, data, tau)?;
    if assumption_from_tables(&t, data, tau).ok {
        Ok(q_separable(&t, lambda))
    } else {
        Ok(min_lines(&product_lines(&t, data, tau)?, lambda))
    }
}

/// Solves the dual exactly. `lambda_max` only sets the boundary warning.
pub fn dual_sup(branches: &[BranchSpec], data: &Dataset, tau: f64, k: f64, lambda_max: Option<f64>) -> Result<DualSolution> {
    if let Some(m) = lambda_max {
        if !(m > 0.0 && m.is_finite()) {
            return Err(invalid(format!("lambda_max = {m} must be positive")));
        }
    }
    let t = tables(branches, data, tau)?;
    if assumption_from_tables(&t, data, tau).ok {
        dual_sup_separable(&t, k, lambda_max)
    } else {
        let lines = product_lines(&t, data, tau)?;
        let q = |l: f64| min_lines(&lines, l);
        maximize(&t, k, lambda_max, envelope_breakpoints(&lines), q)
    }
}

pub(crate) fn dual_sup_separable(t: &[BranchTable], k: f64, lambda_max: Option<f64>) -> Result<DualSolution> {
    let n = t.len();
    let mut bps: Vec<f64> = t.iter().flat_map(|b| envelope_breakpoints(&branch_lines(b, n))).collect();
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    maximize(t, k, lambda_max, bps, |l| q_separable(t, l))
}

fn maximize(t: &[BranchTable], k: f64, lambda_max: Option<f64>, bps: Vec<f64>, q: impl Fn(f64) -> f64) -> Result<DualSolution> {
    if !k.is_finite() {
        return Err(invalid(format!("K = {k} must be finite")));
    }
    let n = t.len() as f64;
    // Slope of Q(λ) − λK past the last breakpoint.
    let tail = t.iter().map(|b| b.h.iter().copied().fold(f64::INFINITY, f64::min)).sum::<f64>() / n - k;
    if tail > 1e-12 * (1.0 + k.abs()) {
        return Err(infeasible(t, k));
    }
    let mut best = (q(0.0), 0.0);
    for &l in &bps {
        let v = q(l) - l * k;
        if v > best.0 {
            best = (v, l);
        }
    }
    let (value, lambda_star) = best;
    let reach = bps.last().copied().unwrap_or(0.0).max(lambda_star);
    let (lambda_max, at_boundary) = match lambda_max {
        Some(m) => (m, lambda_star >= m),
        None => {
            let mut m = 1.0;
            while m <= reach {
                m *= 2.0;
            }
            (m, false)
        }
    };
    Ok(DualSolution { value, lambda_star, lambda_max, at_boundary })
}
