//! `min (1/I) Σ cᵢ(wᵢ)  s.t.  (1/I) Σ hᵢ(wᵢ) ≤ K` over the grid product.

use serde::{Deserialize, Serialize};

use super::{assumption_from_tables, hinge_risk_at, tables, BranchSpec, BranchTable, Dataset};
use crate::error::{invalid, Error, Result};

/// Largest Pareto frontier kept before falling back to the quantized DP.
pub const PARETO_CAP: usize = 50_000;
/// Largest grid product enumerated.
pub const ENUMERATION_CAP: u64 = 20_000_000;
/// Budget bins per unit of the widest regularizer range.
const BUDGET_BINS: f64 = 2048.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimalMethod {
    /// Pareto frontier over (Σh, Σc); exact.
    Pareto,
    /// Budget axis quantized; `value` is feasible, the true optimum lies in `[lower, value]`.
    Quantized,
    /// Full product with the true hinge.
    Enumeration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimalSolution {
    pub value: f64,
    /// Certified lower bound; equals `value` for exact methods.
    pub lower: f64,
    pub argmin: Vec<usize>,
    pub method: PrimalMethod,
}

impl PrimalSolution {
    pub fn bracket(&self) -> f64 {
        self.value - self.lower
    }
}

/// Relative slack on the budget, absorbing summation-order rounding.
pub const BUDGET_RTOL: f64 = 1e-12;

/// Budget test shared by every solver so that feasibility agrees bit-for-bit.
pub fn within_budget(h_sum: f64, count: usize, k: f64) -> bool {
    h_sum / count as f64 <= k + BUDGET_RTOL * (1.0 + k.abs())
}

pub(crate) fn infeasible(t: &[BranchTable], k: f64) -> Error {
    let floor: f64 = t.iter().map(|b| b.h.iter().copied().fold(f64::INFINITY, f64::min)).sum::<f64>() / t.len() as f64;
    Error::Infeasible(format!("smallest average regularizer {floor} exceeds K = {k}"))
}

/// Solves the primal. Under the margin assumption the objective is affine and
/// separable and a Pareto DP is exact; otherwise the product is enumerated.
pub fn primal_inf(branches: &[BranchSpec], data: &Dataset, tau: f64, k: f64) -> Result<PrimalSolution> {
    if !k.is_finite() {
        return Err(invalid(format!("K = {k} must be finite")));
    }
    let t = tables(branches, data, tau)?;
    if assumption_from_tables(&t, data, tau).ok {
        primal_separable(&t, k)
    } else {
        primal_enumerate_hinge(&t, data, tau, k)
    }
}

pub(crate) fn primal_separable(t: &[BranchTable], k: f64) -> Result<PrimalSolution> {
    match pareto_dp(t, k, PARETO_CAP)? {
        Some(s) => Ok(s),
        None => quantized_dp(t, k),
    }
}

/// Left-fold sums, in branch order, of the chosen entries.
fn fold(t: &[BranchTable], pick: &[usize], sel: impl Fn(&BranchTable, usize) -> f64) -> f64 {
    t.iter().zip(pick).fold(0.0, |acc, (b, &g)| acc + sel(b, g))
}

#[derive(Clone, Copy)]
struct State {
    h: f64,
    c: f64,
    parent: u32,
    choice: u32,
}

/// Exact frontier DP. Domination is preserved by floating-point addition,
/// so the optimum equals the enumerated optimum bit-for-bit. `None` when the
/// frontier outgrows `cap`.
pub(crate) fn pareto_dp(t: &[BranchTable], k: f64, cap: usize) -> Result<Option<PrimalSolution>> {
    let n = t.len();
    let budget = k * n as f64;
    // Smallest regularizer total still to come, for pruning states that cannot finish.
    let mut rest = vec![0.0; n + 1];
    for i in (0..n).rev() {
        rest[i] = rest[i + 1] + t[i].h.iter().copied().fold(f64::INFINITY, f64::min);
    }
    let slack = 1e-9 * (1.0 + budget.abs());
    let mut layers: Vec<Vec<State>> = vec![vec![State { h: 0.0, c: 0.0, parent: 0, choice: 0 }]];
    for (i, b) in t.iter().enumerate() {
        let prev = &layers[i];
        let mut next = Vec::with_capacity(prev.len() * b.len());
        for (p, s) in prev.iter().enumerate() {
            for g in 0..b.len() {
                let h = s.h + b.h[g];
                if h + rest[i + 1] > budget + slack {
                    continue;
                }
                next.push(State { h, c: s.c + b.c[g], parent: p as u32, choice: g as u32 });
            }
        }
        next.sort_by(|a, b| a.h.total_cmp(&b.h).then(a.c.total_cmp(&b.c)));
        let mut kept: Vec<State> = Vec::new();
        for s in next {
            if kept.last().is_none_or(|l| s.c < l.c) {
                kept.push(s);
            }
        }
        if kept.is_empty() {
            return Err(infeasible(t, k));
        }
        if kept.len() > cap {
            return Ok(None);
        }
        layers.push(kept);
    }
    let last = &layers[n];
    let best = last
        .iter()
        .enumerate()
        .filter(|(_, s)| within_budget(s.h, n, k))
        .min_by(|a, b| a.1.c.total_cmp(&b.1.c))
        .map(|(j, _)| j)
        .ok_or_else(|| infeasible(t, k))?;
    let mut pick = vec![0usize; n];
    let mut j = best;
    for i in (0..n).rev() {
        let s = layers[i + 1][j];
        pick[i] = s.choice as usize;
        j = s.parent as usize;
    }
    let value = fold(t, &pick, |b, g| b.c[g]) / n as f64;
    Ok(Some(PrimalSolution { value, lower: value, argmin: pick, method: PrimalMethod::Pareto }))
}

/// Quantized-budget DP run twice: rounding each `h` up gives a feasible
/// upper bound, rounding down gives a relaxation and hence a lower bound.
pub(crate) fn quantized_dp(t: &[BranchTable], k: f64) -> Result<PrimalSolution> {
    let n = t.len();
    let mins: Vec<f64> = t.iter().map(|b| b.h.iter().copied().fold(f64::INFINITY, f64::min)).collect();
    let range = t
        .iter()
        .zip(&mins)
        .map(|(b, m)| b.h.iter().map(|h| h - m).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    let slack_total = k * n as f64 - mins.iter().sum::<f64>();
    if slack_total < -1e-12 * (1.0 + k.abs() * n as f64) {
        return Err(infeasible(t, k));
    }
    if range == 0.0 {
        let pick: Vec<usize> = t
            .iter()
            .map(|b| (0..b.len()).min_by(|&a, &g| b.c[a].total_cmp(&b.c[g])).unwrap())
            .collect();
        let value = fold(t, &pick, |b, g| b.c[g]) / n as f64;
        return Ok(PrimalSolution { value, lower: value, argmin: pick, method: PrimalMethod::Quantized });
    }
    let delta = range / BUDGET_BINS;
    let cap = ((slack_total.max(0.0) / delta) + 1e-9).floor() as usize;
    let run = |up: bool| -> Option<(f64, Vec<usize>)> {
        let bins = |b: &BranchTable, m: f64, g: usize| -> usize {
            let q = (b.h[g] - m) / delta;
            (if up { q.ceil() } else { q.floor() }) as usize
        };
        let mut best = vec![f64::INFINITY; cap + 1];
        best[0] = 0.0;
        let mut back: Vec<Vec<u32>> = Vec::with_capacity(n);
        for (b, &m) in t.iter().zip(&mins) {
            let mut next = vec![f64::INFINITY; cap + 1];
            let mut choice = vec![u32::MAX; cap + 1];
            for g in 0..b.len() {
                let q = bins(b, m, g);
                if q > cap {
                    continue;
                }
                for u in 0..=cap - q {
                    if best[u].is_finite() {
                        let v = best[u] + b.c[g];
                        if v < next[u + q] {
                            next[u + q] = v;
                            choice[u + q] = g as u32;
                        }
                    }
                }
            }
            back.push(choice);
            best = next;
        }
        let (mut u, _) = best.iter().enumerate().filter(|(_, v)| v.is_finite()).min_by(|a, b| a.1.total_cmp(b.1))?;
        let mut pick = vec![0usize; n];
        for i in (0..n).rev() {
            let g = back[i][u] as usize;
            pick[i] = g;
            u -= bins(&t[i], mins[i], g);
        }
        Some((fold(t, &pick, |b, g| b.c[g]) / n as f64, pick))
    };
    let (lower, _) = run(false).ok_or_else(|| infeasible(t, k))?;
    let (value, pick) = run(true).ok_or_else(|| infeasible(t, k))?;
    let h_sum = fold(t, &pick, |b, g| b.h[g]);
    if !within_budget(h_sum, n, k) {
        return Err(Error::Numerical(format!("rounded-up DP returned an infeasible point (Σh/I = {})", h_sum / n as f64)));
    }
    Ok(PrimalSolution { value, lower: lower.min(value), argmin: pick, method: PrimalMethod::Quantized })
}

pub(crate) fn product_size(t: &[BranchTable]) -> u64 {
    t.iter().fold(1u64, |acc, b| acc.saturating_mul(b.len() as u64))
}

/// Calls `visit` on every grid assignment, in odometer order.
pub(crate) fn for_each_assignment(t: &[BranchTable], mut visit: impl FnMut(&[usize])) -> Result<()> {
    let size = product_size(t);
    if size > ENUMERATION_CAP {
        return Err(Error::SizeLimit(format!("grid product has {size} points, cap is {ENUMERATION_CAP}")));
    }
    let mut pick = vec![0usize; t.len()];
    loop {
        visit(&pick);
        let mut i = 0;
        loop {
            if i == t.len() {
                return Ok(());
            }
            pick[i] += 1;
            if pick[i] < t[i].len() {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
    }
}

/// Exhaustive search of the affine objective, for cross-checking the DP.
pub(crate) fn primal_enumerate_affine(t: &[BranchTable], k: f64) -> Result<PrimalSolution> {
    let n = t.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for_each_assignment(t, |pick| {
        if within_budget(fold(t, pick, |b, g| b.h[g]), n, k) {
            let c = fold(t, pick, |b, g| b.c[g]);
            if best.as_ref().is_none_or(|(v, _)| c < *v) {
                best = Some((c, pick.to_vec()));
            }
        }
    })?;
    let (c, pick) = best.ok_or_else(|| infeasible(t, k))?;
    let value = c / n as f64;
    Ok(PrimalSolution { value, lower: value, argmin: pick, method: PrimalMethod::Enumeration })
}

pub(crate) fn primal_enumerate_hinge(t: &[BranchTable], data: &Dataset, tau: f64, k: f64) -> Result<PrimalSolution> {
    let n = t.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for_each_assignment(t, |pick| {
        if within_budget(fold(t, pick, |b, g| b.h[g]), n, k) {
            let r = hinge_risk_at(t, pick, data, tau);
            if best.as_ref().is_none_or(|(v, _)| r < *v) {
                best = Some((r, pick.to_vec()));
            }
        }
    })?;
    let (value, pick) = best.ok_or_else(|| infeasible(t, k))?;
    Ok(PrimalSolution { value, lower: value, argmin: pick, method: PrimalMethod::Enumeration })
}
