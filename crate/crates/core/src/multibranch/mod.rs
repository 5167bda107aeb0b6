//! Multi-branch networks `f = (1/I) Σ fᵢ` over finite parameter grids: the
//! τ-hinge risk, the budget-constrained primal, its one-dimensional dual,
//! per-branch non-convexity Δᵢ, and the normalized duality-gap check.
//!
//! Under a large enough τ the hinge never clips, so the risk of a branch is
//! the affine quantity `cᵢ(w) = E[1 − y fᵢ(w; x)/τ]` and both problems
//! separate across branches. Below that τ the true hinge is kept and the
//! problems are solved by enumerating the parameter product.

mod branch;
mod dual;
mod primal;
mod report;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use branch::{Activation, BranchSpec, FeatureKind, Regularizer};
pub use dual::{dual_q, dual_sup, DualSolution};
pub use primal::{primal_inf, within_budget, PrimalMethod, PrimalSolution, BUDGET_RTOL, ENUMERATION_CAP, PARETO_CAP};
pub use report::{
    compute_delta, default_k, default_tau, gap_sweep, grid_product_size, replicate, verify_theorem1, BranchDelta, GapInstance,
    GapReport, SfCertificate, VerifyOptions,
};

/// Absolute tolerance on the weight total.
pub const WEIGHT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
    pub weight: f64,
}

/// A finitely supported distribution over labelled points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Sample>", into = "Vec<Sample>")]
pub struct Dataset {
    samples: Vec<Sample>,
}

impl TryFrom<Vec<Sample>> for Dataset {
    type Error = Error;
    fn try_from(samples: Vec<Sample>) -> Result<Self> {
        Dataset::new(samples)
    }
}

impl From<Dataset> for Vec<Sample> {
    fn from(d: Dataset) -> Self {
        d.samples
    }
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("dataset is empty"));
        }
        let d = samples[0].x.len();
        for (k, s) in samples.iter().enumerate() {
            if s.x.len() != d {
                return Err(invalid(format!("sample {k} has {} features, sample 0 has {d}", s.x.len())));
            }
            if s.x.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("sample {k} has a non-finite feature")));
            }
            if s.y != 1.0 && s.y != -1.0 {
                return Err(invalid(format!("sample {k} has label {}, expected ±1", s.y)));
            }
            if !(s.weight >= 0.0 && s.weight.is_finite()) {
                return Err(invalid(format!("sample {k} has weight {}", s.weight)));
            }
        }
        let total = ksum(samples.iter().map(|s| s.weight));
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(Dataset { samples })
    }

    /// Uniform weights `1/n`: the empirical distribution of the points.
    pub fn empirical(xs: Vec<Vec<f64>>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(invalid(format!("{} inputs but {} labels", xs.len(), ys.len())));
        }
        let w = 1.0 / xs.len().max(1) as f64;
        Dataset::new(xs.into_iter().zip(ys).map(|(x, y)| Sample { x, y, weight: w }).collect())
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.samples[0].x.len()
    }
}

/// Neumaier-compensated sum.
pub(crate) fn ksum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = s + v;
        comp += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
        s = t;
    }
    s + comp
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid(format!("tau = {tau} must be positive and finite")));
    }
    Ok(())
}

/// Feature values, regularizer values and affine risks of one branch on its grid.
#[derive(Clone, Debug)]
pub(crate) struct BranchTable {
    /// `f[g][s] = fᵢ(w_g; x_s)`.
    pub f: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    /// `c[g] = E[1 − y fᵢ(w_g; x)/τ]`.
    pub c: Vec<f64>,
}

impl BranchTable {
    pub fn build(b: &BranchSpec, data: &Dataset, tau: f64) -> Result<Self> {
        b.check_input_dim(data.input_dim())?;
        let f: Vec<Vec<f64>> =
            b.grid().iter().map(|w| data.samples().iter().map(|s| b.feature(w, &s.x)).collect()).collect();
        let h = b.grid().iter().map(|w| b.regularize(w)).collect();
        let c = f
            .iter()
            .map(|fg| ksum(fg.iter().zip(data.samples()).map(|(v, s)| s.weight * (1.0 - s.y * v / tau))))
            .collect();
        Ok(BranchTable { f, h, c })
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }
}

pub(crate) fn tables(branches: &[BranchSpec], data: &Dataset, tau: f64) -> Result<Vec<BranchTable>> {
    check_tau(tau)?;
    if branches.is_empty() {
        return Err(invalid("no branches"));
    }
    branches.iter().map(|b| BranchTable::build(b, data, tau)).collect()
}

/// `E max(0, 1 − y·f(w; x)/τ)` with `f = (1/I) Σ fᵢ(wᵢ; x)`.
pub fn tau_hinge_risk(params: &[Vec<f64>], branches: &[BranchSpec], data: &Dataset, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if params.len() != branches.len() {
        return Err(invalid(format!("{} parameter blocks for {} branches", params.len(), branches.len())));
    }
    let i = branches.len() as f64;
    for (b, w) in branches.iter().zip(params) {
        b.check_input_dim(data.input_dim())?;
        if w.len() != b.param_dim() {
            return Err(invalid(format!("parameter block has {} entries, branch expects {}", w.len(), b.param_dim())));
        }
    }
    Ok(ksum(data.samples().iter().map(|s| {
        let f = ksum(branches.iter().zip(params).map(|(b, w)| b.feature(w, &s.x))) / i;
        s.weight * (1.0 - s.y * f / tau).max(0.0)
    })))
}

/// True-hinge risk of one grid assignment, from precomputed feature values.
pub(crate) fn hinge_risk_at(t: &[BranchTable], pick: &[usize], data: &Dataset, tau: f64) -> f64 {
    let i = t.len() as f64;
    ksum(data.samples().iter().enumerate().map(|(s, smp)| {
        let f = ksum(t.iter().zip(pick).map(|(b, &g)| b.f[g][s])) / i;
        smp.weight * (1.0 - smp.y * f / tau).max(0.0)
    }))
}

/// Outcome of the margin check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub ok: bool,
    /// `max over w, x with positive weight of y·f(w; x)`.
    pub max_margin: f64,
    /// Sample index and per-branch grid indices attaining the margin.
    pub witness_sample: usize,
    pub witness: Vec<usize>,
}

/// Checks `τ > y·f(w; x)` over the whole grid product and every sample of
/// positive weight. The margin separates across branches for a fixed sample,
/// so the maximum is exact without enumerating the product.
pub fn check_assumption_tau(branches: &[BranchSpec], data: &Dataset, tau: f64) -> Result<AssumptionCheck> {
    let t = tables(branches, data, tau)?;
    Ok(assumption_from_tables(&t, data, tau))
}

pub(crate) fn assumption_from_tables(t: &[BranchTable], data: &Dataset, tau: f64) -> AssumptionCheck {
    let i = t.len() as f64;
    let mut best = AssumptionCheck { ok: true, max_margin: f64::NEG_INFINITY, witness_sample: 0, witness: vec![] };
    for (s, smp) in data.samples().iter().enumerate() {
        if smp.weight <= 0.0 {
            continue;
        }
        let picks: Vec<usize> = t
            .iter()
            .map(|b| (0..b.len()).max_by(|&a, &g| (smp.y * b.f[a][s]).total_cmp(&(smp.y * b.f[g][s])).then(g.cmp(&a))).unwrap())
            .collect();
        let m = ksum(t.iter().zip(&picks).map(|(b, &g)| smp.y * b.f[g][s])) / i;
        if m > best.max_margin {
            best = AssumptionCheck { ok: true, max_margin: m, witness_sample: s, witness: picks };
        }
    }
    best.ok = tau > best.max_margin;
    best
}

#[cfg(test)]
mod tests;
