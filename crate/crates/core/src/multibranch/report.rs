//! Δᵢ, the full gap report, instance files and I-sweeps.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dual::dual_sup_separable;
use super::primal::{primal_enumerate_affine, primal_enumerate_hinge, primal_separable, product_size, within_budget};
use super::{assumption_from_tables, tables, BranchSpec, BranchTable, Dataset, PrimalMethod};
use crate::error::{invalid, Result};
use crate::geometry::convex_envelope;
use crate::geometry::{convex_hull, minkowski_sum_hulls, sf_decompose, ConvexHull2D, PlanarSet, Point};
use crate::rng;

/// Relative floating-point allowance folded into `eps_grid`.
const NUMERIC_TOL: f64 = 1e-11;
/// Products up to this size are cross-checked by enumeration.
const CROSS_CHECK_BRANCHES: usize = 4;
const CROSS_CHECK_GRID: usize = 50;

/// Non-convexity of one branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchDelta {
    /// `max_w (f̂ − f̃)(w)` over the grid, clipped at 0.
    pub delta: f64,
    /// `sup_r (ĉ − č)(r)`: the same divergence measured on the (h, c) point
    /// set, where `ĉ(r) = min{c : h ≤ r}` and `č` is its lower convex hull.
    /// On a continuum `ρ ≤ Δ`; on a grid the excess is discretization slack.
    pub rho: f64,
    /// Grid index attaining `delta`.
    pub at: usize,
}

/// Δᵢ of one branch for the risk `E[1 − y fᵢ/τ]`.
pub fn compute_delta(branch: &BranchSpec, data: &Dataset, tau: f64) -> Result<BranchDelta> {
    let t = tables(std::slice::from_ref(branch), data, tau)?;
    delta_from_table(branch, &t[0])
}

/// `out[g] = min { c[j] : h[j] ≤ h[g] }`.
fn constrained_min(h: &[f64], c: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..h.len()).collect();
    order.sort_by(|&a, &b| h[a].total_cmp(&h[b]));
    let mut out = vec![0.0; h.len()];
    let mut k = 0;
    let mut run = f64::INFINITY;
    while k < order.len() {
        let mut e = k;
        while e < order.len() && h[order[e]] == h[order[k]] {
            run = run.min(c[order[e]]);
            e += 1;
        }
        for &j in &order[k..e] {
            out[j] = run;
        }
        k = e;
    }
    out
}

pub(crate) fn delta_from_table(branch: &BranchSpec, t: &BranchTable) -> Result<BranchDelta> {
    let grid = branch.grid();
    let f_hat = constrained_min(&t.h, &t.c);
    let samples: Vec<(Vec<f64>, f64)> = grid.iter().cloned().zip(t.c.iter().copied()).collect();
    let env = convex_envelope(&samples, branch.bounds())?;
    let mut best = (0.0f64, 0usize);
    for (g, w) in grid.iter().enumerate() {
        let d = f_hat[g] - env.evaluate(w)?;
        if d > best.0 {
            best = (d, g);
        }
    }
    Ok(BranchDelta { delta: best.0, rho: rho(&t.h, &t.c)?, at: best.1 })
}

fn rho(h: &[f64], c: &[f64]) -> Result<f64> {
    let lo = h.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let samples: Vec<(Vec<f64>, f64)> = h.iter().zip(c).map(|(&a, &b)| (vec![a], b)).collect();
    let env = convex_envelope(&samples, &[(lo, hi)])?;
    let step = constrained_min(h, c);
    let mut levels: Vec<(f64, f64)> = h.iter().copied().zip(step).collect();
    levels.sort_by(|a, b| a.0.total_cmp(&b.0));
    levels.dedup_by(|b, a| a.0 == b.0);
    let mut best = 0.0f64;
    let mut prev: Option<(f64, f64)> = None;
    for &(r, s) in &levels {
        let e = env.evaluate(&[r])?;
        best = best.max(s - e);
        // On (r_prev, r) the step holds its previous level while the hull is linear.
        if let Some((pr, ps)) = prev {
            best = best.max(ps - e.min(env.evaluate(&[pr])?));
        }
        prev = Some((r, s));
    }
    Ok(best)
}

/// `2·(1 + max |fᵢ|)` over every branch, grid point and sample: the margin
/// condition then holds by construction.
pub fn default_tau(branches: &[BranchSpec], data: &Dataset) -> Result<f64> {
    let mut m = 0.0f64;
    for b in branches {
        b.check_input_dim(data.input_dim())?;
        for w in b.grid() {
            for s in data.samples() {
                m = m.max(b.feature(w, &s.x).abs());
            }
        }
    }
    Ok(2.0 * (1.0 + m))
}

const K_DRAWS: usize = 1000;
const K_QUANTILE: f64 = 0.3;

/// 30th percentile of `(1/I) Σ hᵢ` over 1000 uniform grid assignments:
/// feasible, with the budget usually active.
pub fn default_k(branches: &[BranchSpec], seed: u64) -> Result<f64> {
    if branches.is_empty() {
        return Err(invalid("no branches"));
    }
    let mut r = rng::seeded(seed);
    let n = branches.len() as f64;
    let mut draws: Vec<f64> = (0..K_DRAWS)
        .map(|_| {
            branches
                .iter()
                .map(|b| b.regularize(&b.grid()[r.random_range(0..b.grid().len())]))
                .sum::<f64>()
                / n
        })
        .collect();
    draws.sort_by(f64::total_cmp);
    let rank = (K_QUANTILE * K_DRAWS as f64).ceil() as usize;
    Ok(draws[rank - 1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Enumerate the product to confirm the DP when it is small.
    pub cross_check: bool,
    /// Build the Shapley–Folkman certificate.
    pub certificate: bool,
    pub lambda_max: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { cross_check: true, certificate: true, lambda_max: None }
    }
}

/// Constructive check of the bound: decompose the dual point of the summed
/// hull, keep the pure summands, and replace each convexified one by its
/// best grid point under the averaged budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SfCertificate {
    pub target: Point,
    /// `|target_w − sup(D)|`.
    pub target_error: f64,
    pub convexified: Vec<usize>,
    pub reconstruction_error: f64,
    pub primal_value: f64,
    pub primal_feasible: bool,
    /// `sup(D) + (1/I) Σ_{convexified} ρᵢ`, which `primal_value` may not exceed.
    pub rounding_bound: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub branches: usize,
    pub tau: f64,
    pub k: f64,
    pub inf_p: f64,
    pub sup_d: f64,
    pub lambda_star: f64,
    pub lambda_boundary: bool,
    pub gap: f64,
    pub delta_i: Vec<f64>,
    pub delta_worst: f64,
    pub rho_worst: f64,
    /// `(2/I)·Δ_worst`.
    pub bound: f64,
    /// `(2/I)·max(0, ρ_worst − Δ_worst)` plus the DP bracket and rounding.
    pub eps_grid: f64,
    pub dp_bracket: f64,
    pub primal_method: PrimalMethod,
    pub argmin: Vec<usize>,
    /// Exhaustive primal value when the product was small enough to enumerate.
    pub enumerated_inf_p: Option<f64>,
    pub assumption_tau_ok: bool,
    pub max_margin: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub certificate: Option<SfCertificate>,
}

impl GapReport {
    /// Weak duality always; the upper bound only under the margin assumption.
    pub fn holds(&self) -> bool {
        let cert = self.certificate.as_ref().is_none_or(|c| c.ok);
        let enumerated = self.enumerated_inf_p.is_none_or(|v| v == self.inf_p);
        self.lower_ok && (!self.assumption_tau_ok || (self.upper_ok && cert && enumerated))
    }

    /// `gap / Δ_worst`, or `None` when `Δ_worst = 0`.
    pub fn normalized_gap(&self) -> Option<f64> {
        (self.delta_worst > 0.0).then(|| self.gap / self.delta_worst)
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// One CSV row per report, under a header line.
    pub fn write_csv_rows<W: Write>(reports: &[GapReport], w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in reports {
            out.serialize(GapRow::from(r))?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Serialize)]
struct GapRow {
    branches: usize,
    tau: f64,
    k: f64,
    inf_p: f64,
    sup_d: f64,
    lambda_star: f64,
    gap: f64,
    delta_worst: f64,
    rho_worst: f64,
    bound: f64,
    eps_grid: f64,
    dp_bracket: f64,
    assumption_tau_ok: bool,
    max_margin: f64,
    lower_ok: bool,
    upper_ok: bool,
    holds: bool,
}

impl From<&GapReport> for GapRow {
    fn from(r: &GapReport) -> Self {
        GapRow {
            branches: r.branches,
            tau: r.tau,
            k: r.k,
            inf_p: r.inf_p,
            sup_d: r.sup_d,
            lambda_star: r.lambda_star,
            gap: r.gap,
            delta_worst: r.delta_worst,
            rho_worst: r.rho_worst,
            bound: r.bound,
            eps_grid: r.eps_grid,
            dp_bracket: r.dp_bracket,
            assumption_tau_ok: r.assumption_tau_ok,
            max_margin: r.max_margin,
            lower_ok: r.lower_ok,
            upper_ok: r.upper_ok,
            holds: r.holds(),
        }
    }
}

/// Solves both problems, measures Δᵢ and checks
/// `−eps ≤ inf(P) − sup(D) ≤ (2/I)·Δ_worst + eps`.
pub fn verify_theorem1(branches: &[BranchSpec], data: &Dataset, tau: f64, k: f64, opts: &VerifyOptions) -> Result<GapReport> {
    if !k.is_finite() {
        return Err(invalid(format!("K = {k} must be finite")));
    }
    let t = tables(branches, data, tau)?;
    let n = t.len();
    let check = assumption_from_tables(&t, data, tau);
    let small = n <= CROSS_CHECK_BRANCHES && t.iter().all(|b| b.len() <= CROSS_CHECK_GRID);

    let (primal, enumerated) = if check.ok {
        let p = primal_separable(&t, k)?;
        let e = if opts.cross_check && small { Some(primal_enumerate_affine(&t, k)?.value) } else { None };
        (p, e)
    } else {
        (primal_enumerate_hinge(&t, data, tau, k)?, None)
    };
    let dual = if check.ok {
        dual_sup_separable(&t, k, opts.lambda_max)?
    } else {
        super::dual::dual_sup(branches, data, tau, k, opts.lambda_max)?
    };
    let deltas: Vec<BranchDelta> =
        branches.par_iter().zip(t.par_iter()).map(|(b, tb)| delta_from_table(b, tb)).collect::<Result<_>>()?;
    let delta_worst = deltas.iter().map(|d| d.delta).fold(0.0, f64::max);
    let rho_worst = deltas.iter().map(|d| d.rho).fold(0.0, f64::max);

    let inf_p = primal.value;
    let sup_d = dual.value;
    let gap = inf_p - sup_d;
    let scale = 2.0 / n as f64;
    let eps_grid = scale * (rho_worst - delta_worst).max(0.0)
        + primal.bracket()
        + NUMERIC_TOL * (1.0 + inf_p.abs() + sup_d.abs());
    let bound = scale * delta_worst;

    let certificate = if opts.certificate && check.ok {
        Some(sf_certificate(&t, &deltas, k, sup_d)?)
    } else {
        None
    };
    Ok(GapReport {
        branches: n,
        tau,
        k,
        inf_p,
        sup_d,
        lambda_star: dual.lambda_star,
        lambda_boundary: dual.at_boundary,
        gap,
        delta_i: deltas.iter().map(|d| d.delta).collect(),
        delta_worst,
        rho_worst,
        bound,
        eps_grid,
        dp_bracket: primal.bracket(),
        primal_method: primal.method,
        argmin: primal.argmin,
        enumerated_inf_p: enumerated,
        assumption_tau_ok: check.ok,
        max_margin: check.max_margin,
        lower_ok: gap >= -eps_grid,
        upper_ok: gap <= bound + eps_grid,
        certificate,
    })
}

/// Lowest point of `hull` with `r ≤ K`.
fn lowest_within(hull: &ConvexHull2D, k: f64) -> Option<Point> {
    let v = hull.vertices();
    let mut best: Option<Point> = None;
    let mut offer = |p: Point| {
        if best.is_none_or(|b| p[1] < b[1]) {
            best = Some(p);
        }
    };
    for &p in v.iter().filter(|p| p[0] <= k) {
        offer(p);
    }
    for i in 0..v.len() {
        let (a, b) = (v[i], v[(i + 1) % v.len()]);
        if (a[0] - k) * (b[0] - k) < 0.0 {
            let s = (k - a[0]) / (b[0] - a[0]);
            offer([k, a[1] + s * (b[1] - a[1])]);
        }
    }
    best
}

fn sf_certificate(t: &[BranchTable], deltas: &[BranchDelta], k: f64, sup_d: f64) -> Result<SfCertificate> {
    let n = t.len();
    let nf = n as f64;
    let sets: Vec<PlanarSet> = t
        .iter()
        .enumerate()
        .map(|(i, b)| {
            PlanarSet::new(b.h.iter().zip(&b.c).map(|(h, c)| [h / nf, c / nf]).collect()).map(|s| s.with_branch(i))
        })
        .collect::<Result<_>>()?;
    let hulls: Vec<ConvexHull2D> = sets.iter().map(convex_hull).collect();
    let sum = minkowski_sum_hulls(&hulls)?;
    // A budget equal to the smallest average can sit a rounding error below the hull.
    let reach = if sum.min_r() > k && within_budget(sum.min_r() * nf, n, k) { sum.min_r() } else { k };
    let target = lowest_within(&sum, reach).ok_or_else(|| super::primal::infeasible(t, k))?;
    let dec = sf_decompose(target, &sets)?;
    let rec = dec.reconstruct(&sets);
    let reconstruction_error = (rec[0] - target[0]).abs().max((rec[1] - target[1]).abs());

    let mut pick = vec![usize::MAX; n];
    for &(i, g) in &dec.pure_points {
        pick[i] = g;
    }
    let mut allowance = 0.0;
    for cv in &dec.convexified {
        let b = &t[cv.set];
        let r: f64 = cv.support.iter().map(|&(g, a)| a * b.h[g]).sum();
        let tol = 1e-12 * (1.0 + r.abs());
        pick[cv.set] = (0..b.len())
            .filter(|&g| b.h[g] <= r + tol)
            .min_by(|&a, &g| b.c[a].total_cmp(&b.c[g]))
            .unwrap_or_else(|| (0..b.len()).min_by(|&a, &g| b.h[a].total_cmp(&b.h[g])).unwrap());
        allowance += deltas[cv.set].rho / nf;
    }
    let h_sum: f64 = t.iter().zip(&pick).map(|(b, &g)| b.h[g]).sum();
    let primal_value = t.iter().zip(&pick).map(|(b, &g)| b.c[g]).sum::<f64>() / nf;
    // The grid points replacing convexified summands may overshoot the budget
    // by rounding only.
    let primal_feasible = within_budget(h_sum, n, k);
    let rounding_bound = sup_d + allowance;
    let target_error = (target[1] - sup_d).abs();
    let tol = 1e-9 * (1.0 + sup_d.abs());
    let ok = dec.convexified.len() <= 2
        && reconstruction_error <= 1e-9
        && target_error <= tol
        && primal_feasible
        && primal_value <= rounding_bound + tol;
    Ok(SfCertificate {
        target,
        target_error,
        convexified: dec.convexified_indices(),
        reconstruction_error,
        primal_value,
        primal_feasible,
        rounding_bound,
        ok,
    })
}

/// `count` branches cycling through `template`.
pub fn replicate(template: &[BranchSpec], count: usize) -> Vec<BranchSpec> {
    template.iter().cycle().take(count).cloned().collect()
}

/// Instance file for the gap experiments.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapInstance {
    pub branches: Vec<BranchSpec>,
    pub dataset: Dataset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "K")]
    pub k: Option<f64>,
    /// Number of branches `I`; the listed branches are cycled to reach it.
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "I")]
    pub count: Option<usize>,
}

impl GapInstance {
    pub fn family(&self) -> Vec<BranchSpec> {
        replicate(&self.branches, self.count.unwrap_or(self.branches.len()))
    }

    /// τ and K with defaults filled in from the listed branches.
    pub fn resolve(&self, seed: u64) -> Result<(f64, f64)> {
        let tau = match self.tau {
            Some(t) => t,
            None => default_tau(&self.branches, &self.dataset)?,
        };
        let k = match self.k {
            Some(k) => k,
            None => default_k(&self.branches, seed)?,
        };
        Ok((tau, k))
    }
}

/// Runs `verify_theorem1` on the template replicated to each count, with τ
/// and K held fixed across the sweep.
pub fn gap_sweep(
    template: &[BranchSpec],
    data: &Dataset,
    tau: f64,
    k: f64,
    counts: &[usize],
    opts: &VerifyOptions,
) -> Result<Vec<GapReport>> {
    if counts.contains(&0) {
        return Err(invalid("branch counts must be positive"));
    }
    counts.iter().map(|&c| verify_theorem1(&replicate(template, c), data, tau, k, opts)).collect()
}

/// Exhaustive product size, exposed for callers sizing cross-checks.
pub fn grid_product_size(branches: &[BranchSpec], data: &Dataset) -> Result<u64> {
    Ok(product_size(&tables(branches, data, 1.0)?))
}
