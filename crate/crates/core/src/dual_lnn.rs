//! Convex dual of the regularized deep linear network.
//!
//! The dual maximizes `−½‖Ỹ − Λ‖²_{d_min} + ½‖Y‖²` over `‖Λ‖₂ ≤ γ` with rows
//! in `Row(X)`. This module holds the closed-form certificate, a checker for
//! the optimality conditions, a projected supergradient solver and the
//! primal/dual comparison report.

use rayon::join;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linear_net::{
    balanced_factorization, closed_form_global_product, multi_start_local_search, primal_objective,
    LinearNetFactors, ProblemInstance,
};
use crate::matrix::{spectral_ball_project, svd, Matrix};

/// Absolute slack on `‖Λ‖₂ ≤ γ` and on the row-space residual.
pub const FEASIBILITY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub spectral_ok: bool,
    pub spectral_norm: f64,
    pub row_space_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub lambda: Matrix,
    pub gamma: f64,
    pub feasibility: Feasibility,
}

impl DualCertificate {
    pub fn new(lambda: Matrix, p: &ProblemInstance) -> Result<Self> {
        p.check_output_shape(&lambda, "Λ")?;
        let spectral_norm = lambda.spectral_norm()?;
        let row_space_residual = (&lambda - &(&lambda * p.row_projector())).frobenius_norm();
        Ok(DualCertificate {
            feasibility: Feasibility {
                spectral_ok: spectral_norm <= p.gamma() + FEASIBILITY_TOL,
                spectral_norm,
                row_space_residual,
            },
            lambda,
            gamma: p.gamma(),
        })
    }

    pub fn is_feasible(&self) -> bool {
        self.feasibility.spectral_ok
            && self.feasibility.row_space_residual
                <= FEASIBILITY_TOL * (1.0 + self.lambda.frobenius_norm())
    }
}

/// Sum of the `d` largest squared singular values, `d` capped at the rank bound.
fn top_sq(m: &Matrix, d: usize) -> Result<f64> {
    Ok(svd(m)?.singular_values.iter().take(d).map(|s| s * s).sum())
}

/// Best rank-`d` approximation, `d` capped at the smaller dimension.
fn top_part(m: &Matrix, d: usize) -> Result<Matrix> {
    let s = svd(m)?;
    Ok(s.reconstruct_with(d, |x| x))
}

fn dual_value(lambda: &Matrix, p: &ProblemInstance) -> Result<f64> {
    Ok(-0.5 * top_sq(&(p.y_tilde() - lambda), p.d_min())? + 0.5 * p.y().frobenius_sq())
}

pub fn dual_objective(c: &DualCertificate, p: &ProblemInstance) -> Result<f64> {
    p.check_output_shape(&c.lambda, "Λ")?;
    dual_value(&c.lambda, p)
}

/// `Λ* = γ U_{:,1:r} V_{:,1:r}ᵀ` over the skinny SVD of `Ỹ`.
pub fn closed_form_certificate(p: &ProblemInstance) -> Result<DualCertificate> {
    p.require_gamma_below_sigma_min()?;
    let s = svd(p.y_tilde())?;
    let gamma = p.gamma();
    DualCertificate::new(s.reconstruct_with(s.rank(), |_| gamma), p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualConditionsReport {
    pub subgradient_residual: f64,
    pub projection_residual: f64,
    pub spectral_margin: f64,
    pub stationarity_residuals: Vec<f64>,
    /// Set when `Z*` admits no balanced factorization.
    pub factorization_error: Option<String>,
    pub tolerance: f64,
    pub pass: bool,
}

struct TangentSpace {
    pu: Matrix,
    pv: Matrix,
    uv: Matrix,
    singular_values: Vec<f64>,
}

impl TangentSpace {
    fn at(z: &Matrix) -> Result<Self> {
        let s = svd(z)?;
        let r = s.rank();
        let u = s.u.leading_columns(r);
        let v = s.v.leading_columns(r);
        Ok(TangentSpace {
            pu: &u * &u.transpose(),
            pv: &v * &v.transpose(),
            uv: &u * &v.transpose(),
            singular_values: s.singular_values[..r].to_vec(),
        })
    }

    fn project(&self, m: &Matrix) -> Matrix {
        let left = &self.pu * m;
        let right = m * &self.pv;
        let both = &left * &self.pv;
        &(&left + &right) - &both
    }

    fn project_perp(&self, m: &Matrix) -> Matrix {
        m - &self.project(m)
    }
}

/// Verifies that `(Z*, Λ)` satisfy the optimality conditions:
/// `Λ ∈ γ∂‖Z*‖_*` with rows in `Row(X)`, `P_T(Ỹ − Λ) = Z*`, and
/// `‖P_{T⊥}(Ỹ − Λ)‖₂ ≤ σ_{d_min}(Z*)`. Also evaluates the layerwise
/// stationarity equations at the balanced factors of `Z*`.
pub fn check_dual_conditions(
    z_star: &Matrix,
    c: &DualCertificate,
    p: &ProblemInstance,
    tol: f64,
) -> Result<DualConditionsReport> {
    p.check_output_shape(z_star, "Z*")?;
    p.check_output_shape(&c.lambda, "Λ")?;
    let t = TangentSpace::at(z_star)?;
    let lambda = &c.lambda;
    let gamma = p.gamma();

    let tangent_gap = (&t.project(lambda) - &t.uv.scale(gamma)).frobenius_norm();
    let normal_excess = (t.project_perp(lambda).spectral_norm()? - gamma).max(0.0);
    let row_leak = (lambda - &(lambda * p.row_projector())).frobenius_norm();
    let subgradient_residual = tangent_gap.max(normal_excess).max(row_leak);

    let shifted = p.y_tilde() - lambda;
    let projection_residual = (&t.project(&shifted) - z_star).frobenius_norm();
    let sigma_dmin = t.singular_values.get(p.d_min() - 1).copied().unwrap_or(0.0);
    let spectral_margin = sigma_dmin - t.project_perp(&shifted).spectral_norm()?;

    let (stationarity_residuals, factorization_error) = match balanced_factorization(z_star, p) {
        Ok(f) => (stationarity_residuals(&f, lambda, p), None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };

    let pass = subgradient_residual <= tol
        && projection_residual <= tol
        && spectral_margin >= -tol
        && factorization_error.is_none()
        && stationarity_residuals.iter().all(|&r| r <= tol);
    Ok(DualConditionsReport {
        subgradient_residual,
        projection_residual,
        spectral_margin,
        stationarity_residuals,
        factorization_error,
        tolerance: tol,
        pass,
    })
}

/// `‖(W_H⋯W_{i+1})ᵀ (W_H⋯W₁X + Λ − Ỹ)(W_{i−1}⋯W₁X)ᵀ‖_F` for each layer.
fn stationarity_residuals(f: &LinearNetFactors, lambda: &Matrix, p: &ProblemInstance) -> Vec<f64> {
    let h = f.depth();
    let mut forward = vec![p.x().clone()];
    for w in f.factors() {
        let next = w * forward.last().expect("non-empty");
        forward.push(next);
    }
    let mut back = &(&forward[h] + lambda) - p.y_tilde();
    let mut out = vec![0.0; h];
    for i in (0..h).rev() {
        out[i] = (&back * &forward[i].transpose()).frobenius_norm();
        if i > 0 {
            back = &f.factors()[i].transpose() * &back;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AscentParams {
    pub max_iters: usize,
    pub tol: f64,
    pub eta0: f64,
}

impl Default for AscentParams {
    fn default() -> Self {
        AscentParams { max_iters: 5000, tol: 1e-12, eta0: 1.0 }
    }
}

#[derive(Clone, Debug)]
pub struct AscentOutcome {
    pub certificate: DualCertificate,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best objective after each iteration, starting with the value at `Λ₀ = 0`.
    pub best_trace: Vec<f64>,
    /// How many times the periodic check had to pull `Λ` back into `Row(X)`.
    pub row_space_corrections: usize,
}

const STALL_WINDOW: usize = 50;
const DRIFT_CHECK_EVERY: usize = 100;

/// Projected supergradient ascent with step `η₀/√t`, started at `Λ₀ = 0`.
/// Returns the best iterate.
pub fn solve_dual_projected_ascent(p: &ProblemInstance, params: &AscentParams) -> Result<AscentOutcome> {
    if !(params.eta0 > 0.0 && params.eta0.is_finite()) {
        return Err(invalid("step scale eta0 must be positive"));
    }
    let zero = Matrix::zeros(p.y().rows(), p.y().cols());
    let start = dual_value(&zero, p)?;
    let mut out = AscentOutcome {
        certificate: DualCertificate::new(zero.clone(), p)?,
        objective: start,
        iterations: 0,
        converged: p.gamma() == 0.0,
        best_trace: vec![start],
        row_space_corrections: 0,
    };
    if p.gamma() == 0.0 {
        return Ok(out);
    }
    let mut lambda = zero;
    let mut best_lambda = lambda.clone();
    let mut stall = 0;
    for t in 1..=params.max_iters {
        let step = params.eta0 / (t as f64).sqrt();
        let ascent = top_part(&(p.y_tilde() - &lambda), p.d_min())?;
        lambda.axpy(step, &ascent);
        lambda = spectral_ball_project(&lambda, p.gamma())?;
        if t % DRIFT_CHECK_EVERY == 0 {
            let projected = &lambda * p.row_projector();
            if (&lambda - &projected).frobenius_norm() > FEASIBILITY_TOL * (1.0 + lambda.frobenius_norm()) {
                lambda = spectral_ball_project(&projected, p.gamma())?;
                out.row_space_corrections += 1;
            }
        }
        let value = dual_value(&lambda, p)?;
        if value - out.objective < params.tol {
            stall += 1;
        } else {
            stall = 0;
        }
        if value > out.objective {
            out.objective = value;
            best_lambda.clone_from(&lambda);
        }
        out.best_trace.push(out.objective);
        out.iterations = t;
        if stall >= STALL_WINDOW {
            out.converged = true;
            break;
        }
    }
    out.certificate = DualCertificate::new(best_lambda, p)?;
    Ok(out)
}

/// Balanced factors of `svd_{d_min}(Ỹ − Λ)`.
pub fn recover_primal_from_dual(c: &DualCertificate, p: &ProblemInstance) -> Result<LinearNetFactors> {
    p.check_output_shape(&c.lambda, "Λ")?;
    let z = top_part(&(p.y_tilde() - &c.lambda), p.d_min())?;
    balanced_factorization(&z, p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportParams {
    pub ascent: AscentParams,
    pub restarts: usize,
    pub local_steps: usize,
    pub local_lr: f64,
    pub seed: u64,
}

impl Default for ReportParams {
    fn default() -> Self {
        ReportParams {
            ascent: AscentParams::default(),
            restarts: 10,
            local_steps: 2000,
            local_lr: 0.01,
            seed: 0,
        }
    }
}

/// Primal and dual optima of one instance, by closed form and by iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReportLnn {
    pub depth: usize,
    pub d_min: usize,
    pub gamma: f64,
    pub sigma_min: Option<f64>,
    pub well_posed: bool,
    pub hypothesis_violation: Option<String>,
    pub primal_closed_form: Option<f64>,
    pub dual_closed_form: Option<f64>,
    pub gap_closed_form: Option<f64>,
    pub relative_gap_closed_form: Option<f64>,
    pub l2_distance: Option<f64>,
    pub primal_local_search: Option<f64>,
    pub local_search_diverged: bool,
    pub dual_iterative: f64,
    pub dual_iterations: usize,
    pub dual_converged: bool,
    pub relative_gap_iterative: Option<f64>,
}

impl GapReportLnn {
    /// True when the closed-form gap and the recovery distance are within `tol`.
    pub fn strong_duality_holds(&self, tol: f64) -> bool {
        match (self.relative_gap_closed_form, self.l2_distance) {
            (Some(g), Some(d)) => g <= tol && d <= tol,
            _ => false,
        }
    }

    pub fn write_json<W: std::io::Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// One CSV row per report, under a header line.
    pub fn write_csv_rows<W: std::io::Write>(reports: &[GapReportLnn], w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in reports {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn duality_gap_report(p: &ProblemInstance, params: &ReportParams) -> Result<GapReportLnn> {
    let (closed, (iterative, local)) = join(
        || closed_form_side(p),
        || {
            join(
                || solve_dual_projected_ascent(p, &params.ascent),
                || {
                    (params.restarts > 0).then(|| {
                        multi_start_local_search(
                            p,
                            params.restarts,
                            params.seed,
                            params.local_steps,
                            params.local_lr,
                        )
                    })
                },
            )
        },
    );
    let iterative = iterative?;
    let local = local.transpose()?;
    let mut report = GapReportLnn {
        depth: p.depth(),
        d_min: p.d_min(),
        gamma: p.gamma(),
        sigma_min: p.sigma_min(),
        well_posed: p.well_posed(),
        hypothesis_violation: None,
        primal_closed_form: None,
        dual_closed_form: None,
        gap_closed_form: None,
        relative_gap_closed_form: None,
        l2_distance: None,
        primal_local_search: local.as_ref().map(|o| o.objective),
        local_search_diverged: local.as_ref().is_some_and(|o| o.diverged),
        dual_iterative: iterative.objective,
        dual_iterations: iterative.iterations,
        dual_converged: iterative.converged,
        relative_gap_iterative: None,
    };
    match closed {
        Ok((primal, dual, l2)) => {
            let gap = primal - dual;
            report.primal_closed_form = Some(primal);
            report.dual_closed_form = Some(dual);
            report.gap_closed_form = Some(gap);
            report.relative_gap_closed_form = Some(gap.abs() / (1.0 + primal.abs()));
            report.l2_distance = Some(l2);
            report.relative_gap_iterative = Some((dual - iterative.objective).abs() / dual.abs().max(1e-300));
        }
        Err(crate::Error::Hypothesis(msg)) => report.hypothesis_violation = Some(msg),
        Err(e) => return Err(e),
    }
    Ok(report)
}

/// Primal value through balanced factors, dual value at `Λ*`, and the
/// distance between the factor product and the dual-recovered product.
fn closed_form_side(p: &ProblemInstance) -> Result<(f64, f64, f64)> {
    let z = closed_form_global_product(p)?;
    let factors = balanced_factorization(&z, p)?;
    let primal = primal_objective(&factors, p)?;
    let cert = closed_form_certificate(p)?;
    let dual = dual_objective(&cert, p)?;
    let recovered = top_part(&(p.y_tilde() - &cert.lambda), p.d_min())?;
    let l2 = (&factors.apply(p.x()) - &recovered).frobenius_norm();
    Ok((primal, dual, l2))
}
