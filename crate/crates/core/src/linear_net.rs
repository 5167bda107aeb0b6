//! Schatten-regularized deep linear networks: the factored objective, its
//! nuclear-norm form, the balanced factorization and the soft-threshold
//! closed form for the optimal end-to-end product.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};
use crate::matrix::{nuclear_norm, pseudo_inverse, row_space_projector, schatten_pow, svd, Matrix};
use crate::rng;

/// Factors `W₁ … W_H` of a linear network, `Wᵢ` of shape `dᵢ × dᵢ₋₁`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Matrix>", into = "Vec<Matrix>")]
pub struct LinearNetFactors {
    factors: Vec<Matrix>,
    dims: Vec<usize>,
}

impl TryFrom<Vec<Matrix>> for LinearNetFactors {
    type Error = Error;
    fn try_from(factors: Vec<Matrix>) -> Result<Self> {
        LinearNetFactors::new(factors)
    }
}

impl From<LinearNetFactors> for Vec<Matrix> {
    fn from(f: LinearNetFactors) -> Self {
        f.factors
    }
}

impl LinearNetFactors {
    /// Factors listed input side first.
    pub fn new(factors: Vec<Matrix>) -> Result<Self> {
        if factors.len() < 2 {
            return Err(invalid("a linear network needs at least two layers"));
        }
        let mut dims = vec![factors[0].cols()];
        for (i, w) in factors.iter().enumerate() {
            if w.cols() != dims[i] {
                return Err(mismatch(format!(
                    "layer {} has {} columns, expected {}",
                    i + 1,
                    w.cols(),
                    dims[i]
                )));
            }
            dims.push(w.rows());
        }
        Ok(LinearNetFactors { factors, dims })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        LinearNetFactors::new(dims.windows(2).map(|w| Matrix::zeros(w[1], w[0])).collect())
    }

    pub fn depth(&self) -> usize {
        self.factors.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    /// `W_H ⋯ W₁`.
    pub fn product(&self) -> Matrix {
        self.factors[1..].iter().fold(self.factors[0].clone(), |acc, w| w * &acc)
    }

    /// `W_H ⋯ W₁ X`.
    pub fn apply(&self, x: &Matrix) -> Matrix {
        self.factors.iter().fold(x.clone(), |acc, w| w * &acc)
    }
}

/// A regression problem `(X, Y, γ)` with layer widths; caches `Ỹ = Y X† X`.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    x: Matrix,
    y: Matrix,
    gamma: f64,
    dims: Vec<usize>,
    d_min: usize,
    x_pinv: Matrix,
    row_projector: Matrix,
    y_tilde: Matrix,
    sigma_min: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDoc {
    #[serde(rename = "X")]
    pub x: Matrix,
    #[serde(rename = "Y")]
    pub y: Matrix,
    pub gamma: f64,
    pub dims: Vec<usize>,
}

impl ProblemInstance {
    pub fn new(x: Matrix, y: Matrix, gamma: f64, dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 3 {
            return Err(invalid("dims must list d₀, …, d_H with H ≥ 2"));
        }
        if dims.contains(&0) {
            return Err(invalid("layer widths must be positive"));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(invalid(format!("gamma = {gamma} must be finite and non-negative")));
        }
        if x.cols() != y.cols() {
            return Err(mismatch(format!("X has {} samples, Y has {}", x.cols(), y.cols())));
        }
        if x.rows() != dims[0] || y.rows() != dims[dims.len() - 1] {
            return Err(mismatch(format!(
                "dims {dims:?} disagree with X ({} rows) and Y ({} rows)",
                x.rows(),
                y.rows()
            )));
        }
        let d_min = *dims[1..dims.len() - 1].iter().min().expect("H ≥ 2");
        let x_pinv = pseudo_inverse(&x)?;
        let row_projector = row_space_projector(&x)?;
        let y_tilde = &y * &row_projector;
        let sigma_min = svd(&y_tilde)?.sigma_min_nonzero();
        Ok(ProblemInstance { x, y, gamma, dims, d_min, x_pinv, row_projector, y_tilde, sigma_min })
    }

    pub fn from_doc(doc: InstanceDoc) -> Result<Self> {
        ProblemInstance::new(doc.x, doc.y, doc.gamma, doc.dims)
    }

    pub fn to_doc(&self) -> InstanceDoc {
        InstanceDoc { x: self.x.clone(), y: self.y.clone(), gamma: self.gamma, dims: self.dims.clone() }
    }

    /// Same data with a different regularization weight.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(invalid(format!("gamma = {gamma} must be finite and non-negative")));
        }
        Ok(ProblemInstance { gamma, ..self.clone() })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }
    pub fn y(&self) -> &Matrix {
        &self.y
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }
    pub fn depth(&self) -> usize {
        self.dims.len() - 1
    }
    pub fn d_min(&self) -> usize {
        self.d_min
    }
    pub fn n(&self) -> usize {
        self.x.cols()
    }
    pub fn x_pinv(&self) -> &Matrix {
        &self.x_pinv
    }
    /// `X† X`, the orthogonal projector onto `Row(X)`.
    pub fn row_projector(&self) -> &Matrix {
        &self.row_projector
    }
    pub fn y_tilde(&self) -> &Matrix {
        &self.y_tilde
    }
    /// Smallest singular value of `Ỹ` above the rank cutoff.
    pub fn sigma_min(&self) -> Option<f64> {
        self.sigma_min
    }

    pub fn gamma_below_sigma_min(&self) -> bool {
        self.sigma_min.is_some_and(|s| self.gamma < s)
    }

    pub fn dmin_fits(&self) -> bool {
        let d_h = self.dims[self.dims.len() - 1];
        self.d_min <= self.dims[0].min(d_h).min(self.n())
    }

    pub fn well_posed(&self) -> bool {
        self.gamma_below_sigma_min() && self.dmin_fits()
    }

    pub(crate) fn require_gamma_below_sigma_min(&self) -> Result<()> {
        if self.gamma_below_sigma_min() {
            return Ok(());
        }
        Err(Error::Hypothesis(match self.sigma_min {
            Some(s) => format!("gamma = {} is not below sigma_min(Y X†X) = {s}", self.gamma),
            None => "Y X†X is zero, so sigma_min is undefined".into(),
        }))
    }

    pub(crate) fn check_output_shape(&self, z: &Matrix, what: &str) -> Result<()> {
        if z.shape() != self.y.shape() {
            return Err(mismatch(format!(
                "{what} is {}x{}, expected {}x{}",
                z.rows(),
                z.cols(),
                self.y.rows(),
                self.y.cols()
            )));
        }
        Ok(())
    }

    /// Least-squares value of the best rank-`d_min` fit with no penalty.
    pub fn eckart_young_value(&self) -> Result<f64> {
        let s = svd(&self.y_tilde)?;
        let tail: f64 = s.singular_values.iter().skip(self.d_min).map(|x| x * x).sum();
        Ok(0.5 * tail + 0.5 * (&self.y - &self.y_tilde).frobenius_sq())
    }
}

fn check_factors(f: &LinearNetFactors, p: &ProblemInstance) -> Result<()> {
    if f.dims() != p.dims() {
        return Err(mismatch(format!("factor dims {:?} vs instance dims {:?}", f.dims(), p.dims())));
    }
    Ok(())
}

/// `(1/H)[‖W₁X‖_{S_H}^H + Σ_{i≥2} ‖Wᵢ‖_{S_H}^H]`.
pub fn schatten_regularizer(f: &LinearNetFactors, x: &Matrix) -> Result<f64> {
    let h = u32::try_from(f.depth()).map_err(|_| invalid("network too deep"))?;
    let mut total = schatten_pow(&(&f.factors[0] * x), h)?;
    for w in &f.factors[1..] {
        total += schatten_pow(w, h)?;
    }
    Ok(total / f64::from(h))
}

pub fn primal_objective(f: &LinearNetFactors, p: &ProblemInstance) -> Result<f64> {
    check_factors(f, p)?;
    let fit = 0.5 * (&p.y - &f.apply(&p.x)).frobenius_sq();
    if p.gamma == 0.0 {
        return Ok(fit);
    }
    Ok(fit + p.gamma * schatten_regularizer(f, &p.x)?)
}

/// `½‖Y − Z‖² + γ‖Z‖_*`.
pub fn nuclear_objective(z: &Matrix, p: &ProblemInstance) -> Result<f64> {
    p.check_output_shape(z, "Z")?;
    Ok(0.5 * (&p.y - z).frobenius_sq() + p.gamma * nuclear_norm(z)?)
}

/// Factors whose product is `Z` and whose Schatten regularizer equals
/// `‖Z‖_*`: every layer carries `Σ^{1/H}`.
pub fn balanced_factorization(z: &Matrix, p: &ProblemInstance) -> Result<LinearNetFactors> {
    p.check_output_shape(z, "Z")?;
    let scale = 1.0 + z.frobenius_norm();
    let leak = (z - &(z * &p.row_projector)).frobenius_norm();
    if leak > 1e-8 * scale {
        return Err(Error::Infeasible(format!(
            "rows of Z leave Row(X) (residual {leak:e})"
        )));
    }
    let s = svd(z)?;
    let r = s.rank();
    if r > p.d_min {
        return Err(Error::Infeasible(format!("rank(Z) = {r} exceeds d_min = {}", p.d_min)));
    }
    let h = p.depth();
    let root: Vec<f64> = s.singular_values[..r].iter().map(|&x| x.powf(1.0 / h as f64)).collect();
    let dims = &p.dims;

    let mut factors = Vec::with_capacity(h);
    // W₁ = [Σ^{1/H} Vᵀ; 0] X†
    let mut top = Matrix::zeros(dims[1], p.n());
    for (k, &rk) in root.iter().enumerate().take(r) {
        for j in 0..p.n() {
            top.set(k, j, rk * s.v.get(j, k));
        }
    }
    factors.push(&top * &p.x_pinv);
    for i in 2..h {
        factors.push(Matrix::from_diag(dims[i], dims[i - 1], &root));
    }
    let mut last = Matrix::zeros(dims[h], dims[h - 1]);
    for (k, &rk) in root.iter().enumerate().take(r) {
        for i in 0..dims[h] {
            last.set(i, k, rk * s.u.get(i, k));
        }
    }
    factors.push(last);
    LinearNetFactors::new(factors)
}

/// Optimal end-to-end product: `Σ_{i≤r̄} (σᵢ − γ)₊ uᵢ vᵢᵀ` over the SVD of `Ỹ`,
/// with `r̄ = min(rank Ỹ, d_min)`.
pub fn closed_form_global_product(p: &ProblemInstance) -> Result<Matrix> {
    p.require_gamma_below_sigma_min()?;
    let s = svd(&p.y_tilde)?;
    let r_bar = s.rank().min(p.d_min);
    Ok(s.reconstruct_with(r_bar, |x| (x - p.gamma).max(0.0)))
}

/// Result of one gradient-descent run; `factors` is the best iterate seen.
#[derive(Clone, Debug)]
pub struct LocalSearchOutcome {
    pub factors: LinearNetFactors,
    pub objective: f64,
    pub initial_objective: f64,
    pub steps: usize,
    pub diverged: bool,
}

/// Gradient of the primal objective with respect to every factor.
pub fn primal_gradient(f: &LinearNetFactors, p: &ProblemInstance) -> Result<Vec<Matrix>> {
    check_factors(f, p)?;
    let h = f.depth();
    // forward[i] = Wᵢ ⋯ W₁ X, forward[0] = X
    let mut forward = Vec::with_capacity(h + 1);
    forward.push(p.x.clone());
    for w in &f.factors {
        let next = w * forward.last().expect("non-empty");
        forward.push(next);
    }
    let residual = &forward[h] - &p.y;
    // back = (W_H ⋯ W_{i+1})ᵀ R, built from the output side.
    let mut grads = vec![Matrix::zeros(0, 0); h];
    let mut back = residual;
    for i in (0..h).rev() {
        let mut g = &back * &forward[i].transpose();
        if p.gamma > 0.0 {
            if i == 0 {
                let shrink = schatten_direction(&forward[1], h)?;
                g.axpy(p.gamma, &(&shrink * &p.x.transpose()));
            } else {
                g.axpy(p.gamma, &schatten_direction(&f.factors[i], h)?);
            }
        }
        grads[i] = g;
        if i > 0 {
            back = &f.factors[i].transpose() * &back;
        }
    }
    Ok(grads)
}

/// `U diag(σ^{H−1}) Vᵀ`, the gradient of `(1/H)‖M‖_{S_H}^H`.
fn schatten_direction(m: &Matrix, h: usize) -> Result<Matrix> {
    if h == 2 {
        return Ok(m.clone());
    }
    let s = svd(m)?;
    let e = i32::try_from(h - 1).map_err(|_| invalid("network too deep"))?;
    Ok(s.reconstruct_with(s.singular_values.len(), |x| x.powi(e)))
}

/// Fixed-step gradient descent from `init`. A zero learning rate returns the
/// initial point untouched.
pub fn primal_local_search(
    init: &LinearNetFactors,
    p: &ProblemInstance,
    steps: usize,
    lr: f64,
) -> Result<LocalSearchOutcome> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(invalid(format!("learning rate {lr} must be finite and non-negative")));
    }
    let initial = primal_objective(init, p)?;
    let mut best = LocalSearchOutcome {
        factors: init.clone(),
        objective: initial,
        initial_objective: initial,
        steps: 0,
        diverged: !initial.is_finite(),
    };
    if lr == 0.0 || best.diverged {
        return Ok(best);
    }
    let blowup = 1e12 * (1.0 + initial.abs());
    let mut cur = init.clone();
    for step in 1..=steps {
        let grads = primal_gradient(&cur, p)?;
        let mut next = cur.factors.clone();
        for (w, g) in next.iter_mut().zip(&grads) {
            w.axpy(-lr, g);
        }
        if next.iter().any(|w| !w.is_finite()) {
            best.diverged = true;
            best.steps = step;
            break;
        }
        cur = LinearNetFactors { factors: next, dims: cur.dims };
        let obj = primal_objective(&cur, p)?;
        best.steps = step;
        if !obj.is_finite() || obj > blowup {
            best.diverged = true;
            break;
        }
        if obj < best.objective {
            best.objective = obj;
            best.factors = cur.clone();
        }
    }
    Ok(best)
}

/// `X = I_n`, `Y` with i.i.d. standard normal entries, every hidden width
/// `d_min`, `γ = 0`.
pub fn gaussian_identity_instance(n: usize, d_min: usize, depth: usize, seed: u64) -> Result<ProblemInstance> {
    if depth < 2 {
        return Err(invalid(format!("depth = {depth} must be at least 2")));
    }
    let mut r = rng::seeded(seed);
    let y = Matrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut r));
    let mut dims = vec![n];
    dims.extend(std::iter::repeat_n(d_min, depth - 1));
    dims.push(n);
    ProblemInstance::new(Matrix::identity(n), y, 0.0, dims)
}

/// Factors with i.i.d. entries uniform on `[−s, s]`, `s = 1/√(max width)`.
pub fn random_init<R: Rng>(dims: &[usize], rng: &mut R) -> Result<LinearNetFactors> {
    let widest = *dims.iter().max().ok_or_else(|| invalid("empty dims"))?;
    let s = 1.0 / (widest as f64).sqrt();
    LinearNetFactors::new(
        dims.windows(2)
            .map(|w| Matrix::from_fn(w[1], w[0], |_, _| rng.random_range(-s..=s)))
            .collect(),
    )
}

/// Best of `restarts` independent descents; ties go to the lowest restart.
pub fn multi_start_local_search(
    p: &ProblemInstance,
    restarts: usize,
    seed: u64,
    steps: usize,
    lr: f64,
) -> Result<LocalSearchOutcome> {
    if restarts == 0 {
        return Err(invalid("at least one restart is required"));
    }
    let runs: Vec<LocalSearchOutcome> = (0..restarts)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(seed, k as u64);
            let init = random_init(&p.dims, &mut rng)?;
            primal_local_search(&init, p, steps, lr)
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (k, run) in runs.iter().enumerate() {
        if run.objective < runs[best].objective {
            best = k;
        }
    }
    Ok(runs.into_iter().nth(best).expect("restarts > 0"))
}
