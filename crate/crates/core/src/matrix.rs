//! Dense real matrices and the SVD-based toolkit used throughout the crate.
//!
//! Storage is row-major. The SVD is a one-sided Jacobi iteration: slow for
//! large inputs but accurate on clustered singular values and fully
//! deterministic, which the certificate checks downstream rely on.

use std::fmt;
use std::io::{Read, Write};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};

/// Relative cutoff below which a singular value counts as zero.
pub const RANK_RTOL: f64 = 1e-10;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixDoc", into = "MatrixDoc")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MatrixDoc {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl TryFrom<MatrixDoc> for Matrix {
    type Error = Error;
    fn try_from(doc: MatrixDoc) -> Result<Self> {
        Matrix::from_row_major(doc.rows, doc.cols, doc.entries)
    }
}

impl From<Matrix> for MatrixDoc {
    fn from(m: Matrix) -> Self {
        MatrixDoc { rows: m.rows, cols: m.cols, entries: m.data }
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting wrong lengths and
    /// non-finite values.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(mismatch(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite entry at position {pos}")));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(mismatch("ragged rows"));
        }
        Matrix::from_row_major(r, c, rows.concat())
    }

    /// `rows x cols` matrix with `diag` on its main diagonal.
    pub fn from_diag(rows: usize, cols: usize, diag: &[f64]) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for (i, &d) in diag.iter().enumerate().take(rows.min(cols)) {
            m.data[i * cols + i] = d;
        }
        m
    }

    pub fn diag(diag: &[f64]) -> Self {
        Matrix::from_diag(diag.len(), diag.len(), diag)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Keeps the first `k` columns.
    pub fn leading_columns(&self, k: usize) -> Matrix {
        let k = k.min(self.cols);
        Matrix::from_fn(self.rows, k, |i, j| self.get(i, j))
    }

    /// Copy of the block starting at `(r0, c0)` with the given shape.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |i, j| self.get(r0 + i, c0 + j))
    }

    /// Writes `src` into `self` with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, src: &Matrix) {
        for i in 0..src.rows {
            for j in 0..src.cols {
                self.set(r0 + i, c0 + j, src.get(i, j));
            }
        }
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Matrix) {
        assert_eq!(self.shape(), other.shape(), "axpy shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(mismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(self.mul_unchecked(other))
    }

    fn mul_unchecked(&self, other: &Matrix) -> Matrix {
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let out_row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * m..(p + 1) * m];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Matrix { rows: n, cols: m, data: out }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    /// Frobenius inner product `tr(selfᵀ other)`.
    pub fn dot(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "dot shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn spectral_norm(&self) -> Result<f64> {
        Ok(svd(self)?.singular_values.first().copied().unwrap_or(0.0))
    }

    /// One row per line, comma separated, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Matrix> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(r);
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Matrix::from_rows(&rows)
    }
}

impl Add for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.shape(), rhs.shape(), "add shape mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.shape(), rhs.shape(), "sub shape mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &Matrix {
    type Output = Matrix;
    fn neg(self) -> Matrix {
        self.scale(-1.0)
    }
}

/// Panics on incompatible shapes; use [`Matrix::matmul`] for a checked product.
impl Mul for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        self.mul_unchecked(rhs)
    }
}

/// Thin SVD `M = U diag(σ) Vᵀ` with `k = min(rows, cols)` triples.
#[derive(Clone, Debug, PartialEq)]
pub struct SvdResult {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

impl SvdResult {
    /// Number of singular values above `RANK_RTOL * σ₁`.
    pub fn rank(&self) -> usize {
        let Some(&s1) = self.singular_values.first() else { return 0 };
        if s1 <= 0.0 {
            return 0;
        }
        self.singular_values.iter().take_while(|&&s| s > RANK_RTOL * s1).count()
    }

    /// Smallest singular value above the rank cutoff.
    pub fn sigma_min_nonzero(&self) -> Option<f64> {
        match self.rank() {
            0 => None,
            r => Some(self.singular_values[r - 1]),
        }
    }

    /// Rebuilds `Σᵢ<r g(σᵢ) uᵢ vᵢᵀ`.
    pub fn reconstruct_with(&self, r: usize, g: impl Fn(f64) -> f64) -> Matrix {
        let (m, n) = (self.u.rows(), self.v.rows());
        let mut out = Matrix::zeros(m, n);
        for k in 0..r.min(self.singular_values.len()) {
            let s = g(self.singular_values[k]);
            if s == 0.0 {
                continue;
            }
            for i in 0..m {
                let a = s * self.u.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * self.v.get(j, k);
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> Matrix {
        self.reconstruct_with(self.singular_values.len(), |s| s)
    }
}

/// Deterministic thin SVD with singular values sorted non-increasingly.
///
/// Each column of `U` has its largest-magnitude entry non-negative (lowest
/// index on ties); the matching column of `V` is flipped along with it.
pub fn svd(m: &Matrix) -> Result<SvdResult> {
    if !m.is_finite() {
        return Err(invalid("svd of a non-finite matrix"));
    }
    let k = m.rows.min(m.cols);
    if k == 0 {
        return Ok(SvdResult {
            u: Matrix::zeros(m.rows, 0),
            singular_values: Vec::new(),
            v: Matrix::zeros(m.cols, 0),
        });
    }
    // Scale by a power of two so squared column norms stay clear of underflow
    // and overflow; exact, so only the singular values need scaling back.
    let amax = m.data.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let shift = if amax > 0.0 { amax.log2().round() as i32 } else { 0 };
    let down = 2f64.powi(-shift);
    let up = 2f64.powi(shift);
    let scaled = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|x| x * down).collect() };
    if m.rows >= m.cols {
        let cols = (0..m.cols).map(|j| scaled(m.column(j))).collect();
        let (u, s, v) = jacobi_tall(cols, m.rows)?;
        Ok(finish(u, s.into_iter().map(|x| x * up).collect(), v, m.rows, m.cols))
    } else {
        let cols = (0..m.rows).map(|i| scaled(m.row(i).to_vec())).collect();
        let (u, s, v) = jacobi_tall(cols, m.cols)?;
        Ok(finish(v, s.into_iter().map(|x| x * up).collect(), u, m.rows, m.cols))
    }
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// One-sided Jacobi on the columns of a tall matrix (`len >= cols.len()`).
/// Returns unit left vectors, singular values and right vectors, unsorted.
#[allow(clippy::type_complexity)]
fn jacobi_tall(mut a: Vec<Vec<f64>>, len: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let tol = f64::EPSILON * (len as f64).sqrt();
    // Rotations preserve the Frobenius norm; columns below ε·‖A‖_F are noise.
    let fro2: f64 = a.iter().flat_map(|c| c[..len].iter()).map(|x| x * x).sum();
    let negligible = f64::EPSILON * f64::EPSILON * fro2;
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (ap, aq) = (&a[p], &a[q]);
                    let mut al = 0.0;
                    let mut be = 0.0;
                    let mut ga = 0.0;
                    for i in 0..len {
                        al += ap[i] * ap[i];
                        be += aq[i] * aq[i];
                        ga += ap[i] * aq[i];
                    }
                    (al, be, ga)
                };
                if gamma == 0.0 || alpha.min(beta) <= negligible || gamma.abs() <= tol * alpha.sqrt() * beta.sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut a, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi SVD did not converge in {JACOBI_MAX_SWEEPS} sweeps"
        )));
    }

    let sigma: Vec<f64> = a.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let s_max = sigma.iter().fold(0.0f64, |m, &x| m.max(x));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| sigma[y].total_cmp(&sigma[x]).then(x.cmp(&y)));

    // Normalize in decreasing-σ order and re-orthogonalize: columns with tiny
    // σ carry absolute rounding of order ε·σ_max and would otherwise drift.
    let mut u: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut done: Vec<usize> = Vec::with_capacity(n);
    for &j in &order {
        let mut col = if sigma[j] > 0.0 && sigma[j] > 1e-300 * s_max.max(1.0) {
            a[j].iter().map(|x| x / sigma[j]).collect()
        } else {
            vec![0.0; len]
        };
        if !orthonormalize_against(&mut col, &done, &u) {
            col = complete_basis(&done, &u, len);
        }
        u[j] = col;
        done.push(j);
    }
    Ok((u, sigma, v))
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Two passes of Gram–Schmidt against `basis`; false if nothing survives.
fn orthonormalize_against(col: &mut [f64], done: &[usize], basis: &[Vec<f64>]) -> bool {
    let start = col.iter().map(|x| x * x).sum::<f64>().sqrt();
    if start == 0.0 {
        return false;
    }
    for _ in 0..2 {
        for &j in done {
            let b = &basis[j];
            let d: f64 = col.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in col.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
    }
    let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= 1e-8 * start {
        return false;
    }
    col.iter_mut().for_each(|x| *x /= norm);
    true
}

fn complete_basis(done: &[usize], basis: &[Vec<f64>], len: usize) -> Vec<f64> {
    for e in 0..len {
        let mut col = vec![0.0; len];
        col[e] = 1.0;
        if orthonormalize_against(&mut col, done, basis) {
            return col;
        }
    }
    unreachable!("more singular vectors requested than the ambient dimension")
}

fn finish(u: Vec<Vec<f64>>, sigma: Vec<f64>, v: Vec<Vec<f64>>, rows: usize, cols: usize) -> SvdResult {
    let k = sigma.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));
    let mut um = Matrix::zeros(rows, k);
    let mut vm = Matrix::zeros(cols, k);
    let mut singular_values = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let col = &u[src];
        let mut best = 0;
        for i in 1..rows {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        let sign = if col[best] < 0.0 { -1.0 } else { 1.0 };
        for (i, &c) in col.iter().enumerate().take(rows) {
            um.set(i, dst, sign * c);
        }
        for (j, &x) in v[src].iter().enumerate().take(cols) {
            vm.set(j, dst, sign * x);
        }
        singular_values.push(sigma[src]);
    }
    SvdResult { u: um, singular_values, v: vm }
}

/// Best rank-`r` approximation `U_{:,1:r} Σ_{1:r} V_{:,1:r}ᵀ`.
pub fn truncated_svd(m: &Matrix, r: usize) -> Result<Matrix> {
    let k = m.rows.min(m.cols);
    if r > k {
        return Err(invalid(format!("truncation rank {r} exceeds min dimension {k}")));
    }
    if r == 0 {
        return Ok(Matrix::zeros(m.rows, m.cols));
    }
    Ok(svd(m)?.reconstruct_with(r, |s| s))
}

pub fn pseudo_inverse(m: &Matrix) -> Result<Matrix> {
    let s = svd(m)?;
    let r = s.rank();
    let mut out = Matrix::zeros(m.cols, m.rows);
    for k in 0..r {
        let inv = 1.0 / s.singular_values[k];
        for i in 0..m.cols {
            let a = inv * s.v.get(i, k);
            for j in 0..m.rows {
                out.data[i * m.rows + j] += a * s.u.get(j, k);
            }
        }
    }
    Ok(out)
}

/// `Σ σᵢ^H`, the H-th power of the Schatten-H norm.
pub fn schatten_pow(m: &Matrix, h: u32) -> Result<f64> {
    if h == 0 {
        return Err(invalid("Schatten order must be at least 1"));
    }
    let exp = i32::try_from(h).map_err(|_| invalid("Schatten order too large"))?;
    Ok(svd(m)?.singular_values.iter().map(|s| s.powi(exp)).sum())
}

pub fn schatten_norm(m: &Matrix, h: u32) -> Result<f64> {
    let p = schatten_pow(m, h)?;
    Ok(match h {
        1 => p,
        2 => p.sqrt(),
        _ => p.powf(1.0 / f64::from(h)),
    })
}

pub fn nuclear_norm(m: &Matrix) -> Result<f64> {
    schatten_pow(m, 1)
}

/// Sum of the squares of the `d_min` largest singular values.
pub fn dmin_norm_sq(m: &Matrix, d_min: usize) -> Result<f64> {
    let k = m.rows.min(m.cols);
    if d_min == 0 || d_min > k {
        return Err(invalid(format!("d_min = {d_min} outside 1..={k}")));
    }
    Ok(svd(m)?.singular_values[..d_min].iter().map(|s| s * s).sum())
}

/// Orthogonal projector onto the row space of `x`, as an `n x n` matrix.
pub fn row_space_projector(x: &Matrix) -> Result<Matrix> {
    let s = svd(x)?;
    let r = s.rank();
    let vr = s.v.leading_columns(r);
    Ok(&vr * &vr.transpose())
}

/// `M X† X`: the component of `M`'s rows lying in `Row(X)`.
pub fn row_space_project(m: &Matrix, x: &Matrix) -> Result<Matrix> {
    if m.cols != x.cols {
        return Err(mismatch(format!(
            "matrix has {} columns but X has {}",
            m.cols, x.cols
        )));
    }
    Ok(m * &row_space_projector(x)?)
}

/// Frobenius-nearest point of `{‖Λ‖₂ ≤ γ}`: singular values clipped at γ.
pub fn spectral_ball_project(m: &Matrix, gamma: f64) -> Result<Matrix> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(invalid("spectral ball radius must be non-negative"));
    }
    let s = svd(m)?;
    if s.singular_values.first().is_none_or(|&s1| s1 <= gamma) {
        return Ok(m.clone());
    }
    // Subtract only the excess so components below the cutoff are untouched.
    let excess = s.reconstruct_with(s.singular_values.len(), |x| (x - gamma).max(0.0));
    Ok(m - &excess)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn orthonormality_error(q: &Matrix) -> f64 {
        let g = &q.transpose() * q;
        (&g - &Matrix::identity(q.cols())).max_abs()
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(Matrix::from_row_major(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_row_major(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn svd_identity_and_diagonal() {
        let s = svd(&Matrix::identity(3)).unwrap();
        assert_eq!(s.singular_values, vec![1.0, 1.0, 1.0]);
        assert!((&s.reconstruct() - &Matrix::identity(3)).max_abs() < 1e-14);

        let s = svd(&Matrix::diag(&[1.0, 3.0])).unwrap();
        assert!((s.singular_values[0] - 3.0).abs() < 1e-14);
        assert!((s.singular_values[1] - 1.0).abs() < 1e-14);
        // Sign convention: dominant entry of each U column non-negative.
        assert!(s.u.get(1, 0) > 0.0 && s.u.get(0, 1) > 0.0);
    }

    #[test]
    fn svd_reconstructs_random_input() {
        let m = random(5, 4, 1);
        let s = svd(&m).unwrap();
        let err = (&s.reconstruct() - &m).frobenius_norm();
        assert!(err <= 1e-10 * s.singular_values[0], "err {err}");
        assert!(orthonormality_error(&s.u) < 1e-10);
        assert!(orthonormality_error(&s.v) < 1e-10);
        assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_sign_convention_holds_on_wide_and_tall() {
        for (r, c, seed) in [(3, 7, 2), (7, 3, 3), (6, 6, 4)] {
            let s = svd(&random(r, c, seed)).unwrap();
            for k in 0..s.u.cols() {
                let col = s.u.column(k);
                let mut best = 0;
                for i in 1..col.len() {
                    if col[i].abs() > col[best].abs() {
                        best = i;
                    }
                }
                assert!(col[best] >= 0.0);
            }
        }
    }

    #[test]
    fn svd_handles_tied_values() {
        let q = Matrix::from_rows(&[
            vec![-0.6222216750719824, 1.0507791469307572, 0.19314688621361908],
            vec![-0.7510653146537285, 0.06771305719819076, -1.1616109915076425],
            vec![0.8886632644617682, 0.9599798107025168, -0.3308262958608383],
        ])
        .unwrap();
        let s = svd(&q).unwrap();
        assert!((&s.reconstruct() - &q).max_abs() < 1e-14);
        assert!((s.singular_values[0] - s.singular_values[1]).abs() < 1e-14);
        assert!(orthonormality_error(&s.u) < 1e-14);
    }

    #[test]
    fn svd_of_rank_deficient_keeps_orthonormal_factors() {
        let a = random(6, 2, 12);
        let b = random(2, 5, 13);
        let m = &a * &b;
        let s = svd(&m).unwrap();
        assert_eq!(s.rank(), 2);
        assert!(orthonormality_error(&s.u) < 1e-12);
        assert!(orthonormality_error(&s.v) < 1e-12);
        assert!((&s.reconstruct() - &m).max_abs() < 1e-13);
    }

    #[test]
    fn svd_of_extreme_magnitudes() {
        let base = &random(20, 1, 14) * &random(1, 5, 15);
        for c in [1e-140, 1e-300, 1e150] {
            let m = base.scale(c);
            let s = svd(&m).unwrap();
            assert_eq!(s.rank(), 1, "scale {c}");
            assert!(orthonormality_error(&s.v) < 1e-12);
            let err = (&s.reconstruct() - &m).max_abs() / m.max_abs();
            assert!(err < 1e-13, "scale {c}: {err}");
        }
    }

    #[test]
    fn svd_of_empty_and_zero() {
        let s = svd(&Matrix::zeros(3, 2)).unwrap();
        assert_eq!(s.rank(), 0);
        assert!(s.sigma_min_nonzero().is_none());
        assert!(svd(&Matrix::zeros(0, 4)).unwrap().singular_values.is_empty());
    }

    #[test]
    fn truncation_examples() {
        let t = truncated_svd(&Matrix::diag(&[3.0, 1.0]), 1).unwrap();
        assert!((&t - &Matrix::diag(&[3.0, 0.0])).max_abs() < 1e-14);

        let m = random(4, 6, 5);
        assert!((&truncated_svd(&m, 4).unwrap() - &m).max_abs() < 1e-10);
        assert_eq!(truncated_svd(&m, 0).unwrap(), Matrix::zeros(4, 6));
        assert!(truncated_svd(&m, 5).is_err());
    }

    #[test]
    fn truncation_with_tied_values_uses_norm_identities() {
        let m = Matrix::diag(&[2.0, 2.0]);
        let t = truncated_svd(&m, 1).unwrap();
        let s = svd(&t).unwrap();
        assert!((s.singular_values[0] - 2.0).abs() < 1e-12);
        assert_eq!(s.rank(), 1);
        // Eckart–Young error for a rank-1 approximation of 2·I₂ is 2.
        // Brute force over unit vectors confirms nothing beats it.
        let mut best = f64::INFINITY;
        for step in 0..=3600 {
            let th = step as f64 * std::f64::consts::PI / 3600.0;
            let u = Matrix::from_rows(&[vec![th.cos()], vec![th.sin()]]).unwrap();
            let approx = (&u * &u.transpose()).scale(2.0);
            best = best.min((&m - &approx).frobenius_norm());
        }
        assert!(((&m - &t).frobenius_norm() - best).abs() < 1e-9);
        assert!((best - 2.0).abs() < 1e-9);
    }

    #[test]
    fn pseudo_inverse_examples() {
        let p = pseudo_inverse(&Matrix::diag(&[2.0, 0.0])).unwrap();
        assert!((&p - &Matrix::diag(&[0.5, 0.0])).max_abs() < 1e-15);
        assert!((&pseudo_inverse(&Matrix::identity(3)).unwrap() - &Matrix::identity(3)).max_abs() < 1e-15);

        let m = random(3, 5, 6);
        let p = pseudo_inverse(&m).unwrap();
        let scale = m.frobenius_norm().max(1.0);
        assert!((&(&(&m * &p) * &m) - &m).max_abs() <= 1e-9 * scale);
        assert!((&(&(&p * &m) * &p) - &p).max_abs() <= 1e-9 * p.frobenius_norm().max(1.0));
        let mp = &m * &p;
        assert!((&mp - &mp.transpose()).max_abs() <= 1e-9);
        let pm = &p * &m;
        assert!((&pm - &pm.transpose()).max_abs() <= 1e-9);
    }

    #[test]
    fn schatten_examples() {
        assert!((schatten_norm(&Matrix::diag(&[3.0, 1.0]), 1).unwrap() - 4.0).abs() < 1e-14);
        assert!((schatten_norm(&Matrix::diag(&[3.0, 4.0]), 2).unwrap() - 5.0).abs() < 1e-14);
        assert!(schatten_norm(&Matrix::identity(2), 0).is_err());
        let m = random(5, 3, 7);
        let entrywise = m.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((schatten_norm(&m, 2).unwrap() - entrywise).abs() < 1e-10);
    }

    #[test]
    fn dmin_norm_examples() {
        let d = Matrix::diag(&[3.0, 2.0, 1.0]);
        assert!((dmin_norm_sq(&d, 2).unwrap() - 13.0).abs() < 1e-13);
        assert!((dmin_norm_sq(&d, 3).unwrap() - d.frobenius_sq()).abs() < 1e-13);
        assert!(dmin_norm_sq(&d, 0).is_err());
        assert!(dmin_norm_sq(&d, 4).is_err());
    }

    #[test]
    fn dmin_norm_matches_symmetric_eigenvalues() {
        let m = random(6, 6, 8);
        let g = &m * &m.transpose();
        let gram = nalgebra::DMatrix::from_row_slice(6, 6, g.as_slice());
        let mut eig: Vec<f64> = gram.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        let oracle: f64 = eig[..3].iter().sum();
        assert!((dmin_norm_sq(&m, 3).unwrap() - oracle).abs() < 1e-10 * oracle.max(1.0));
    }

    #[test]
    fn row_space_examples() {
        let m = random(3, 4, 9);
        assert!((&row_space_project(&m, &Matrix::identity(4)).unwrap() - &m).max_abs() < 1e-14);

        // X spans only e1, e2 of R^4, so columns 2 and 3 of M are annihilated.
        let x = Matrix::from_diag(2, 4, &[1.0, 2.0]);
        let p = row_space_project(&m, &x).unwrap();
        for i in 0..3 {
            assert!(p.get(i, 2).abs() < 1e-15 && p.get(i, 3).abs() < 1e-15);
            assert!((p.get(i, 0) - m.get(i, 0)).abs() < 1e-14);
        }
        assert!(row_space_project(&m, &Matrix::identity(3)).is_err());
    }

    #[test]
    fn spectral_ball_examples() {
        let m = Matrix::diag(&[0.5, -0.25]);
        assert_eq!(spectral_ball_project(&m, 1.0).unwrap(), m);
        let p = spectral_ball_project(&Matrix::diag(&[5.0, 1.0]), 2.0).unwrap();
        assert!((&p - &Matrix::diag(&[2.0, 1.0])).max_abs() < 1e-14);
        assert!(spectral_ball_project(&m, -1.0).is_err());
    }

    #[test]
    fn spectral_ball_beats_scaled_candidates() {
        let m = random(4, 5, 10);
        let gamma = 0.4;
        let p = spectral_ball_project(&m, gamma).unwrap();
        assert!(p.spectral_norm().unwrap() <= gamma + 1e-10);
        let d = (&m - &p).frobenius_norm();
        let s = svd(&m).unwrap();
        // Candidates: shrink singular values by a common factor or clip at varied levels.
        for k in 1..=200 {
            let c = gamma * f64::from(k) / 200.0;
            let clipped = s.reconstruct_with(4, |x| x.min(c));
            assert!((&m - &clipped).frobenius_norm() >= d - 1e-12);
            let t = gamma / s.singular_values[0] * f64::from(k) / 200.0;
            assert!((&m - &m.scale(t)).frobenius_norm() >= d - 1e-12);
        }
    }

    #[test]
    fn io_round_trips() {
        let m = random(3, 2, 11);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(Matrix::read_csv(buf.as_slice()).unwrap(), m);
        let js = serde_json::to_string(&m).unwrap();
        assert!(js.contains("\"entries\""));
        assert_eq!(serde_json::from_str::<Matrix>(&js).unwrap(), m);
        assert!(serde_json::from_str::<Matrix>(r#"{"rows":2,"cols":2,"entries":[1]}"#).is_err());
    }

    fn arb_matrix() -> impl Strategy<Value = Matrix> {
        (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
            prop::collection::vec(-3.0f64..3.0, r * c)
                .prop_map(move |d| Matrix::from_row_major(r, c, d).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn eckart_young_consistency(m in arb_matrix(), r_frac in 0.0f64..1.0) {
            let k = m.rows().min(m.cols());
            let r = ((k as f64) * r_frac) as usize;
            let s = svd(&m).unwrap();
            let tail: f64 = s.singular_values[r..].iter().map(|x| x * x).sum();
            let err = (&m - &truncated_svd(&m, r).unwrap()).frobenius_sq();
            prop_assert!((err - tail).abs() <= 1e-9 * m.frobenius_sq().max(1e-300) + 1e-24);
        }

        #[test]
        fn schatten_ordering(m in arb_matrix()) {
            let s1 = schatten_norm(&m, 1).unwrap();
            let s2 = schatten_norm(&m, 2).unwrap();
            let op = m.spectral_norm().unwrap();
            prop_assert!(s1 >= s2 - 1e-12 && s2 >= op - 1e-12);
        }

        #[test]
        fn projections_are_idempotent(m in arb_matrix(), gamma in 0.0f64..2.0, seed in 0u64..1000) {
            let x = random(2, m.cols(), seed);
            let p = row_space_project(&m, &x).unwrap();
            let pp = row_space_project(&p, &x).unwrap();
            prop_assert!((&p - &pp).max_abs() <= 1e-10 * (1.0 + p.max_abs()));

            let q = spectral_ball_project(&m, gamma).unwrap();
            let qq = spectral_ball_project(&q, gamma).unwrap();
            prop_assert!((&q - &qq).max_abs() <= 1e-10 * (1.0 + q.max_abs()));

            let pq = spectral_ball_project(&p, gamma).unwrap();
            let back = row_space_project(&pq, &x).unwrap();
            prop_assert!((&pq - &back).max_abs() <= 1e-10 * (1.0 + pq.max_abs()));
        }

        #[test]
        fn svd_is_deterministic(m in arb_matrix()) {
            prop_assert_eq!(svd(&m).unwrap(), svd(&m).unwrap());
        }
    }
}
