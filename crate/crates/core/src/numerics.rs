//! Dense linear-algebra primitives shared by the rest of the crate.
//!
//! Rank decisions threshold singular values at
//! `sigma_max * max(nrows, ncols) * f64::EPSILON * rank_tol_factor`.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances used to turn exact algebraic statements into floating-point checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    /// Multiplier on `sigma_max * max_dim * eps` for rank decisions.
    pub rank_tol_factor: f64,
    /// Absolute residual below which an equation counts as satisfied.
    pub residual_tol: f64,
    /// Stability requires a spectral radius of at most `1 - schur_margin`.
    pub schur_margin: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            rank_tol_factor: 1.0,
            residual_tol: 1e-9,
            schur_margin: 1e-9,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.rank_tol_factor) || self.rank_tol_factor < 1.0 {
            return Err(Error::invalid("rank_tol_factor must be finite and >= 1"));
        }
        if !positive(self.residual_tol) || !positive(self.schur_margin) {
            return Err(Error::invalid(
                "residual_tol and schur_margin must be finite and > 0",
            ));
        }
        Ok(())
    }

    /// Singular-value cutoff for a matrix of the given shape and largest singular value.
    pub fn rank_threshold(&self, nrows: usize, ncols: usize, sigma_max: f64) -> f64 {
        sigma_max * nrows.max(ncols) as f64 * f64::EPSILON * self.rank_tol_factor
    }
}

/// Minimum-norm least-squares solution together with the attained residual.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    pub x: DVector<f64>,
    pub residual_norm: f64,
}

pub(crate) fn ensure_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} has non-finite entries")))
    }
}

/// `m = u diag(s) v^T`. `u` is thin; `v` is square when `full_v` is set, thin otherwise.
struct Svd {
    u: DMatrix<f64>,
    s: Vec<f64>,
    v: DMatrix<f64>,
}

impl Svd {
    fn max(&self) -> f64 {
        self.s.iter().copied().fold(0.0, f64::max)
    }
}

fn svd(m: &DMatrix<f64>, full_v: bool) -> Result<Svd> {
    let (r, c) = m.shape();
    let fm = faer::Mat::<f64>::from_fn(r, c, |i, j| m[(i, j)]);
    let to_na = |x: faer::MatRef<'_, f64>| DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)]);
    let k = r.min(c);
    if full_v && r < c {
        let dec = fm.svd().map_err(|_| Error::Numerical("SVD did not converge"))?;
        let s = dec.S().column_vector();
        Ok(Svd {
            u: to_na(dec.U()),
            s: (0..k).map(|i| s[i]).collect(),
            v: to_na(dec.V()),
        })
    } else {
        let dec = fm.thin_svd().map_err(|_| Error::Numerical("SVD did not converge"))?;
        let s = dec.S().column_vector();
        Ok(Svd {
            u: to_na(dec.U()),
            s: (0..k).map(|i| s[i]).collect(),
            v: to_na(dec.V()),
        })
    }
}

/// Numerical rank under the configured threshold.
pub fn rank(m: &DMatrix<f64>, tol: &ToleranceConfig) -> Result<usize> {
    ensure_finite(m, "matrix")?;
    if m.is_empty() {
        return Ok(0);
    }
    let dec = svd(m, false)?;
    let cut = tol.rank_threshold(m.nrows(), m.ncols(), dec.max());
    Ok(dec.s.iter().filter(|&&s| s > cut).count())
}

/// Moore-Penrose pseudoinverse via a thresholded SVD.
pub fn pseudoinverse(m: &DMatrix<f64>, tol: &ToleranceConfig) -> Result<DMatrix<f64>> {
    ensure_finite(m, "matrix")?;
    let (r, c) = m.shape();
    if m.is_empty() {
        return Ok(DMatrix::zeros(c, r));
    }
    let dec = svd(m, false)?;
    let cut = tol.rank_threshold(r, c, dec.max());
    let mut out = DMatrix::zeros(c, r);
    for (i, &s) in dec.s.iter().enumerate() {
        if s > cut {
            out += (dec.v.column(i) / s) * dec.u.column(i).transpose();
        }
    }
    Ok(out)
}

/// Orthonormal basis of the right kernel of `m`, one column per kernel direction.
pub fn nullspace_basis(m: &DMatrix<f64>, tol: &ToleranceConfig) -> Result<DMatrix<f64>> {
    ensure_finite(m, "matrix")?;
    let (r, c) = m.shape();
    if c == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if r == 0 {
        return Ok(DMatrix::identity(c, c));
    }
    let dec = svd(m, true)?;
    let cut = tol.rank_threshold(r, c, dec.max());
    let kernel: Vec<usize> = (0..c).filter(|&i| dec.s.get(i).is_none_or(|&s| s <= cut)).collect();
    let mut basis = DMatrix::zeros(c, kernel.len());
    for (j, &i) in kernel.iter().enumerate() {
        basis.set_column(j, &dec.v.column(i));
    }
    Ok(basis)
}

/// Orthonormal basis of the row space of `m` (as columns).
pub(crate) fn row_space_basis(m: &DMatrix<f64>, tol: &ToleranceConfig) -> Result<DMatrix<f64>> {
    ensure_finite(m, "matrix")?;
    let (r, c) = m.shape();
    if m.is_empty() {
        return Ok(DMatrix::zeros(c, 0));
    }
    let dec = svd(m, false)?;
    let cut = tol.rank_threshold(r, c, dec.max());
    let keep: Vec<usize> = (0..dec.s.len()).filter(|&i| dec.s[i] > cut).collect();
    let mut basis = DMatrix::zeros(c, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        basis.set_column(j, &dec.v.column(i));
    }
    Ok(basis)
}

/// Minimum-2-norm minimizer of `||m x - b||`.
pub fn lstsq_min_norm(
    m: &DMatrix<f64>,
    b: &DVector<f64>,
    tol: &ToleranceConfig,
) -> Result<LeastSquares> {
    if m.nrows() != b.len() {
        return Err(Error::invalid(format!(
            "least squares: matrix has {} rows but rhs has {}",
            m.nrows(),
            b.len()
        )));
    }
    if !b.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("rhs has non-finite entries"));
    }
    let pinv = pseudoinverse(m, tol)?;
    let x = &pinv * b;
    let residual_norm = (m * &x - b).norm();
    Ok(LeastSquares { x, residual_norm })
}

fn ensure_square(m: &DMatrix<f64>) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Result<DVector<Complex<f64>>> {
    ensure_square(m)?;
    ensure_finite(m, "matrix")?;
    if m.is_empty() {
        return Ok(DVector::zeros(0));
    }
    Ok(m.clone().complex_eigenvalues())
}

pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|l| l.norm()).fold(0.0, f64::max))
}

/// True iff every eigenvalue lies inside the disk of radius `1 - schur_margin`.
pub fn is_schur(m: &DMatrix<f64>, tol: &ToleranceConfig) -> Result<bool> {
    Ok(spectral_radius(m)? <= 1.0 - tol.schur_margin)
}

/// `exp(m)` by Padé scaling-and-squaring.
pub fn matrix_exponential(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_square(m)?;
    ensure_finite(m, "matrix")?;
    if m.is_empty() {
        return Ok(m.clone());
    }
    Ok(m.exp())
}

/// Largest absolute entry; zero for empty matrices.
pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}
