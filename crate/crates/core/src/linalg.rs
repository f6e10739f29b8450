//! Dense linear-algebra helpers shared by the solver, spectral and
//! diagnostics modules.

use nalgebra::{Cholesky, ComplexField, DMatrix, Scalar, SymmetricEigen};

use crate::error::{KoopmanError, Result};

/// Condition numbers above this are reported as warnings.
pub const CONDITION_WARNING: f64 = 1e12;

/// Scalars (`f64` and `Complex<f64>`) usable with both linear-algebra backends.
pub trait Field: ComplexField<RealField = f64> + faer::traits::ComplexField<Real = f64> + Copy {}

impl<T: ComplexField<RealField = f64> + faer::traits::ComplexField<Real = f64> + Copy> Field for T {}

fn to_faer<T: Copy>(m: &DMatrix<T>) -> faer::Mat<T> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer<T: Scalar + Copy>(m: faer::MatRef<'_, T>) -> DMatrix<T> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Moore-Penrose pseudoinverse by truncated SVD. Singular values below
/// `rtol * sigma_max` are discarded. Returns the pseudoinverse and the
/// retained rank. Works for real and complex matrices.
pub fn truncated_pinv<T>(m: &DMatrix<T>, rtol: f64) -> Result<(DMatrix<T>, usize)>
where
    T: Field,
{
    let (nrows, ncols) = m.shape();
    if nrows == 0 || ncols == 0 {
        return Ok((DMatrix::zeros(ncols, nrows), 0));
    }
    let svd = to_faer(m)
        .thin_svd()
        .map_err(|e| KoopmanError::Numerical(format!("SVD did not converge: {e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().map(|v| ComplexField::real(*v)).collect();
    let sigma_max = s.iter().copied().fold(0.0, f64::max);
    let cutoff = rtol * sigma_max;
    let keep: Vec<usize> = (0..s.len()).filter(|&i| s[i] > 0.0 && s[i] >= cutoff).collect();
    let u = from_faer(svd.U());
    let v = from_faer(svd.V());
    let mut out = DMatrix::zeros(ncols, nrows);
    for &i in &keep {
        let scaled = v.column(i) * T::from_real(1.0 / s[i]);
        out += scaled * u.column(i).adjoint();
    }
    Ok((out, keep.len()))
}

/// Singular values in non-increasing order.
pub fn singular_values<T>(m: &DMatrix<T>) -> Vec<f64>
where
    T: Field,
{
    if m.is_empty() {
        return Vec::new();
    }
    match to_faer(m).singular_values() {
        Ok(s) => s,
        Err(_) => vec![f64::NAN],
    }
}

/// 2-norm condition number, `sigma_max / sigma_min` (infinite when singular).
pub fn condition_number<T>(m: &DMatrix<T>) -> f64
where
    T: Field,
{
    let sv = singular_values(m);
    let (Some(&max), Some(&min)) = (sv.first(), sv.last()) else {
        return 1.0;
    };
    if max == 0.0 || min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut ev = to_faer(&sym)
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .unwrap_or_else(|_| SymmetricEigen::new(sym).eigenvalues.iter().copied().collect());
    ev.sort_by(f64::total_cmp);
    ev
}

/// Result of a symmetric positive-definite solve.
#[derive(Debug, Clone)]
pub struct SpdSolve {
    pub solution: DMatrix<f64>,
    pub condition: f64,
}

/// Solves `m x = rhs` for symmetric positive-definite `m` by Cholesky, with
/// an eigenvalue-based condition number. Numerically singular or indefinite
/// systems are rejected.
pub fn spd_solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<SpdSolve> {
    let n = m.nrows();
    if m.ncols() != n || rhs.nrows() != n {
        return Err(KoopmanError::shape(format!(
            "system matrix {}x{} incompatible with right-hand side {}x{}",
            m.nrows(),
            m.ncols(),
            rhs.nrows(),
            rhs.ncols()
        )));
    }
    let ev = symmetric_eigenvalues(m);
    let (lo, hi) = (ev[0], ev[n - 1]);
    if hi <= 0.0 || lo <= n as f64 * f64::EPSILON * hi {
        return Err(KoopmanError::SingularSystem(format!(
            "matrix is singular to working precision (eigenvalues in [{lo:e}, {hi:e}])"
        )));
    }
    let condition = hi / lo;
    if condition > CONDITION_WARNING {
        log::warn!("ill-conditioned solve: condition number {condition:e}");
    }
    let chol = Cholesky::new(m.clone()).ok_or_else(|| {
        KoopmanError::SingularSystem("Cholesky factorization failed".into())
    })?;
    Ok(SpdSolve {
        solution: chol.solve(rhs),
        condition,
    })
}

/// Relative Frobenius distance `|a - b| / max(|b|, tiny)`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
