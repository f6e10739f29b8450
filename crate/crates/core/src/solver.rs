//! Koopman matrix and output weights from the empirical Gram matrices.
//!
//! All three modes minimise a squared empirical residual:
//!
//! * pseudoinverse: `K = G^+ A`, `W = G^+ B` (minimum-norm minimiser).
//!   When the Gram matrices carry their features this is evaluated as
//!   `Psi(X)^+ Psi(X+)` and `Psi(X)^+ Y`, which is the same matrix (the
//!   singular values of `G` are `sigma_i(Psi)^2 / m`) without squaring the
//!   conditioning,
//! * ridge: `K = (G + beta I)^-1 A`,
//! * Tikhonov with prior: `W = (G + Q)^-1 (B + Q W0)`, the exact minimiser of
//!   `|g_i - psi^T w_i|^2 + (w_i - w0_i)^T Q (w_i - w0_i)` for every column.

use nalgebra::DMatrix;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::empirical::EmpiricalGram;
use crate::error::{KoopmanError, Result};
use crate::linalg::{self, spd_solve, truncated_pinv};
use crate::matrix_serde::{self, from_rows, rows_of};

pub const DEFAULT_SVD_RTOL: f64 = 1e-12;

fn default_rtol() -> f64 {
    DEFAULT_SVD_RTOL
}

/// Penalty matrix `Q`, either `beta I` or a full symmetric PSD matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Penalty {
    Scalar(f64),
    Full(DMatrix<f64>),
}

impl Penalty {
    pub fn to_matrix(&self, n: usize) -> Result<DMatrix<f64>> {
        match self {
            Penalty::Scalar(beta) => Ok(DMatrix::identity(n, n) * *beta),
            Penalty::Full(q) => {
                if q.shape() != (n, n) {
                    return Err(KoopmanError::shape(format!(
                        "Q is {}x{}, dictionary size is {n}",
                        q.nrows(),
                        q.ncols()
                    )));
                }
                Ok(q.clone())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Penalty::Scalar(beta) => {
                if !(beta.is_finite() && *beta >= 0.0) {
                    return Err(KoopmanError::config(format!(
                        "scalar Q must be non-negative, got {beta}"
                    )));
                }
            }
            Penalty::Full(q) => {
                if q.nrows() != q.ncols() {
                    return Err(KoopmanError::config("Q must be square"));
                }
                if q.iter().any(|v| !v.is_finite()) {
                    return Err(KoopmanError::config("Q has non-finite entries"));
                }
                let scale = q.norm().max(f64::MIN_POSITIVE);
                if (q - q.transpose()).norm() > 1e-12 * scale {
                    return Err(KoopmanError::config("Q must be symmetric"));
                }
                if !q.is_empty() {
                    let min = linalg::symmetric_eigenvalues(q)[0];
                    if min < -1e-10 * linalg::spectral_norm(q) {
                        return Err(KoopmanError::config(format!(
                            "Q must be positive semidefinite (min eigenvalue {min:e})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PenaltyRepr {
    Scalar { scalar: f64 },
    Full(Vec<Vec<f64>>),
}

impl Serialize for Penalty {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Penalty::Scalar(scalar) => PenaltyRepr::Scalar { scalar: *scalar },
            Penalty::Full(q) => PenaltyRepr::Full(rows_of(q)),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Penalty {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match PenaltyRepr::deserialize(d)? {
            PenaltyRepr::Scalar { scalar } => Ok(Penalty::Scalar(scalar)),
            PenaltyRepr::Full(rows) => from_rows(&rows, None).map(Penalty::Full).map_err(D::Error::custom),
        }
    }
}

/// How the least-squares problems are regularised.
///
/// JSON: `{"mode": "pseudoinverse", "svd_rtol": 1e-12}`, `{"mode": "ridge",
/// "beta": 0.1}` or `{"mode": "tikhonov", "Q": {"scalar": 1.0} | [[..]],
/// "W0": [[..]], "prior_columns": [0, 1]}`. Prior column indices are
/// zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum RegularizerSpec {
    Pseudoinverse {
        #[serde(default = "default_rtol")]
        svd_rtol: f64,
    },
    Ridge {
        beta: f64,
    },
    Tikhonov {
        #[serde(rename = "Q")]
        q: Penalty,
        #[serde(rename = "W0", with = "matrix_serde::real_matrix")]
        w0: DMatrix<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prior_columns: Option<Vec<usize>>,
    },
}

impl Default for RegularizerSpec {
    fn default() -> Self {
        RegularizerSpec::Pseudoinverse { svd_rtol: DEFAULT_SVD_RTOL }
    }
}

impl RegularizerSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            RegularizerSpec::Pseudoinverse { svd_rtol } => {
                if !(*svd_rtol > 0.0 && *svd_rtol < 1.0) {
                    return Err(KoopmanError::config(format!(
                        "svd_rtol must lie in (0, 1), got {svd_rtol}"
                    )));
                }
            }
            RegularizerSpec::Ridge { beta } => {
                if !(beta.is_finite() && *beta >= 0.0) {
                    return Err(KoopmanError::config(format!(
                        "ridge beta must be non-negative, got {beta}"
                    )));
                }
            }
            RegularizerSpec::Tikhonov { q, w0, prior_columns } => {
                q.validate()?;
                if w0.iter().any(|v| !v.is_finite()) {
                    return Err(KoopmanError::config("W0 has non-finite entries"));
                }
                if let Some(cols) = prior_columns {
                    for &c in cols {
                        if c >= w0.ncols() {
                            return Err(KoopmanError::config(format!(
                                "prior column {c} out of range for W0 with {} columns",
                                w0.ncols()
                            )));
                        }
                    }
                    for j in (0..w0.ncols()).filter(|j| !cols.contains(j)) {
                        if w0.column(j).iter().any(|&v| v != 0.0) {
                            return Err(KoopmanError::config(format!(
                                "W0 column {j} is not a prior column but is nonzero"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// A solved weight matrix together with the conditioning of the system that
/// produced it.
#[derive(Debug, Clone)]
pub struct Solution {
    pub matrix: DMatrix<f64>,
    /// Condition number of `G`, `G + beta I` or `G + Q`.
    pub condition: f64,
    /// Retained SVD rank (pseudoinverse mode) or full dimension.
    pub rank: usize,
}

/// Solves `min |Psi(X) M - R|` in the mode given by `reg`, where `cross` is
/// `Psi(X)^T R / m` and `prior` is the Tikhonov `W0` when one applies.
fn solve_weights(
    gram: &EmpiricalGram,
    cross: &DMatrix<f64>,
    raw: Option<&DMatrix<f64>>,
    reg: &RegularizerSpec,
    what: &str,
) -> Result<Solution> {
    reg.validate()?;
    let n = gram.dim();
    if cross.nrows() != n {
        return Err(KoopmanError::shape(format!(
            "{what} has {} rows, Gram matrix is {n}x{n}",
            cross.nrows()
        )));
    }
    match reg {
        RegularizerSpec::Pseudoinverse { svd_rtol } => {
            let features = gram.features.as_ref().map(|f| &f.psi_x);
            let (matrix, rank) = match (features, raw) {
                (Some(psi), Some(rhs)) => least_squares(psi, rhs, *svd_rtol)?,
                _ => {
                    let (pinv, rank) = truncated_pinv(&gram.g, *svd_rtol)?;
                    (pinv * cross, rank)
                }
            };
            Ok(Solution {
                matrix,
                condition: linalg::condition_number(&gram.g),
                rank,
            })
        }
        RegularizerSpec::Ridge { beta } => {
            let system = &gram.g + DMatrix::identity(n, n) * *beta;
            let solved = spd_solve(&system, cross).map_err(|e| match e {
                KoopmanError::SingularSystem(msg) => KoopmanError::SingularSystem(format!(
                    "{msg}; G + beta I with beta = {beta} cannot be inverted, \
                     use pseudoinverse mode or raise beta"
                )),
                other => other,
            })?;
            Ok(Solution {
                matrix: solved.solution,
                condition: solved.condition,
                rank: n,
            })
        }
        RegularizerSpec::Tikhonov { q, w0, .. } => {
            let q = q.to_matrix(n)?;
            if w0.shape() != cross.shape() {
                return Err(KoopmanError::shape(format!(
                    "W0 is {}x{}, {what} needs {}x{}",
                    w0.nrows(),
                    w0.ncols(),
                    cross.nrows(),
                    cross.ncols()
                )));
            }
            let system = &gram.g + &q;
            let rhs = cross + &q * w0;
            let solved = spd_solve(&system, &rhs).map_err(|e| match e {
                KoopmanError::SingularSystem(msg) => KoopmanError::SingularSystem(format!(
                    "{msg}; G + Q cannot be inverted, strengthen Q"
                )),
                other => other,
            })?;
            Ok(Solution {
                matrix: solved.solution,
                condition: solved.condition,
                rank: n,
            })
        }
    }
}

/// Koopman matrix with conditioning information. In Tikhonov mode `W0` must
/// be `n_L x n_L` (a prior on the operator columns).
pub fn koopman_solution(gram: &EmpiricalGram, reg: &RegularizerSpec) -> Result<Solution> {
    let raw = gram.features.as_ref().map(|f| &f.psi_xp);
    solve_weights(gram, &gram.a, raw, reg, "A")
}

/// Minimum-norm `M` minimising `|psi M - rhs|_F`, truncating singular values
/// of `psi` where the corresponding singular value of `psi^T psi` falls below
/// `svd_rtol` times the largest.
pub fn least_squares(psi: &DMatrix<f64>, rhs: &DMatrix<f64>, svd_rtol: f64) -> Result<(DMatrix<f64>, usize)> {
    if psi.nrows() != rhs.nrows() {
        return Err(KoopmanError::shape(format!(
            "least squares with {} samples but {} right-hand-side rows",
            psi.nrows(),
            rhs.nrows()
        )));
    }
    let (pinv, rank) = truncated_pinv(psi, svd_rtol.sqrt())?;
    Ok((pinv * rhs, rank))
}

/// Koopman matrix `K` such that `Psi(X+) ~ Psi(X) K`.
pub fn koopman_matrix(gram: &EmpiricalGram, reg: &RegularizerSpec) -> Result<DMatrix<f64>> {
    koopman_solution(gram, reg).map(|s| s.matrix)
}

pub fn output_solution(gram: &EmpiricalGram, reg: &RegularizerSpec) -> Result<Solution> {
    let b = gram
        .b
        .as_ref()
        .ok_or_else(|| KoopmanError::MissingOutput("output weights need output data Y".into()))?;
    let raw = gram.features.as_ref().and_then(|f| f.y.as_ref());
    solve_weights(gram, b, raw, reg, "B")
}

/// Output weights `W` such that `Y ~ Psi(X) W`.
pub fn output_weights(gram: &EmpiricalGram, reg: &RegularizerSpec) -> Result<DMatrix<f64>> {
    output_solution(gram, reg).map(|s| s.matrix)
}

/// Two-block Tikhonov fit: the first `split` outputs are pulled towards
/// `w0_known` with weight `beta1`, the remaining outputs towards zero with
/// weight `beta2`.
pub fn blockwise_tikhonov(
    gram: &EmpiricalGram,
    beta1: f64,
    beta2: f64,
    w0_known: &DMatrix<f64>,
    split: usize,
) -> Result<DMatrix<f64>> {
    let b = gram
        .b
        .as_ref()
        .ok_or_else(|| KoopmanError::MissingOutput("blockwise fit needs output data Y".into()))?;
    let (n, p) = b.shape();
    if split < 1 || split > p {
        return Err(KoopmanError::config(format!(
            "split must lie in 1..={p}, got {split}"
        )));
    }
    for (name, beta) in [("beta1", beta1), ("beta2", beta2)] {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(KoopmanError::config(format!("{name} must be positive, got {beta}")));
        }
    }
    if w0_known.shape() != (n, split) {
        return Err(KoopmanError::shape(format!(
            "known prior is {}x{}, expected {n}x{split}",
            w0_known.nrows(),
            w0_known.ncols()
        )));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let known_rhs = b.columns(0, split) + w0_known * beta1;
    let known = spd_solve(&(&gram.g + &eye * beta1), &known_rhs)?.solution;

    let mut out = DMatrix::zeros(n, p);
    out.columns_mut(0, split).copy_from(&known);
    if split < p {
        let rest_rhs = b.columns(split, p - split).into_owned();
        let rest = spd_solve(&(&gram.g + &eye * beta2), &rest_rhs)?.solution;
        out.columns_mut(split, p - split).copy_from(&rest);
    }
    Ok(out)
}
