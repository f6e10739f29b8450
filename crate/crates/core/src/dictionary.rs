//! Observable dictionaries and their evaluation over states.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KoopmanError, Result};

/// A single scalar observable of the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BasisFunction {
    Constant,
    Coordinate { index: usize },
    /// `prod_j x_j^exponents[j]`
    Monomial { exponents: Vec<u32> },
    /// `exp(-|x - center|^2 / (2 bandwidth^2))`
    GaussianRbf { center: Vec<f64>, bandwidth: f64 },
    /// `r^2 log r` with `r = |x - center|`, and 0 at the center.
    ThinPlateSpline { center: Vec<f64> },
    /// `row . x`, a guessed linear output map.
    AffineOutput { row: Vec<f64> },
}

impl BasisFunction {
    fn validate(&self, state_dim: usize) -> Result<()> {
        let check_len = |what: &str, len: usize| {
            if len == state_dim {
                Ok(())
            } else {
                Err(KoopmanError::config(format!(
                    "{what} has length {len}, state dimension is {state_dim}"
                )))
            }
        };
        match self {
            BasisFunction::Constant => Ok(()),
            BasisFunction::Coordinate { index } => {
                if *index < state_dim {
                    Ok(())
                } else {
                    Err(KoopmanError::config(format!(
                        "coordinate index {index} out of range for state dimension {state_dim}"
                    )))
                }
            }
            BasisFunction::Monomial { exponents } => check_len("monomial exponents", exponents.len()),
            BasisFunction::GaussianRbf { center, bandwidth } => {
                check_len("rbf center", center.len())?;
                if !(bandwidth.is_finite() && *bandwidth > 0.0) {
                    return Err(KoopmanError::config(format!(
                        "rbf bandwidth must be positive, got {bandwidth}"
                    )));
                }
                finite("rbf center", center)
            }
            BasisFunction::ThinPlateSpline { center } => {
                check_len("thin-plate-spline center", center.len())?;
                finite("thin-plate-spline center", center)
            }
            BasisFunction::AffineOutput { row } => {
                check_len("affine-output row", row.len())?;
                finite("affine-output row", row)
            }
        }
    }

    /// Evaluates at `x`; the caller guarantees `x.len()` equals the state dimension.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            BasisFunction::Constant => 1.0,
            BasisFunction::Coordinate { index } => x[*index],
            BasisFunction::Monomial { exponents } => exponents
                .iter()
                .zip(x)
                .filter(|(&e, _)| e > 0)
                .map(|(&e, &xi)| xi.powi(e as i32))
                .product(),
            BasisFunction::GaussianRbf { center, bandwidth } => {
                let r2 = squared_distance(x, center);
                (-r2 / (2.0 * bandwidth * bandwidth)).exp()
            }
            BasisFunction::ThinPlateSpline { center } => {
                let r2 = squared_distance(x, center);
                if r2 == 0.0 {
                    0.0
                } else {
                    // r^2 log r = r^2 log(r^2) / 2
                    0.5 * r2 * r2.ln()
                }
            }
            BasisFunction::AffineOutput { row } => row.iter().zip(x).map(|(c, xi)| c * xi).sum(),
        }
    }
}

fn finite(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|a| a.is_finite()) {
        Ok(())
    } else {
        Err(KoopmanError::config(format!("{what} has non-finite entries")))
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DictionaryRepr {
    state_dim: usize,
    basis: Vec<BasisFunction>,
}

/// Ordered list of basis functions over states of a fixed dimension.
///
/// The i-th entry of every evaluation corresponds to `basis()[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DictionaryRepr")]
pub struct Dictionary {
    state_dim: usize,
    basis: Vec<BasisFunction>,
}

impl TryFrom<DictionaryRepr> for Dictionary {
    type Error = KoopmanError;

    fn try_from(repr: DictionaryRepr) -> Result<Self> {
        Dictionary::new(repr.state_dim, repr.basis)
    }
}

impl Dictionary {
    pub fn new(state_dim: usize, basis: Vec<BasisFunction>) -> Result<Self> {
        if state_dim == 0 {
            return Err(KoopmanError::config("state dimension must be at least 1"));
        }
        if basis.is_empty() {
            return Err(KoopmanError::config("dictionary needs at least one basis function"));
        }
        for b in &basis {
            b.validate(state_dim)?;
        }
        Ok(Self { state_dim, basis })
    }

    /// Coordinates of the state, `psi(x) = x`.
    pub fn state_coordinates(state_dim: usize) -> Result<Self> {
        Self::new(
            state_dim,
            (0..state_dim).map(|index| BasisFunction::Coordinate { index }).collect(),
        )
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Number of basis functions.
    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn basis(&self) -> &[BasisFunction] {
        &self.basis
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.state_dim {
            return Err(KoopmanError::shape(format!(
                "state has length {}, dictionary expects {}",
                x.len(),
                self.state_dim
            )));
        }
        Ok(DVector::from_iterator(
            self.basis.len(),
            self.basis.iter().map(|b| b.eval(x)),
        ))
    }

    /// Evaluates every row of `states` (m x n), giving the m x n_L data matrix.
    pub fn evaluate_matrix(&self, states: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if states.ncols() != self.state_dim {
            return Err(KoopmanError::shape(format!(
                "state matrix has {} columns, dictionary expects {}",
                states.ncols(),
                self.state_dim
            )));
        }
        let mut out = DMatrix::zeros(states.nrows(), self.basis.len());
        let mut row = vec![0.0; self.state_dim];
        for k in 0..states.nrows() {
            for (j, r) in row.iter_mut().enumerate() {
                *r = states[(k, j)];
            }
            for (i, b) in self.basis.iter().enumerate() {
                out[(k, i)] = b.eval(&row);
            }
        }
        Ok(out)
    }
}

/// Recipe for a dictionary built from the standard families.
///
/// Ordering: output-guess rows, state coordinates, constant, monomials of
/// degree 1..=d in graded lexicographic order, RBFs in center order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StandardDictionarySpec {
    pub state_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monomial_degree: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rbf_centers: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rbf_bandwidth: Option<f64>,
    #[serde(default)]
    pub include_state: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_guess_rows: Option<Vec<Vec<f64>>>,
}

pub fn make_standard_dictionary(spec: &StandardDictionarySpec) -> Result<Dictionary> {
    let n = spec.state_dim;
    let mut basis = Vec::new();

    if let Some(rows) = &spec.output_guess_rows {
        basis.extend(rows.iter().map(|row| BasisFunction::AffineOutput { row: row.clone() }));
    }
    if spec.include_state {
        basis.extend((0..n).map(|index| BasisFunction::Coordinate { index }));
    }
    if let Some(degree) = spec.monomial_degree {
        basis.push(BasisFunction::Constant);
        // Degree-1 monomials would duplicate the coordinates already present.
        let first = if spec.include_state { 2 } else { 1 };
        for d in first..=degree {
            basis.extend(
                graded_lex_exponents(n, d)
                    .into_iter()
                    .map(|exponents| BasisFunction::Monomial { exponents }),
            );
        }
    }
    match (&spec.rbf_centers, spec.rbf_bandwidth) {
        (Some(centers), Some(bandwidth)) => basis.extend(centers.iter().map(|c| {
            BasisFunction::GaussianRbf {
                center: c.clone(),
                bandwidth,
            }
        })),
        (Some(_), None) => {
            return Err(KoopmanError::config("rbf_centers given without rbf_bandwidth"))
        }
        _ => {}
    }

    if basis.is_empty() {
        return Err(KoopmanError::config(
            "dictionary spec requests no basis families",
        ));
    }
    Dictionary::new(n, basis)
}

/// All exponent vectors of length `n` with total degree `degree`, in
/// lexicographically descending order (x1^d first).
pub fn graded_lex_exponents(n: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, remaining_vars: usize, remaining: u32, out: &mut Vec<Vec<u32>>) {
        if remaining_vars == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=remaining).rev() {
            prefix.push(e);
            rec(prefix, remaining_vars - 1, remaining - e, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(&mut Vec::with_capacity(n), n, degree, &mut out);
    }
    out
}

/// Draws `count` centers uniformly from the axis-aligned bounding box of the
/// rows of `states`.
pub fn sample_rbf_centers(states: &DMatrix<f64>, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if states.nrows() == 0 {
        return Err(KoopmanError::shape("no states to take a bounding box from"));
    }
    let bounds: Vec<(f64, f64)> = states
        .column_iter()
        .map(|c| (c.min(), c.max()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
                .collect()
        })
        .collect())
}
