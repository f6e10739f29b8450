//! Empirical inner products under the uniform measure on the sampled states.

use nalgebra::{Complex, DMatrix, DVector};

use crate::dictionary::Dictionary;
use crate::error::{KoopmanError, Result};

/// Paired snapshots: row k of `x_plus` is the successor of row k of `x`.
/// Outputs are stored one row per sample (`m x p`).
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    x: DMatrix<f64>,
    x_plus: DMatrix<f64>,
    y: Option<DMatrix<f64>>,
    y_plus: Option<DMatrix<f64>>,
}

impl SnapshotSet {
    pub fn new(x: DMatrix<f64>, x_plus: DMatrix<f64>) -> Result<Self> {
        Self::with_outputs(x, x_plus, None, None)
    }

    pub fn with_outputs(
        x: DMatrix<f64>,
        x_plus: DMatrix<f64>,
        y: Option<DMatrix<f64>>,
        y_plus: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(KoopmanError::shape("snapshot set needs at least one sample"));
        }
        if x.shape() != x_plus.shape() {
            return Err(KoopmanError::shape(format!(
                "X is {}x{} but X+ is {}x{}",
                x.nrows(),
                x.ncols(),
                x_plus.nrows(),
                x_plus.ncols()
            )));
        }
        if let Some(y) = &y {
            if y.nrows() != x.nrows() {
                return Err(KoopmanError::shape(format!(
                    "Y has {} rows, expected {}",
                    y.nrows(),
                    x.nrows()
                )));
            }
        }
        if let Some(yp) = &y_plus {
            let Some(y) = &y else {
                return Err(KoopmanError::shape("Y+ given without Y"));
            };
            if yp.shape() != y.shape() {
                return Err(KoopmanError::shape("Y+ must have the same shape as Y"));
            }
        }
        for (name, m) in [("X", Some(&x)), ("X+", Some(&x_plus)), ("Y", y.as_ref()), ("Y+", y_plus.as_ref())] {
            if let Some(m) = m {
                if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
                    return Err(KoopmanError::DataValidation(format!(
                        "{name} has a non-finite entry at row {}, column {}",
                        pos % m.nrows(),
                        pos / m.nrows()
                    )));
                }
            }
        }
        Ok(Self { x, x_plus, y, y_plus })
    }

    /// Builds snapshot pairs from consecutive rows of a single trajectory.
    /// Output rows, when given, follow the same pairing.
    pub fn from_trajectory(states: &DMatrix<f64>, outputs: Option<&DMatrix<f64>>) -> Result<Self> {
        let t = states.nrows();
        if t < 2 {
            return Err(KoopmanError::shape("a trajectory needs at least two rows"));
        }
        let x = states.rows(0, t - 1).into_owned();
        let xp = states.rows(1, t - 1).into_owned();
        let (y, yp) = match outputs {
            Some(o) => {
                if o.nrows() != t {
                    return Err(KoopmanError::shape("output rows must match trajectory rows"));
                }
                (Some(o.rows(0, t - 1).into_owned()), Some(o.rows(1, t - 1).into_owned()))
            }
            None => (None, None),
        };
        Self::with_outputs(x, xp, y, yp)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn x_plus(&self) -> &DMatrix<f64> {
        &self.x_plus
    }

    pub fn y(&self) -> Option<&DMatrix<f64>> {
        self.y.as_ref()
    }

    pub fn y_plus(&self) -> Option<&DMatrix<f64>> {
        self.y_plus.as_ref()
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.y.as_ref().map(|y| y.ncols())
    }
}

/// `G`, `A` and optionally `B` for `m` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalGram {
    pub g: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: Option<DMatrix<f64>>,
    pub m: usize,
    /// The evaluated data the matrices were formed from. When present the
    /// pseudoinverse solver works on `Psi(X)` directly instead of `G`.
    pub features: Option<Features>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub psi_x: DMatrix<f64>,
    pub psi_xp: DMatrix<f64>,
    pub y: Option<DMatrix<f64>>,
}

impl EmpiricalGram {
    pub fn dim(&self) -> usize {
        self.g.nrows()
    }
}

/// `(1/m) L^T R`, summed over samples in ascending order.
pub(crate) fn cross_product(left: &DMatrix<f64>, right: &DMatrix<f64>) -> DMatrix<f64> {
    debug_assert_eq!(left.nrows(), right.nrows());
    let m = left.nrows() as f64;
    DMatrix::from_fn(left.ncols(), right.ncols(), |i, j| {
        let l = left.column(i);
        let r = right.column(j);
        let mut acc = 0.0;
        for k in 0..l.len() {
            acc += l[k] * r[k];
        }
        acc / m
    })
}

/// `(1/m) L^T L`, exactly symmetric.
pub(crate) fn gram_of(left: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = cross_product(left, left);
    for i in 0..g.nrows() {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    g
}

/// Assembles `G = Psi(X)^T Psi(X) / m`, `A = Psi(X)^T Psi(X+) / m` and, when
/// the data carries outputs, `B = Psi(X)^T Y / m`.
pub fn build_gram(dict: &Dictionary, data: &SnapshotSet) -> Result<EmpiricalGram> {
    let psi_x = dict.evaluate_matrix(data.x())?;
    let psi_xp = dict.evaluate_matrix(data.x_plus())?;
    gram_from_features(&psi_x, &psi_xp, data.y())
}

pub fn gram_from_features(
    psi_x: &DMatrix<f64>,
    psi_xp: &DMatrix<f64>,
    y: Option<&DMatrix<f64>>,
) -> Result<EmpiricalGram> {
    if psi_x.shape() != psi_xp.shape() {
        return Err(KoopmanError::shape("Psi(X) and Psi(X+) differ in shape"));
    }
    for (name, m) in [("Psi(X)", psi_x), ("Psi(X+)", psi_xp)] {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(KoopmanError::DataValidation(format!(
                "{name} has non-finite entries; check the dictionary against the data range"
            )));
        }
    }
    let b = match y {
        Some(y) => {
            if y.nrows() != psi_x.nrows() {
                return Err(KoopmanError::shape("Y rows differ from sample count"));
            }
            Some(cross_product(psi_x, y))
        }
        None => None,
    };
    Ok(EmpiricalGram {
        g: gram_of(psi_x),
        a: cross_product(psi_x, psi_xp),
        b,
        m: psi_x.nrows(),
        features: Some(Features { psi_x: psi_x.clone(), psi_xp: psi_xp.clone(), y: y.cloned() }),
    })
}

/// `L^2(mu_X)` norm of the observable `psi^T w`, i.e. `|Psi(X) w|_2 / sqrt(m)`.
pub fn empirical_norm(dict: &Dictionary, x: &DMatrix<f64>, w: &DVector<f64>) -> Result<f64> {
    let psi = checked_features(dict, x, w.len())?;
    Ok(features_norm(&psi, w))
}

/// Complex-weight variant of [`empirical_norm`], `sqrt(w^* G w)`.
pub fn empirical_norm_complex(
    dict: &Dictionary,
    x: &DMatrix<f64>,
    w: &DVector<Complex<f64>>,
) -> Result<f64> {
    let psi = checked_features(dict, x, w.len())?;
    let m = psi.nrows() as f64;
    let psi_c = psi.map(|v| Complex::new(v, 0.0));
    Ok((psi_c * w).norm() / m.sqrt())
}

fn checked_features(dict: &Dictionary, x: &DMatrix<f64>, wlen: usize) -> Result<DMatrix<f64>> {
    if wlen != dict.len() {
        return Err(KoopmanError::shape(format!(
            "weight vector has length {wlen}, dictionary has {} functions",
            dict.len()
        )));
    }
    if x.nrows() == 0 {
        return Err(KoopmanError::shape("no samples"));
    }
    dict.evaluate_matrix(x)
}

/// Empirical norm of `Psi w` for precomputed features.
pub(crate) fn features_norm(psi: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    (psi * w).norm() / (psi.nrows() as f64).sqrt()
}
