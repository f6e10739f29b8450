//! Eigenvalues, eigenfunctions and Koopman modes of a fitted Koopman matrix,
//! and prediction by the truncated mode expansion
//! `K^k g (x) = sum_j c_j lambda_j^k phi_j(x)` with `phi_j = psi^T v_j`.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::eig;
use crate::error::{KoopmanError, Result};
use crate::linalg::{self, CONDITION_WARNING};
use crate::matrix_serde::{complex_matrix, complex_vector, real_matrix};
use crate::solver::RegularizerSpec;

type C64 = Complex<f64>;

/// Where a model came from and how trustworthy its linear algebra was.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularizer: Option<RegularizerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub koopman_regularizer: Option<RegularizerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Condition number of the system solved for `K`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gram_condition: Option<f64>,
    /// Condition number of the system solved for `W`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_condition: Option<f64>,
    /// 2-norm condition number of the eigenvector matrix `V`.
    pub eig_condition: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// A fitted model: Koopman matrix, its spectrum, output weights and modes.
///
/// `modes` is `p x n_L`; column `j` is the mode `c_j` attached to
/// eigenvalue `eigenvalues[j]` and eigenvector `V[:, j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KoopmanModel {
    pub dictionary: Dictionary,
    #[serde(rename = "K", with = "real_matrix")]
    pub k: DMatrix<f64>,
    #[serde(with = "complex_vector")]
    pub eigenvalues: DVector<C64>,
    #[serde(rename = "V", with = "complex_matrix")]
    pub v: DMatrix<C64>,
    #[serde(rename = "W", with = "real_matrix")]
    pub w: DMatrix<f64>,
    #[serde(with = "complex_matrix")]
    pub modes: DMatrix<C64>,
    pub meta: ModelMeta,
}

/// One prediction with the imaginary magnitude dropped when taking the real
/// part.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub outputs: DVector<f64>,
    pub imaginary_residue: f64,
}

/// Full eigendecomposition of `k` and Koopman modes `(V^-1 W)^T`.
pub fn decompose(dict: &Dictionary, k: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<KoopmanModel> {
    let n = dict.len();
    if k.shape() != (n, n) {
        return Err(KoopmanError::shape(format!(
            "K is {}x{}, dictionary has {n} functions",
            k.nrows(),
            k.ncols()
        )));
    }
    if w.nrows() != n {
        return Err(KoopmanError::shape(format!(
            "W has {} rows, dictionary has {n} functions",
            w.nrows()
        )));
    }
    let e = eig::eigen(k)?;
    let eig_condition = complex_condition(&e.vectors);
    let mut warnings = Vec::new();

    let wc = w.map(|x| C64::new(x, 0.0));
    let coeffs = if eig_condition > CONDITION_WARNING {
        let msg = format!(
            "eigenvector matrix is near-defective (condition {eig_condition:e}); \
             modes from a least-squares solve"
        );
        log::warn!("{msg}");
        warnings.push(msg);
        linalg::truncated_pinv(&e.vectors, f64::EPSILON)?.0 * &wc
    } else {
        e.vectors
            .clone()
            .lu()
            .solve(&wc)
            .ok_or_else(|| KoopmanError::Numerical("eigenvector matrix is singular".into()))?
    };
    let coeffs = symmetrize_pairs(coeffs, &e.values);

    Ok(KoopmanModel {
        dictionary: dict.clone(),
        k: k.clone(),
        eigenvalues: e.values,
        v: e.vectors,
        w: w.clone(),
        modes: coeffs.transpose(),
        meta: ModelMeta { eig_condition, warnings, ..Default::default() },
    })
}

/// Rows of `V^-1 W` belonging to a conjugate eigenvalue pair are conjugate
/// for real `W`; enforce it exactly.
fn symmetrize_pairs(mut coeffs: DMatrix<C64>, values: &DVector<C64>) -> DMatrix<C64> {
    let n = values.len();
    let mut j = 0;
    while j < n {
        if values[j].im != 0.0 && j + 1 < n && values[j + 1] == values[j].conj() {
            for c in 0..coeffs.ncols() {
                let avg = (coeffs[(j, c)] + coeffs[(j + 1, c)].conj()) * 0.5;
                coeffs[(j, c)] = avg;
                coeffs[(j + 1, c)] = avg.conj();
            }
            j += 2;
        } else {
            j += 1;
        }
    }
    coeffs
}

fn complex_condition(v: &DMatrix<C64>) -> f64 {
    linalg::condition_number(v)
}

impl KoopmanModel {
    pub fn n_basis(&self) -> usize {
        self.dictionary.len()
    }

    pub fn output_dim(&self) -> usize {
        self.w.ncols()
    }

    /// Checks internal shape consistency, e.g. after deserialisation.
    pub fn validate(&self) -> Result<()> {
        let n = self.dictionary.len();
        let p = self.w.ncols();
        let checks = [
            ("K", self.k.shape(), (n, n)),
            ("V", self.v.shape(), (n, n)),
            ("W", self.w.shape(), (n, p)),
            ("modes", self.modes.shape(), (p, n)),
            ("eigenvalues", (self.eigenvalues.len(), 1), (n, 1)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(KoopmanError::Json {
                    path: name.to_string(),
                    message: format!("shape {}x{} does not match expected {}x{}", got.0, got.1, want.0, want.1),
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    /// Parses a model, reporting the JSON path of the first failure.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let model: KoopmanModel = serde_path_to_error::deserialize(de).map_err(|e| {
            KoopmanError::Json {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            }
        })?;
        model.validate()?;
        Ok(model)
    }

    /// Eigenfunction coordinates `V^T psi(x)`, so entry `j` is `phi_j(x)`.
    pub fn eigenfunction_coordinates(&self, x: &[f64]) -> Result<DVector<C64>> {
        let psi = self.dictionary.evaluate(x)?;
        let psi_c = psi.map(|v| C64::new(v, 0.0));
        Ok(self.v.tr_mul(&psi_c))
    }

    /// `m x n_L` matrix `Psi(X) V`; column `i` is `phi_i` on every sample.
    pub fn eigenfunction_values(&self, states: &DMatrix<f64>) -> Result<DMatrix<C64>> {
        let psi = self.dictionary.evaluate_matrix(states)?;
        Ok(psi.map(|v| C64::new(v, 0.0)) * &self.v)
    }

    fn expand(&self, phi: &DVector<C64>) -> Prediction {
        let y = &self.modes * phi;
        let scale = y.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let imag = y.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        Prediction {
            outputs: y.map(|c| c.re),
            imaginary_residue: if scale > 0.0 { imag / scale } else { 0.0 },
        }
    }

    /// Outputs after `k` steps with the relative imaginary residue.
    pub fn predict_detailed(&self, x0: &[f64], k: u32) -> Result<Prediction> {
        let mut phi = self.eigenfunction_coordinates(x0)?;
        for (p, l) in phi.iter_mut().zip(self.eigenvalues.iter()) {
            *p *= l.powu(k);
        }
        Ok(self.expand(&phi))
    }

    /// Outputs after `k` steps: real part of `sum_j c_j lambda_j^k phi_j(x0)`.
    pub fn predict(&self, x0: &[f64], k: u32) -> Result<DVector<f64>> {
        self.predict_detailed(x0, k).map(|p| p.outputs)
    }

    /// Rows `0..=k_max` of predicted outputs, advancing the eigenfunction
    /// coordinates by `diag(lambda)` each step.
    pub fn predict_trajectory(&self, x0: &[f64], k_max: u32) -> Result<DMatrix<f64>> {
        let mut phi = self.eigenfunction_coordinates(x0)?;
        let p = self.output_dim();
        let mut out = DMatrix::zeros(k_max as usize + 1, p);
        for step in 0..=k_max as usize {
            if step > 0 {
                phi.component_mul_assign(&self.eigenvalues);
            }
            let y = self.expand(&phi);
            out.row_mut(step).copy_from(&y.outputs.transpose());
        }
        Ok(out)
    }

    /// Largest relative imaginary residue over a predicted trajectory.
    pub fn max_imaginary_residue(&self, x0: &[f64], k_max: u32) -> Result<f64> {
        let mut phi = self.eigenfunction_coordinates(x0)?;
        let mut worst: f64 = 0.0;
        for step in 0..=k_max {
            if step > 0 {
                phi.component_mul_assign(&self.eigenvalues);
            }
            worst = worst.max(self.expand(&phi).imaginary_residue);
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::BasisFunction;

    fn x_x2() -> Dictionary {
        Dictionary::new(
            1,
            vec![
                BasisFunction::Coordinate { index: 0 },
                BasisFunction::Monomial { exponents: vec![2] },
            ],
        )
        .unwrap()
    }

    #[test]
    fn diagonal_case() {
        let k = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.25]);
        let m = decompose(&x_x2(), &k, &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(m.eigenvalues.as_slice(), &[C64::new(0.5, 0.0), C64::new(0.25, 0.0)]);
        let eye = DMatrix::<C64>::identity(2, 2);
        assert!((&m.v - &eye).norm() < 1e-15);
        assert!((&m.modes - &eye).norm() < 1e-15);
    }

    #[test]
    fn linear_system_reconstruction_matches_matrix_power() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.8]);
        let dict = Dictionary::state_coordinates(2).unwrap();
        let m = decompose(&dict, &a.transpose(), &DMatrix::identity(2, 2)).unwrap();
        assert!((m.eigenvalues[0] - C64::new(0.9, 0.0)).norm() < 1e-14);
        assert!((m.eigenvalues[1] - C64::new(0.8, 0.0)).norm() < 1e-14);
        let x0 = DVector::from_vec(vec![1.3, -0.4]);
        let mut oracle = x0.clone();
        for k in 0..=5 {
            let y = m.predict(x0.as_slice(), k).unwrap();
            assert!((&y - &oracle).norm() <= 1e-12 * oracle.norm());
            oracle = &a * oracle;
        }
    }

    #[test]
    fn rotation_is_conjugate_paired_and_real() {
        let (rho, th) = (0.95f64, 0.4f64);
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[rho * th.cos(), -rho * th.sin(), rho * th.sin(), rho * th.cos()],
        );
        let dict = Dictionary::state_coordinates(2).unwrap();
        let m = decompose(&dict, &a.transpose(), &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(m.eigenvalues[0], m.eigenvalues[1].conj());
        let x0 = [0.7, -1.1];
        assert!(m.max_imaginary_residue(&x0, 40).unwrap() <= 1e-8);
        let mut oracle = DVector::from_column_slice(&x0);
        for k in 0..=40 {
            let y = m.predict(&x0, k).unwrap();
            assert!((&y - &oracle).norm() <= 1e-10 * oracle.norm());
            oracle = &a * oracle;
        }
    }

    #[test]
    fn eigenfunctions_of_invariant_dictionary() {
        let (l1, l2) = (0.6, 0.36);
        let k = DMatrix::from_row_slice(2, 2, &[l1, 0.0, 0.0, l2]);
        let m = decompose(&x_x2(), &k, &DMatrix::identity(2, 2)).unwrap();
        let x = DMatrix::from_column_slice(3, 1, &[-1.0, 0.5, 2.0]);
        let phi = m.eigenfunction_values(&x).unwrap();
        for r in 0..3 {
            let xv = x[(r, 0)];
            assert!((phi[(r, 0)] - C64::new(xv, 0.0)).norm() < 1e-15);
            assert!((phi[(r, 1)] - C64::new(xv * xv, 0.0)).norm() < 1e-15);
        }

        // V = I gives Psi(X) back
        let psi = m.dictionary.evaluate_matrix(&x).unwrap();
        assert!((phi - psi.map(|v| C64::new(v, 0.0))).norm() < 1e-15);
    }

    #[test]
    fn predict_scalar_square_observable() {
        // x+ = 0.5 x, dictionary {x, x^2}, g = x^2
        let k = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.25]);
        let w = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let m = decompose(&x_x2(), &k, &w).unwrap();
        let x0 = 1.7f64;
        for k in 0..=12 {
            let y = m.predict(&[x0], k).unwrap()[0];
            let oracle = 0.5f64.powi(2 * k as i32) * x0 * x0;
            assert!((y - oracle).abs() <= 1e-10);
        }
    }

    #[test]
    fn trajectory_matches_stepwise() {
        let a = DMatrix::from_row_slice(2, 2, &[0.2, -0.9, 0.8, 0.3]);
        let dict = Dictionary::state_coordinates(2).unwrap();
        let m = decompose(&dict, &a.transpose(), &DMatrix::identity(2, 2)).unwrap();
        let x0 = [0.3, 1.0];
        let traj = m.predict_trajectory(&x0, 15).unwrap();
        assert_eq!(traj.nrows(), 16);
        for k in 0..=15 {
            let y = m.predict(&x0, k).unwrap();
            let row = traj.row(k as usize).transpose();
            assert!((&row - &y).norm() <= 1e-12 * y.norm().max(1e-300));
        }
        let single = m.predict_trajectory(&x0, 0).unwrap();
        assert_eq!(single.row(0).transpose(), m.predict(&x0, 0).unwrap());
    }

    #[test]
    fn defective_matrix_is_flagged() {
        let k = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.5]);
        let m = decompose(&Dictionary::state_coordinates(2).unwrap(), &k, &DMatrix::identity(2, 2))
            .unwrap();
        assert!(m.meta.eig_condition > CONDITION_WARNING);
        assert!(!m.meta.warnings.is_empty());
    }

    #[test]
    fn shape_errors() {
        let d = Dictionary::state_coordinates(2).unwrap();
        assert!(decompose(&d, &DMatrix::identity(3, 3), &DMatrix::identity(3, 1)).is_err());
        assert!(decompose(&d, &DMatrix::identity(2, 2), &DMatrix::identity(3, 1)).is_err());
        let m = decompose(&d, &DMatrix::identity(2, 2), &DMatrix::identity(2, 2)).unwrap();
        assert!(m.predict(&[1.0], 1).is_err());
        assert!(m.eigenfunction_values(&DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let a = DMatrix::from_row_slice(2, 2, &[0.2, -0.9, 0.8, 0.3]);
        let dict = Dictionary::state_coordinates(2).unwrap();
        let m = decompose(&dict, &a.transpose(), &DMatrix::identity(2, 2)).unwrap();
        let back = KoopmanModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn corrupted_json_reports_path() {
        let a = DMatrix::from_row_slice(2, 2, &[0.2, -0.9, 0.8, 0.3]);
        let dict = Dictionary::state_coordinates(2).unwrap();
        let m = decompose(&dict, &a, &DMatrix::identity(2, 2)).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        v["eigenvalues"][1]["re"] = serde_json::Value::String("oops".into());
        let err = KoopmanModel::from_json(&v.to_string()).unwrap_err();
        match err {
            KoopmanError::Json { path, .. } => assert_eq!(path, "eigenvalues[1].re"),
            other => panic!("unexpected {other:?}"),
        }
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        v["K"] = serde_json::json!([[1.0]]);
        assert!(matches!(KoopmanModel::from_json(&v.to_string()), Err(KoopmanError::Json { .. })));
    }
}
