//! End-to-end fit: snapshots to a decomposed [`KoopmanModel`].

use nalgebra::DMatrix;

use crate::dictionary::Dictionary;
use crate::empirical::{build_gram, SnapshotSet};
use crate::error::Result;
use crate::solver::{koopman_solution, output_solution, RegularizerSpec};
use crate::spectral::{decompose, KoopmanModel};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitOptions {
    /// Regulariser for the output weights `W`.
    pub regularizer: RegularizerSpec,
    /// Regulariser for `K`. Defaults to [`FitOptions::regularizer`], except
    /// that a Tikhonov prior is replaced by a zero prior with the same `Q`.
    pub koopman_regularizer: Option<RegularizerSpec>,
}

impl FitOptions {
    pub fn with_regularizer(regularizer: RegularizerSpec) -> Self {
        Self { regularizer, koopman_regularizer: None }
    }

    pub fn resolved_koopman_regularizer(&self, n_basis: usize) -> RegularizerSpec {
        if let Some(r) = &self.koopman_regularizer {
            return r.clone();
        }
        match &self.regularizer {
            RegularizerSpec::Tikhonov { q, .. } => RegularizerSpec::Tikhonov {
                q: q.clone(),
                w0: DMatrix::zeros(n_basis, n_basis),
                prior_columns: Some(Vec::new()),
            },
            other => other.clone(),
        }
    }
}

/// Fits `K` and `W` and decomposes them. Without output data the state
/// itself is used as the output, `y = x`.
pub fn fit_model(dict: &Dictionary, data: &SnapshotSet, opts: &FitOptions) -> Result<KoopmanModel> {
    let with_outputs;
    let data = if data.y().is_some() {
        data
    } else {
        with_outputs = SnapshotSet::with_outputs(
            data.x().clone(),
            data.x_plus().clone(),
            Some(data.x().clone()),
            Some(data.x_plus().clone()),
        )?;
        &with_outputs
    };
    let gram = build_gram(dict, data)?;
    let k_reg = opts.resolved_koopman_regularizer(dict.len());
    let k = koopman_solution(&gram, &k_reg)?;
    let w = output_solution(&gram, &opts.regularizer)?;
    let mut model = decompose(dict, &k.matrix, &w.matrix)?;
    model.meta.regularizer = Some(opts.regularizer.clone());
    model.meta.koopman_regularizer = Some(k_reg);
    model.meta.samples = Some(gram.m);
    model.meta.gram_condition = Some(k.condition);
    model.meta.output_condition = Some(w.condition);
    if k.condition > crate::linalg::CONDITION_WARNING {
        model
            .meta
            .warnings
            .push(format!("Koopman solve is ill-conditioned (condition {:e})", k.condition));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Penalty;
    use crate::systems::{generate_snapshots, InitialStates, ReferenceSystem, SystemKind};

    #[test]
    fn linear_fit_recovers_transpose() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.8]);
        let sys = ReferenceSystem::full_state(SystemKind::Linear { a: a.clone() }).unwrap();
        let init = InitialStates::Given(vec![vec![1.0, 0.3], vec![-0.4, 1.2]]);
        let data = generate_snapshots(&sys, &init, 5, 0).unwrap().data;
        let dict = Dictionary::state_coordinates(2).unwrap();
        let model = fit_model(&dict, &data, &FitOptions::default()).unwrap();
        assert!((&model.k - a.transpose()).norm() < 1e-12);
        assert!((&model.w - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
        assert_eq!(model.meta.samples, Some(10));
    }

    #[test]
    fn state_outputs_used_when_y_absent() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, -1.0]);
        let data = SnapshotSet::new(x.clone(), &x * 0.5).unwrap();
        let dict = Dictionary::state_coordinates(1).unwrap();
        let model = fit_model(&dict, &data, &FitOptions::default()).unwrap();
        assert_eq!(model.output_dim(), 1);
        assert!((model.w[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn tikhonov_koopman_regularizer_drops_output_prior() {
        let opts = FitOptions::with_regularizer(RegularizerSpec::Tikhonov {
            q: Penalty::Scalar(2.0),
            w0: DMatrix::from_element(3, 1, 1.0),
            prior_columns: None,
        });
        match opts.resolved_koopman_regularizer(3) {
            RegularizerSpec::Tikhonov { q, w0, .. } => {
                assert_eq!(q, Penalty::Scalar(2.0));
                assert_eq!(w0, DMatrix::zeros(3, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
