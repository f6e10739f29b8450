//! Koopman operator estimation from multi-output snapshot data.
//!
//! The pipeline is: evaluate a [`Dictionary`] over paired snapshots, build the
//! empirical Gram matrices, solve for the Koopman matrix and output weights
//! (pseudoinverse, ridge or Tikhonov with a prior), decompose the Koopman
//! matrix into eigenvalues, eigenfunctions and Koopman modes, and predict
//! outputs with the mode expansion. [`diagnostics`] measures how far the
//! dictionary is from spanning the outputs and from being invariant under the
//! dynamics.

pub mod diagnostics;
pub mod dictionary;
pub mod eig;
pub mod empirical;
mod error;
pub mod fit;
pub mod linalg;
pub mod matrix_serde;
pub mod snapshot_csv;
pub mod solver;
pub mod spectral;
pub mod systems;

pub use diagnostics::{full_report, DiagnosticsReport};
pub use dictionary::{make_standard_dictionary, BasisFunction, Dictionary, StandardDictionarySpec};
pub use empirical::{build_gram, empirical_norm, EmpiricalGram, SnapshotSet};
pub use error::{KoopmanError, Result};
pub use fit::{fit_model, FitOptions};
pub use solver::{koopman_matrix, output_weights, RegularizerSpec};
pub use spectral::{decompose, KoopmanModel};
pub use systems::{OutputMap, ReferenceSystem, SystemKind};

pub use nalgebra::{DMatrix, DVector};
pub use nalgebra::Complex;
pub type C64 = Complex<f64>;
