//! Empirical checks of how well a dictionary represents the outputs and the
//! dynamics.
//!
//! All norms are `L^2(mu_X)` norms, i.e. Euclidean norms over the samples
//! divided by `sqrt(m)`. Every defect and gap is non-negative and zero
//! exactly when the corresponding representation is exact on the data:
//!
//! * `span_defect`: relative residual of projecting each output onto the
//!   dictionary span.
//! * `invariance_defect`: relative residual `|Psi(X+) - Psi(X) K|_F`.
//! * `lemma1_margin`: `|g| - |P g|`, never negative for a true projection.
//! * `claim1_gap`: `|(I - P) K P g|`, the part of the propagated in-span
//!   observable that leaves the span. Positive means the dictionary is not
//!   invariant.
//! * `claim2_gap`: `|psi^T w+ - psi^T K w|` with `w`, `w+` the projections
//!   of `g` and `g o S`. Positive under an invariant dictionary means `g` is
//!   not in the span.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dictionary::Dictionary;
use crate::empirical::{EmpiricalGram, SnapshotSet};
use crate::error::{KoopmanError, Result};
use crate::linalg::{self, CONDITION_WARNING};
use crate::solver::{least_squares, DEFAULT_SVD_RTOL};
use crate::spectral::KoopmanModel;

/// Serialises `None` as the string `"unavailable"`.
mod maybe {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Values(Vec<f64>),
        Marker(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<Vec<f64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match v {
            Some(values) => Repr::Values(values.clone()),
            None => Repr::Marker("unavailable".into()),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<f64>>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Values(v) => Ok(Some(v)),
            Repr::Marker(m) if m == "unavailable" => Ok(None),
            Repr::Marker(m) => Err(serde::de::Error::custom(format!("unexpected marker {m:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    #[serde(with = "maybe")]
    pub span_defect: Option<Vec<f64>>,
    pub invariance_defect: f64,
    #[serde(with = "maybe")]
    pub claim1_gap: Option<Vec<f64>>,
    #[serde(with = "maybe")]
    pub claim2_gap: Option<Vec<f64>>,
    #[serde(with = "maybe")]
    pub lemma1_margin: Option<Vec<f64>>,
    pub gram_condition: f64,
    pub eig_condition: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Floor for relative-defect denominators.
fn floor(m: usize, n_basis: usize) -> f64 {
    1e-15 * (m * n_basis) as f64
}

fn require_y(data: &SnapshotSet) -> Result<&DMatrix<f64>> {
    data.y()
        .ok_or_else(|| KoopmanError::MissingOutput("diagnostic needs output data Y".into()))
}

fn check_weights(w: &DMatrix<f64>, n_basis: usize, p: usize, what: &str) -> Result<()> {
    if w.shape() != (n_basis, p) {
        return Err(KoopmanError::shape(format!(
            "{what} is {}x{}, expected {n_basis}x{p}",
            w.nrows(),
            w.ncols()
        )));
    }
    Ok(())
}

/// Per-output `|g_i| - |psi^T w_i|` under `mu_X`, with `|psi^T w|^2 = w^T G w`.
pub fn projection_check(gram: &EmpiricalGram, data: &SnapshotSet, w: &DMatrix<f64>) -> Result<Vec<f64>> {
    let y = require_y(data)?;
    if data.len() != gram.m {
        return Err(KoopmanError::shape("data and Gram matrix use different sample counts"));
    }
    check_weights(w, gram.dim(), y.ncols(), "W")?;
    let sqrt_m = (gram.m as f64).sqrt();
    Ok((0..y.ncols())
        .map(|i| {
            let wi = w.column(i);
            let proj_sq = wi.dot(&(&gram.g * wi)).max(0.0);
            y.column(i).norm() / sqrt_m - proj_sq.sqrt()
        })
        .collect())
}

/// `|Psi(X+) - Psi(X) K|_F / max(|Psi(X+)|_F, floor)`.
pub fn invariance_defect(dict: &Dictionary, data: &SnapshotSet, k: &DMatrix<f64>) -> Result<f64> {
    let psi_x = dict.evaluate_matrix(data.x())?;
    let psi_xp = dict.evaluate_matrix(data.x_plus())?;
    invariance_defect_features(&psi_x, &psi_xp, k)
}

fn invariance_defect_features(psi_x: &DMatrix<f64>, psi_xp: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<f64> {
    let n = psi_x.ncols();
    if k.shape() != (n, n) {
        return Err(KoopmanError::shape(format!("K is {}x{}, expected {n}x{n}", k.nrows(), k.ncols())));
    }
    let resid = (psi_xp - psi_x * k).norm();
    Ok(resid / psi_xp.norm().max(floor(psi_x.nrows(), n)))
}

/// Per-output relative span residual `|g_i - psi^T w_i| / |g_i|`.
pub fn span_defect(dict: &Dictionary, data: &SnapshotSet, w: &DMatrix<f64>) -> Result<Vec<f64>> {
    let y = require_y(data)?;
    let psi_x = dict.evaluate_matrix(data.x())?;
    check_weights(w, dict.len(), y.ncols(), "W")?;
    let resid = y - &psi_x * w;
    let fl = floor(data.len(), dict.len());
    Ok((0..y.ncols())
        .map(|i| resid.column(i).norm() / y.column(i).norm().max(fl))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClaimGaps {
    /// `|(Psi(X+) - Psi(X) K) w_i| / sqrt(m)` for the in-span weights.
    pub claim1: Vec<f64>,
    /// `|Psi(X) (w+_i - K w_i)| / sqrt(m)`; `None` without successor outputs.
    pub claim2: Option<Vec<f64>>,
}

/// Gap quantities for the span-but-not-invariant and
/// invariant-but-not-spanning situations. `w_span` are weights of outputs
/// taken to lie in the span; `w_proj` are projection weights `G^+ B`.
pub fn claim_gaps(
    dict: &Dictionary,
    data: &SnapshotSet,
    k: &DMatrix<f64>,
    w_span: &DMatrix<f64>,
    w_proj: &DMatrix<f64>,
) -> Result<ClaimGaps> {
    let y = require_y(data)?;
    let n = dict.len();
    let p = y.ncols();
    check_weights(w_span, n, p, "W_span")?;
    check_weights(w_proj, n, p, "W_proj")?;
    if k.shape() != (n, n) {
        return Err(KoopmanError::shape(format!("K is {}x{}, expected {n}x{n}", k.nrows(), k.ncols())));
    }
    let psi_x = dict.evaluate_matrix(data.x())?;
    let psi_xp = dict.evaluate_matrix(data.x_plus())?;
    claim_gaps_features(&psi_x, &psi_xp, data.y_plus(), k, w_span, w_proj)
}

fn claim_gaps_features(
    psi_x: &DMatrix<f64>,
    psi_xp: &DMatrix<f64>,
    y_plus: Option<&DMatrix<f64>>,
    k: &DMatrix<f64>,
    w_span: &DMatrix<f64>,
    w_proj: &DMatrix<f64>,
) -> Result<ClaimGaps> {
    let sqrt_m = (psi_x.nrows() as f64).sqrt();
    let leak = (psi_xp - psi_x * k) * w_span;
    let claim1 = leak.column_iter().map(|c| c.norm() / sqrt_m).collect();

    let claim2 = match y_plus {
        Some(yp) => {
            let (w_plus, _) = least_squares(psi_x, yp, DEFAULT_SVD_RTOL)?;
            let diff = psi_x * (w_plus - k * w_proj);
            Some(diff.column_iter().map(|c| c.norm() / sqrt_m).collect())
        }
        None => None,
    };
    Ok(ClaimGaps { claim1, claim2 })
}

/// Every diagnostic for `model` on `data`. Output-dependent fields are
/// `None` when the data has no outputs; `claim2_gap` also needs `Y+`.
pub fn full_report(dict: &Dictionary, data: &SnapshotSet, model: &KoopmanModel) -> Result<DiagnosticsReport> {
    if dict.len() != model.n_basis() || dict.state_dim() != data.state_dim() {
        return Err(KoopmanError::shape(format!(
            "dictionary ({} functions over {} states) does not match model ({} functions) or data ({} states)",
            dict.len(),
            dict.state_dim(),
            model.n_basis(),
            data.state_dim()
        )));
    }
    if let Some(p) = data.output_dim() {
        if p != model.output_dim() {
            return Err(KoopmanError::shape(format!(
                "data has {p} outputs, model has {}",
                model.output_dim()
            )));
        }
    }
    let psi_x = dict.evaluate_matrix(data.x())?;
    let psi_xp = dict.evaluate_matrix(data.x_plus())?;
    let gram = crate::empirical::gram_from_features(&psi_x, &psi_xp, data.y())?;

    let invariance = invariance_defect_features(&psi_x, &psi_xp, &model.k)?;
    let gram_condition = linalg::condition_number(&gram.g);
    let mut warnings = model.meta.warnings.clone();
    if gram_condition > CONDITION_WARNING {
        warnings.push(format!("Gram matrix is ill-conditioned (condition {gram_condition:e})"));
    }

    let (span, lemma1, claim1, claim2) = match data.y() {
        Some(y) => {
            let resid = y - &psi_x * &model.w;
            let fl = floor(data.len(), dict.len());
            let span: Vec<f64> = (0..y.ncols())
                .map(|i| resid.column(i).norm() / y.column(i).norm().max(fl))
                .collect();
            let lemma1 = projection_check(&gram, data, &model.w)?;
            let (w_proj, _) = least_squares(&psi_x, y, DEFAULT_SVD_RTOL)?;
            let gaps = claim_gaps_features(&psi_x, &psi_xp, data.y_plus(), &model.k, &model.w, &w_proj)?;
            (Some(span), Some(lemma1), Some(gaps.claim1), gaps.claim2)
        }
        None => (None, None, None, None),
    };

    Ok(DiagnosticsReport {
        span_defect: span,
        invariance_defect: invariance,
        claim1_gap: claim1,
        claim2_gap: claim2,
        lemma1_margin: lemma1,
        gram_condition,
        eig_condition: model.meta.eig_condition,
        warnings,
    })
}

impl DiagnosticsReport {
    /// Aligned plain-text table, one row per quantity and one column per
    /// output.
    pub fn render_text(&self) -> String {
        let p = [&self.span_defect, &self.claim1_gap, &self.claim2_gap, &self.lemma1_margin]
            .iter()
            .filter_map(|v| v.as_ref().map(Vec::len))
            .max()
            .unwrap_or(0);
        let mut header = vec!["quantity".to_string()];
        header.extend((1..=p.max(1)).map(|i| format!("y{i}")));
        let mut rows: Vec<Vec<String>> = Vec::new();
        let per_output = |name: &str, v: &Option<Vec<f64>>| -> Vec<String> {
            let mut row = vec![name.to_string()];
            match v {
                Some(vals) => row.extend(vals.iter().map(|x| format!("{x:.6e}"))),
                None => row.push("unavailable".into()),
            }
            row
        };
        rows.push(per_output("span_defect", &self.span_defect));
        rows.push(per_output("lemma1_margin", &self.lemma1_margin));
        rows.push(per_output("claim1_gap", &self.claim1_gap));
        rows.push(per_output("claim2_gap", &self.claim2_gap));
        rows.push(vec!["invariance_defect".into(), format!("{:.6e}", self.invariance_defect)]);
        rows.push(vec!["gram_condition".into(), format!("{:.6e}", self.gram_condition)]);
        rows.push(vec!["eig_condition".into(), format!("{:.6e}", self.eig_condition)]);

        let ncols = header.len().max(rows.iter().map(Vec::len).max().unwrap_or(0));
        let mut widths = vec![0; ncols];
        for r in std::iter::once(&header).chain(rows.iter()) {
            for (i, cell) in r.iter().enumerate() {
                widths[i] = widths[i].max(cell.len());
            }
        }
        let mut out = String::new();
        for r in std::iter::once(&header).chain(rows.iter()) {
            let line: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

/// `L^2(mu_X)` norm of `psi^T w`, computed as `sqrt(w^T G w)`.
pub fn gram_norm(gram: &EmpiricalGram, w: &DVector<f64>) -> f64 {
    w.dot(&(&gram.g * w)).max(0.0).sqrt()
}
