//! Serde adapters that write matrices as row-major nested arrays and complex
//! numbers as `{"re": .., "im": ..}` objects.

use nalgebra::{Complex, DMatrix, DVector};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize, Clone, Copy)]
#[serde(deny_unknown_fields)]
pub struct ComplexRepr {
    pub re: f64,
    pub im: f64,
}

impl From<Complex<f64>> for ComplexRepr {
    fn from(c: Complex<f64>) -> Self {
        Self { re: c.re, im: c.im }
    }
}

impl From<ComplexRepr> for Complex<f64> {
    fn from(c: ComplexRepr) -> Self {
        Complex::new(c.re, c.im)
    }
}

pub fn rows_of<T: Clone + nalgebra::Scalar>(m: &DMatrix<T>) -> Vec<Vec<T>> {
    m.row_iter()
        .map(|r| r.iter().cloned().collect())
        .collect()
}

/// Builds a matrix from rows. An empty list gives a 0x`ncols` matrix.
pub fn from_rows<T: nalgebra::Scalar + Clone>(
    rows: &[Vec<T>],
    ncols: Option<usize>,
) -> Result<DMatrix<T>, String> {
    let nrows = rows.len();
    let ncols = match rows.first() {
        Some(r) => r.len(),
        None => ncols.unwrap_or(0),
    };
    let mut data = Vec::with_capacity(nrows * ncols);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(format!(
                "row {i} has {} entries, expected {ncols}",
                r.len()
            ));
        }
        data.extend(r.iter().cloned());
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, &data))
}

pub mod real_matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        rows_of(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows, None).map_err(D::Error::custom)
    }
}

pub mod opt_real_matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(rows_of).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DMatrix<f64>>, D::Error> {
        let rows = Option::<Vec<Vec<f64>>>::deserialize(d)?;
        rows.map(|r| from_rows(&r, None).map_err(D::Error::custom))
            .transpose()
    }
}

pub mod complex_matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<Complex<f64>>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<ComplexRepr>> = m
            .row_iter()
            .map(|r| r.iter().map(|&c| c.into()).collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<DMatrix<Complex<f64>>, D::Error> {
        let rows = Vec::<Vec<ComplexRepr>>::deserialize(d)?;
        let rows: Vec<Vec<Complex<f64>>> = rows
            .into_iter()
            .map(|r| r.into_iter().map(Into::into).collect())
            .collect();
        from_rows(&rows, None).map_err(D::Error::custom)
    }
}

pub mod complex_vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &DVector<Complex<f64>>, s: S) -> Result<S::Ok, S::Error> {
        let items: Vec<ComplexRepr> = v.iter().map(|&c| c.into()).collect();
        items.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<DVector<Complex<f64>>, D::Error> {
        let items = Vec::<ComplexRepr>::deserialize(d)?;
        Ok(DVector::from_iterator(
            items.len(),
            items.into_iter().map(Complex::from),
        ))
    }
}
