//! Eigendecomposition of a real, generally non-symmetric matrix.
//!
//! The real Schur form `K = Q T Q^T` is computed first. Eigenvectors of the
//! quasi-triangular `T` are then found by back substitution in complex
//! arithmetic, one diagonal block at a time, and mapped back through `Q`.
//! The eigenvector of `conj(lambda)` is taken as the exact conjugate of the
//! one for `lambda`, so complex pairs are conjugate to the last bit.

use nalgebra::{Complex, DMatrix, DVector, Schur};

use crate::error::{KoopmanError, Result};

type C64 = Complex<f64>;

/// Eigenvalues and unit-norm, phase-canonicalised eigenvectors (columns).
///
/// Ordering: descending modulus, then descending real part, then ascending
/// imaginary part; a conjugate pair is always adjacent with the negative
/// imaginary member first.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: DVector<C64>,
    pub vectors: DMatrix<C64>,
}

enum Unit {
    Real(C64, DVector<C64>),
    /// `lambda` has positive imaginary part; the partner is its conjugate.
    Pair(C64, DVector<C64>),
}

impl Unit {
    /// Sort representative: the member listed first.
    fn lead(&self) -> C64 {
        match self {
            Unit::Real(l, _) => *l,
            Unit::Pair(l, _) => l.conj(),
        }
    }
}

fn order(a: C64, b: C64) -> std::cmp::Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then(b.re.total_cmp(&a.re))
        .then(a.im.total_cmp(&b.im))
}

pub fn eigen(k: &DMatrix<f64>) -> Result<Eigen> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(KoopmanError::shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            n,
            k.ncols()
        )));
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(KoopmanError::Numerical("matrix has non-finite entries".into()));
    }
    if n == 0 {
        return Ok(Eigen { values: DVector::zeros(0), vectors: DMatrix::zeros(0, 0) });
    }

    let schur = Schur::try_new(k.clone(), f64::EPSILON, 0)
        .ok_or_else(|| KoopmanError::Numerical("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let qc = q.map(|v| C64::new(v, 0.0));

    let blocks = diagonal_blocks(&t);
    let tnorm = t.norm();
    let smin = (f64::EPSILON * tnorm).max(f64::MIN_POSITIVE * 1e10);

    let mut units = Vec::with_capacity(n);
    for (bi, &(start, size)) in blocks.iter().enumerate() {
        for lambda in block_eigenvalues(&t, start, size) {
            if lambda.im < 0.0 {
                continue;
            }
            let y = schur_eigenvector(&t, &blocks, bi, lambda, smin);
            let v = canonicalize(&qc * y);
            if lambda.im > 0.0 {
                units.push(Unit::Pair(lambda, v));
            } else {
                units.push(Unit::Real(lambda, v));
            }
        }
    }
    units.sort_by(|a, b| order(a.lead(), b.lead()));

    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for u in units {
        match u {
            Unit::Real(l, v) => {
                values.push(l);
                vectors.push(v);
            }
            Unit::Pair(l, v) => {
                values.push(l.conj());
                vectors.push(v.map(|c| c.conj()));
                values.push(l);
                vectors.push(v);
            }
        }
    }
    debug_assert_eq!(values.len(), n);
    Ok(Eigen {
        values: DVector::from_vec(values),
        vectors: DMatrix::from_columns(&vectors),
    })
}

/// `(start, size)` of each 1x1 or 2x2 diagonal block of a quasi-triangular matrix.
fn diagonal_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

fn block_eigenvalues(t: &DMatrix<f64>, start: usize, size: usize) -> Vec<C64> {
    if size == 1 {
        return vec![C64::new(t[(start, start)], 0.0)];
    }
    let (a, b) = (t[(start, start)], t[(start, start + 1)]);
    let (c, d) = (t[(start + 1, start)], t[(start + 1, start + 1)]);
    let half_trace = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    let disc = half_diff * half_diff + b * c;
    if disc < 0.0 {
        let im = (-disc).sqrt();
        vec![C64::new(half_trace, im), C64::new(half_trace, -im)]
    } else {
        let r = disc.sqrt();
        vec![C64::new(half_trace + r, 0.0), C64::new(half_trace - r, 0.0)]
    }
}

/// Eigenvector of quasi-triangular `t` for eigenvalue `lambda` of block `bi`.
fn schur_eigenvector(
    t: &DMatrix<f64>,
    blocks: &[(usize, usize)],
    bi: usize,
    lambda: C64,
    smin: f64,
) -> DVector<C64> {
    let n = t.nrows();
    let tc = |i: usize, j: usize| C64::new(t[(i, j)], 0.0);
    let mut y = DVector::<C64>::zeros(n);
    let (start, size) = blocks[bi];

    if size == 1 {
        y[start] = C64::new(1.0, 0.0);
    } else {
        // null vector of the singular 2x2 block T_bb - lambda I
        let m00 = tc(start, start) - lambda;
        let m01 = tc(start, start + 1);
        let m10 = tc(start + 1, start);
        let m11 = tc(start + 1, start + 1) - lambda;
        let (p, q) = if m00.norm() + m01.norm() >= m10.norm() + m11.norm() {
            (m00, m01)
        } else {
            (m10, m11)
        };
        if p.norm() + q.norm() == 0.0 {
            y[start] = C64::new(1.0, 0.0);
        } else {
            y[start] = -q;
            y[start + 1] = p;
        }
    }
    let last = start + size;

    for &(js, jsize) in blocks[..bi].iter().rev() {
        let mut rhs = [C64::new(0.0, 0.0); 2];
        for (r, slot) in rhs.iter_mut().enumerate().take(jsize) {
            let row = js + r;
            let mut acc = C64::new(0.0, 0.0);
            for l in (js + jsize)..last {
                acc += tc(row, l) * y[l];
            }
            *slot = -acc;
        }
        if jsize == 1 {
            let mut denom = tc(js, js) - lambda;
            if denom.norm() < smin {
                denom = C64::new(smin, 0.0);
            }
            y[js] = rhs[0] / denom;
        } else {
            let a = [
                [tc(js, js) - lambda, tc(js, js + 1)],
                [tc(js + 1, js), tc(js + 1, js + 1) - lambda],
            ];
            let sol = solve_2x2(a, rhs, smin);
            y[js] = sol[0];
            y[js + 1] = sol[1];
        }
        let big = y.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if big > 1e100 {
            y /= C64::new(big, 0.0);
        }
    }
    y
}

/// Gaussian elimination with partial pivoting; pivots smaller than `smin`
/// are replaced by `smin`.
fn solve_2x2(mut a: [[C64; 2]; 2], mut b: [C64; 2], smin: f64) -> [C64; 2] {
    if a[1][0].norm() > a[0][0].norm() {
        a.swap(0, 1);
        b.swap(0, 1);
    }
    if a[0][0].norm() < smin {
        a[0][0] = C64::new(smin, 0.0);
    }
    let f = a[1][0] / a[0][0];
    let mut u11 = a[1][1] - f * a[0][1];
    let b1 = b[1] - f * b[0];
    if u11.norm() < smin {
        u11 = C64::new(smin, 0.0);
    }
    let x1 = b1 / u11;
    let x0 = (b[0] - a[0][1] * x1) / a[0][0];
    [x0, x1]
}

/// Scales to unit 2-norm and rotates so the first entry that is not
/// negligible is real and positive.
pub fn canonicalize(mut v: DVector<C64>) -> DVector<C64> {
    let norm = v.norm();
    if norm == 0.0 || !norm.is_finite() {
        return v;
    }
    v /= C64::new(norm, 0.0);
    let biggest = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if let Some(i) = v.iter().position(|c| c.norm() > 1e-10 * biggest) {
        let lead = v[i];
        let phase = lead.conj() / C64::new(lead.norm(), 0.0);
        v *= phase;
        v[i] = C64::new(lead.norm(), 0.0);
    }
    v
}
