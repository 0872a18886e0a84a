//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative singular-value tolerance below which a channel counts as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Unit-modulus complex number with the given phase.
pub fn cis(phase: f64) -> Complex64 {
    Complex64::from_polar(1.0, phase)
}

/// Wraps an angle to (-π, π].
pub fn wrap_angle(x: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let r = x.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Largest element-wise modulus of `m - I`.
pub fn identity_deviation(m: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((m[(i, j)] - target).norm());
        }
    }
    worst
}

/// Largest element-wise modulus of `a - b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Singular values of `h` (descending), rejecting matrices whose smallest
/// singular value is below `tolerance` times the largest.
pub fn require_full_row_rank(h: &CMatrix, tolerance: f64) -> Result<Vec<f64>> {
    if h.nrows() > h.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} users exceed {} transmit antennas",
            h.nrows(),
            h.ncols()
        )));
    }
    let mut sv: Vec<f64> = h.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let largest = sv.first().copied().unwrap_or(0.0);
    let smallest = sv.last().copied().unwrap_or(0.0);
    let ratio = if largest > 0.0 { smallest / largest } else { 0.0 };
    if !(ratio >= tolerance) {
        return Err(Error::DegenerateChannel { ratio, tolerance });
    }
    Ok(sv)
}

/// Extends `k` orthonormal rows (a `k × n` matrix) to an `n × n` unitary
/// matrix whose first `k` rows are the given ones.
pub fn complete_unitary_rows(rows: &CMatrix) -> CMatrix {
    let (k, n) = rows.shape();
    let mut basis: Vec<CVector> = (0..k).map(|i| rows.row(i).transpose()).collect();
    let mut candidate = 0;
    while basis.len() < n && candidate < n {
        let mut v = CVector::zeros(n);
        v[candidate] = Complex64::new(1.0, 0.0);
        candidate += 1;
        // two passes of Gram-Schmidt for numerical orthogonality
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dotc(&v);
                v -= b * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v / Complex64::new(norm, 0.0));
        }
    }
    let mut out = CMatrix::zeros(n, n);
    for (i, b) in basis.iter().enumerate() {
        out.set_row(i, &b.transpose());
    }
    out
}

/// Solves the complex system `a x = b` through its real `2n × 2n` embedding.
/// Returns `None` when the embedded matrix is numerically singular.
pub fn solve_real_embedding(a: &CMatrix, b: &CVector) -> Option<CVector> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
    let mut rhs = DVector::<f64>::zeros(2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = a[(i, j)];
            m[(i, j)] = z.re;
            m[(i, n + j)] = -z.im;
            m[(n + i, j)] = z.im;
            m[(n + i, n + j)] = z.re;
        }
        rhs[i] = b[i].re;
        rhs[n + i] = b[i].im;
    }
    let x = m.lu().solve(&rhs)?;
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(CVector::from_fn(n, |i, _| Complex64::new(x[i], x[n + i])))
}

/// Inverse of a Hermitian positive definite matrix, `None` if not positive definite.
pub fn hermitian_pd_inverse(m: &CMatrix) -> Option<CMatrix> {
    m.clone().cholesky().map(|ch| ch.inverse())
}
