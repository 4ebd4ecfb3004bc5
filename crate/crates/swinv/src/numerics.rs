//! Dense linear-algebra kernels shared by all analysis modules: matrix
//! exponentials (scaling-and-squaring with order-13 Padé), augmented
//! exponentials of `[[A, b], [0, 0]]`, and eigenvalue-based definiteness
//! checks.

use crate::system::Mode;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Padé-13 coefficients of the diagonal approximant to `exp`.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// `theta_13` from Higham's scaling analysis: below this 1-norm the order-13
/// approximant alone meets double-precision accuracy.
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential `e^{At}` by scaling-and-squaring with an order-13 Padé
/// approximant. One algorithm everywhere, so flows are reproducible
/// bit-for-bit across modules.
pub fn matrix_exponential(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if !t.is_finite() {
        return Err(Error::NonFinite(format!("time t = {t}")));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix entry in exponential".into()));
    }
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "matrix exponential needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let m = a * t;
    let norm = one_norm(&m);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let m = m / 2f64.powi(s as i32);

    // Padé 13: split into even/odd powers, solve (V-U) X = (V+U).
    let id = DMatrix::<f64>::identity(n, n);
    let m2 = &m * &m;
    let m4 = &m2 * &m2;
    let m6 = &m4 * &m2;
    let u_inner = &m6 * (PADE13[13] * &m6 + PADE13[11] * &m4 + PADE13[9] * &m2)
        + PADE13[7] * &m6
        + PADE13[5] * &m4
        + PADE13[3] * &m2
        + PADE13[1] * &id;
    let u = &m * u_inner;
    let v = &m6 * (PADE13[12] * &m6 + PADE13[10] * &m4 + PADE13[8] * &m2)
        + PADE13[6] * &m6
        + PADE13[4] * &m4
        + PADE13[2] * &m2
        + PADE13[0] * &id;
    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut f = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NumericFailure("singular Padé denominator".into()))?;
    for _ in 0..s {
        f = &f * &f;
    }
    Ok(f)
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// The augmented matrix `calA = [[A, b], [0, 0]]` whose exponential carries
/// the exact affine flow: top-left block is `e^{At}`, top-right column is
/// `∫₀ᵗ e^{A(t−s)} b ds`.
pub fn augmented_matrix(mode: &Mode) -> DMatrix<f64> {
    let n = mode.dim();
    let mut cal = DMatrix::<f64>::zeros(n + 1, n + 1);
    cal.view_mut((0, 0), (n, n)).copy_from(&mode.a);
    cal.view_mut((0, n), (n, 1)).copy_from(&mode.b);
    cal
}

/// `e^{calA t}` for the augmented matrix of one mode. Bottom row stays
/// `(0, …, 0, 1)` exactly in theory; we rely on the kernel for the rest.
pub fn augmented_exponential(mode: &Mode, t: f64) -> Result<DMatrix<f64>> {
    matrix_exponential(&augmented_matrix(mode), t)
}

/// One exact flow step of a single mode: `x(t) = e^{At} x0 + ∫₀ᵗ e^{A(t−s)} b ds`.
pub fn mode_flow(mode: &Mode, x0: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    let n = mode.dim();
    let e = augmented_exponential(mode, t)?;
    let phi = e.view((0, 0), (n, n));
    let drift = e.view((0, n), (n, 1));
    Ok(&phi * x0 + DVector::from_iterator(n, drift.iter().cloned()))
}

/// Symmetrize, then test `min eig > margin`. Non-symmetric inputs beyond the
/// 1e-10 tolerance are symmetrized anyway; the asymmetry is reported back.
pub fn is_positive_definite(s: &DMatrix<f64>, margin: f64) -> bool {
    min_symmetric_eigenvalue(s) > margin
}

/// Default strictness margin used when realizing a strict `≻ 0` check.
pub fn pd_margin(s: &DMatrix<f64>) -> f64 {
    1e-9 * (1.0 + s.norm())
}

/// Minimum eigenvalue of `(S + Sᵀ)/2`.
pub fn min_symmetric_eigenvalue(s: &DMatrix<f64>) -> f64 {
    let sym = (s + s.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Maximum asymmetry `max |S - Sᵀ|` of a nominally symmetric matrix.
pub fn asymmetry(s: &DMatrix<f64>) -> f64 {
    (s - s.transpose()).amax()
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (s + s.transpose()) * 0.5;
    sym.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::NumericFailure("matrix is not positive definite".into()))
}

/// Symmetric square root `S^{1/2}` of a positive semidefinite matrix.
pub fn spd_sqrt(s: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (s + s.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}
