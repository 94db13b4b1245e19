//! Symmetric positive semidefinite helpers.
//!
//! Everything here goes through a symmetric eigendecomposition
//! `A = V diag(λ) Vᵀ`, which is the only factorisation that behaves on the
//! rank-deficient matrices produced on and near the singular set.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_traits::Float;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Absolute asymmetry tolerated by [`sqrt_psd`], relative to `max(1, max|a_ij|)`.
pub const ASYMMETRY_TOL: f64 = 1e-8;
/// Negative eigenvalues above `-PSD_CLAMP_TOL * max(1, max|a_ij|)` are clamped to zero.
pub const PSD_CLAMP_TOL: f64 = 1e-10;

fn max_abs<T: Scalar>(a: &DMatrix<T>) -> T {
    a.iter().fold(T::zero(), |m, &v| Float::max(m, Float::abs(v)))
}

/// Largest `|a_ij - a_ji|`.
pub fn asymmetry<T: Scalar>(a: &DMatrix<T>) -> T {
    let n = a.nrows();
    let mut worst = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            worst = Float::max(worst, Float::abs(a[(i, j)] - a[(j, i)]));
        }
    }
    worst
}

/// Symmetrised eigendecomposition; the input is averaged with its transpose first.
pub fn sym_eigen<T: Scalar>(a: &DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let half = T::lit(0.5);
    let sym = (a + a.transpose()) * half;
    let eig = SymmetricEigen::new(sym);
    (eig.eigenvalues, eig.eigenvectors)
}

/// `V diag(f(λ)) Vᵀ`.
pub fn spectral_map<T: Scalar>(
    values: &DVector<T>,
    vectors: &DMatrix<T>,
    mut f: impl FnMut(T) -> T,
) -> DMatrix<T> {
    let mapped = DVector::from_iterator(values.len(), values.iter().map(|&l| f(l)));
    vectors * DMatrix::from_diagonal(&mapped) * vectors.transpose()
}

/// Symmetric PSD square root `S` with `S·S = A`.
///
/// Rejects inputs whose asymmetry exceeds [`ASYMMETRY_TOL`] or whose smallest
/// eigenvalue is below `-PSD_CLAMP_TOL`; small negative eigenvalues are clamped.
pub fn sqrt_psd<T: Scalar>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    let scale = Float::max(T::one(), max_abs(a));
    let asym = asymmetry(a);
    if asym > T::lit(ASYMMETRY_TOL) * scale {
        return Err(Error::Asymmetric(asym.to_f64_lossy()));
    }
    if a.iter().all(|v| v.is_zero()) {
        return Ok(DMatrix::zeros(a.nrows(), a.ncols()));
    }
    let (values, vectors) = sym_eigen(a);
    let min = values.iter().fold(T::infinity(), |m, &v| Float::min(m, v));
    if min < -T::lit(PSD_CLAMP_TOL) * scale {
        return Err(Error::NotPsd(min.to_f64_lossy()));
    }
    Ok(spectral_map(&values, &vectors, |l| {
        Float::sqrt(Float::max(l, T::zero()))
    }))
}

/// Inverse of a PSD matrix with eigenvalues floored at `floor_rel · trace(A)`.
///
/// Returns `None` when the trace itself vanishes.
pub fn psd_inverse_floored<T: Scalar>(a: &DMatrix<T>, floor_rel: T) -> Option<DMatrix<T>> {
    let trace = a.trace();
    if !(trace > T::zero()) {
        return None;
    }
    let floor = floor_rel * trace;
    let (values, vectors) = sym_eigen(a);
    Some(spectral_map(&values, &vectors, |l| {
        T::one() / Float::max(l, floor)
    }))
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn min_eigenvalue<T: Scalar>(a: &DMatrix<T>) -> T {
    let (values, _) = sym_eigen(a);
    values.iter().fold(T::infinity(), |m, &v| Float::min(m, v))
}

/// Spectral norm of a symmetric matrix (largest `|λ|`).
pub fn sym_spectral_norm<T: Scalar>(a: &DMatrix<T>) -> T {
    let (values, _) = sym_eigen(a);
    values.iter().fold(T::zero(), |m, &v| Float::max(m, Float::abs(v)))
}

/// Householder reflection `Q` (symmetric, orthogonal) with `Q e₁ = e`.
///
/// `e` must be a unit vector.
pub fn reflector_to<T: Scalar>(e: &DVector<T>) -> DMatrix<T> {
    let d = e.len();
    let mut u = -e.clone();
    u[0] += T::one();
    let norm = u.norm();
    if norm < T::lit(1e-12) {
        return DMatrix::identity(d, d);
    }
    u /= norm;
    DMatrix::identity(d, d) - (&u * u.transpose()) * T::lit(2.0)
}
