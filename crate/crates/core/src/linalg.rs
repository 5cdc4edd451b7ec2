//! Small dense linear-algebra helpers shared by the synthesis recursions:
//! symmetric square roots, pseudo-inverses, inertia counts and stacking.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result};

/// Eigenvalues with magnitude below this are treated as zero when taking
/// square roots of nominally PSD matrices.
pub const SQRT_CLAMP: f64 = 1e-12;

/// Relative singular-value cutoff for pseudo-inverses.
pub const PINV_RTOL: f64 = 1e-10;

/// Relative eigenvalue threshold for inertia classification.
pub const INERTIA_RTOL: f64 = 1e-9;

/// Symmetric part `(M + Mᵀ)/2`, used to keep Riccati iterates symmetric.
pub fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Row-major nested-vec view of a matrix, for serializable schedules.
pub(crate) fn mat_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn sym_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(sym(m))
}

/// Principal symmetric square root of a PSD matrix. Eigenvalues below the
/// clamp threshold are treated as exactly zero, so boundary matrices (for
/// example zero-initialized covariances) stay well defined.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = sym_eigen(m);
    let vals = eig.eigenvalues.map(|l| if l < SQRT_CLAMP { 0.0 } else { l.sqrt() });
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Inverse of a symmetric positive-definite matrix via eigendecomposition.
pub fn pd_inverse(m: &DMatrix<f64>, what: &str, step: usize) -> Result<DMatrix<f64>> {
    pd_power(m, -1.0, what, step)
}

/// `m^{-1/2}` for a symmetric positive-definite matrix.
pub fn pd_inv_sqrt(m: &DMatrix<f64>, what: &str, step: usize) -> Result<DMatrix<f64>> {
    pd_power(m, -0.5, what, step)
}

fn pd_power(m: &DMatrix<f64>, p: f64, what: &str, step: usize) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(m);
    let max = eig.eigenvalues.amax().max(1.0);
    if eig.eigenvalues.iter().any(|&l| l <= SQRT_CLAMP * max) {
        return Err(Error::Singular { step, what: what.to_string() });
    }
    let vals = eig.eigenvalues.map(|l| l.powf(p));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())
}

/// Moore–Penrose pseudo-inverse with singular values below
/// `PINV_RTOL * σ_max` truncated.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.is_empty() {
        return m.transpose();
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.amax();
    if smax == 0.0 {
        return m.transpose();
    }
    svd.pseudo_inverse(PINV_RTOL * smax)
        .expect("svd computed with both factors")
}

/// General (possibly indefinite) inverse through LU, with a condition guard.
pub fn checked_inverse(m: &DMatrix<f64>, what: &str, step: usize) -> Result<DMatrix<f64>> {
    if condition_number(m) > 1e12 {
        return Err(Error::Singular { step, what: what.to_string() });
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular { step, what: what.to_string() })
}

/// Two-norm condition number via SVD. Returns infinity for singular input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let (max, min) = (sv.amax(), sv.min());
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Signature counts of a symmetric matrix: `(positive, negative, near_zero)`.
/// Eigenvalues within `INERTIA_RTOL * ‖m‖₂` of zero are reported in the third
/// slot, so callers can treat boundary cases conservatively.
pub fn inertia(m: &DMatrix<f64>) -> (usize, usize, usize) {
    let eig = sym_eigen(m);
    let thresh = INERTIA_RTOL * eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let mut counts = (0usize, 0usize, 0usize);
    for &l in eig.eigenvalues.iter() {
        if l > thresh {
            counts.0 += 1;
        } else if l < -thresh {
            counts.1 += 1;
        } else {
            counts.2 += 1;
        }
    }
    counts
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn max_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).eigenvalues.max()
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).eigenvalues.min()
}

/// Eigenvector of the symmetric part of `m` for its largest eigenvalue,
/// together with that eigenvalue.
pub fn top_sym_eigenpair(m: &DMatrix<f64>) -> (f64, nalgebra::DVector<f64>) {
    let eig = sym_eigen(m);
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    (eig.eigenvalues[best], eig.eigenvectors.column(best).into_owned())
}

/// Stack matrices vertically. All inputs must share a column count.
pub fn vstack(mats: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = mats.first().map_or(0, |m| m.ncols());
    let rows = mats.iter().map(|m| m.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for m in mats {
        out.view_mut((at, 0), (m.nrows(), cols)).copy_from(*m);
        at += m.nrows();
    }
    out
}

/// Stack matrices horizontally. All inputs must share a row count.
pub fn hstack(mats: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = mats.first().map_or(0, |m| m.nrows());
    let cols = mats.iter().map(|m| m.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for m in mats {
        out.view_mut((0, at), (rows, m.ncols())).copy_from(*m);
        at += m.ncols();
    }
    out
}

/// Block-diagonal composition of the given matrices.
pub fn block_diag(mats: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = mats.iter().map(|m| m.nrows()).sum();
    let cols = mats.iter().map(|m| m.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for m in mats {
        out.view_mut((r, c), (m.nrows(), m.ncols())).copy_from(*m);
        r += m.nrows();
        c += m.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sqrt_of_spd_matrix_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = psd_sqrt(&m);
        assert_relative_eq!(&r * &r, m, epsilon = 1e-12);
    }

    #[test]
    fn sqrt_clamps_tiny_negative_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-14]);
        let r = psd_sqrt(&m);
        assert_relative_eq!(r[(0, 0)], 1.0, epsilon = 1e-12);
        assert_eq!(r[(1, 1)], 0.0);
    }

    #[test]
    fn inertia_counts_signs() {
        let m = DMatrix::from_diagonal(&nalgebra::dvector![2.0, -0.5, 1e-15]);
        assert_eq!(inertia(&m), (1, 1, 1));
    }

    #[test]
    fn pinv_recovers_inverse_on_full_rank() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
        let pi = pinv(&m);
        assert_relative_eq!(&m * &pi, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn pinv_handles_rank_deficiency() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let pi = pinv(&m);
        // M M⁺ M = M is the defining property that survives rank loss.
        assert_relative_eq!(&m * &pi * &m, m, epsilon = 1e-12);
    }

    #[test]
    fn inv_sqrt_errors_on_singular_input() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(pd_inv_sqrt(&m, "test", 3).is_err());
    }

    #[test]
    fn stacking_shapes() {
        let a = DMatrix::<f64>::identity(2, 2);
        let b = DMatrix::<f64>::zeros(1, 2);
        let v = vstack(&[&a, &b]);
        assert_eq!((v.nrows(), v.ncols()), (3, 2));
        let h = hstack(&[&a, &a]);
        assert_eq!((h.nrows(), h.ncols()), (2, 4));
        let d = block_diag(&[&a, &b]);
        assert_eq!((d.nrows(), d.ncols()), (3, 4));
    }
}
