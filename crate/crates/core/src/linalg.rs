use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{cast, Real};

pub(crate) const SYMMETRY_TOL: f64 = 1e-9;
pub(crate) const PSD_TOL: f64 = 1e-9;

pub(crate) fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * cast::<T>(0.5)
}

/// `acc += w d dᵀ`, computing each off-diagonal product once so the result
/// stays exactly symmetric.
pub(crate) fn add_weighted_outer<T: Real>(acc: &mut DMatrix<T>, w: T, d: &DVector<T>) {
    let n = d.len();
    for j in 0..n {
        let wd = w * d[j];
        for i in j..n {
            let v = wd * d[i];
            acc[(i, j)] += v;
            if i != j {
                acc[(j, i)] += v;
            }
        }
    }
}

pub(crate) fn max_asymmetry<T: Real>(m: &DMatrix<T>) -> T {
    let mut worst = T::zero();
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let d = (m[(i, j)] - m[(j, i)]).abs();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

pub(crate) fn eigen<T: Real>(m: &DMatrix<T>) -> SymmetricEigen<T, nalgebra::Dyn> {
    SymmetricEigen::new(symmetrize(m))
}

pub(crate) fn min_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    eigen(m).eigenvalues.min()
}

/// Symmetric square root `V diag(sqrt(l)) V^T` of a PSD matrix.
///
/// Eigenvalues in `[-PSD_TOL, 0)` are clamped to zero; anything more
/// negative is reported as a decomposition failure.
pub(crate) fn sqrt_psd<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Decomposition("covariance has non-finite entries".into()));
    }
    // Decompose at unit scale; the eigensolver loses everything for entries
    // near the top of the floating-point range.
    let scale = m.amax();
    if scale == T::zero() {
        return Ok(DMatrix::zeros(n, n));
    }
    let e = eigen(&(m / scale));
    let tol = cast::<T>(PSD_TOL);
    let mut roots = DVector::zeros(n);
    for (i, &l) in e.eigenvalues.iter().enumerate() {
        if l * scale < -tol {
            return Err(Error::Decomposition(format!(
                "covariance is not positive semi-definite (eigenvalue {})",
                l * scale
            )));
        }
        roots[i] = if l > T::zero() { l.sqrt() * scale.sqrt() } else { T::zero() };
    }
    let root = recompose(&e.eigenvectors, &roots);
    if root.iter().any(|x| !x.is_finite()) {
        return Err(Error::Decomposition("covariance square root is not finite".into()));
    }
    Ok(root)
}

/// `V diag(d) V^T`.
pub(crate) fn recompose<T: Real>(vectors: &DMatrix<T>, diag: &DVector<T>) -> DMatrix<T> {
    let mut scaled = vectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= diag[j];
    }
    scaled * vectors.transpose()
}

pub(crate) fn trace<T: Real>(m: &DMatrix<T>) -> T {
    m.diagonal().iter().fold(T::zero(), |acc, &x| acc + x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_of_diagonal_is_exact() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0, 0.0]));
        let r = sqrt_psd(&m).unwrap();
        assert!((&r * &r - &m).abs().max() < 1e-12);
        assert_eq!(r[(0, 0)], 2.0);
    }

    #[test]
    fn sqrt_survives_extreme_scale() {
        let m = DMatrix::<f64>::identity(5, 5) * 1e308;
        let r = sqrt_psd(&m).unwrap();
        assert!((r[(2, 2)] / 1e154 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slightly_negative_eigenvalue_is_clamped() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-12]);
        let r = sqrt_psd(&m).unwrap();
        assert_eq!(r[(1, 1)], 0.0);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-3]);
        assert!(matches!(sqrt_psd(&m), Err(Error::Decomposition(_))));
    }
}
