//! Small dense eigenvalue and null-space kernels.
//!
//! Both routines run in `f64` through `nalgebra` regardless of the caller's
//! scalar type; they serve as independent oracles for the closed forms.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::limits::Limits;
use crate::scalar::Scalar;
use crate::sparse::{Convention, SparseGenerator};

fn to_nalgebra<T: Scalar>(dim: usize, dense: &[T]) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| dense[i * dim + j].as_f64())
}

/// Eigenvalues of a real square matrix given row-major, sorted by real part
/// (ties by imaginary part).
pub fn dense_eigs<T: Scalar>(dim: usize, dense: &[T], limits: &Limits) -> Result<Vec<Complex<T>>> {
    if dense.len() != dim * dim {
        return Err(Error::DimensionMismatch {
            expected: dim * dim,
            got: dense.len(),
        });
    }
    limits.check_dense_dim(dim)?;
    if dense.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix entries"));
    }
    let m = to_nalgebra(dim, dense);
    let schur = nalgebra::linalg::Schur::try_new(m, 1e-14, 100 * dim.max(10))
        .ok_or_else(|| Error::NonConvergence(format!("Schur iteration for {dim}x{dim} matrix")))?;
    let mut eig: Vec<Complex<T>> = schur
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex::new(T::lit(z.re), T::lit(z.im)))
        .collect();
    eig.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(eig)
}

/// Eigenvalues of a sparse generator via its dense form.
pub fn generator_eigs<T: Scalar>(g: &SparseGenerator<T>, limits: &Limits) -> Result<Vec<Complex<T>>> {
    limits.check_dense_dim(g.dim())?;
    dense_eigs(g.dim(), &g.to_dense(), limits)
}

/// Stationary distribution of an irreducible generator by a dense linear solve:
/// `pi^T W = 0` with one balance equation replaced by `sum(pi) = 1`.
pub fn stationary_dense<T: Scalar>(g: &SparseGenerator<T>, limits: &Limits) -> Result<Vec<T>> {
    let n = g.dim();
    limits.check_dense_dim(n)?;
    // rows of the system are columns of W (or rows of -H)
    let dense = g.to_dense();
    let coeff = |eq: usize, var: usize| -> f64 {
        match g.convention() {
            Convention::Intensity => dense[var * n + eq].as_f64(),
            Convention::Hamiltonian => -dense[eq * n + var].as_f64(),
        }
    };
    let mut a = DMatrix::from_fn(n, n, coeff);
    let mut b = nalgebra::DVector::zeros(n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    b[n - 1] = 1.0;
    let lu = a.lu();
    let x = lu
        .solve(&b)
        .ok_or_else(|| Error::NonConvergence("singular stationary system (reducible chain?)".into()))?;
    Ok(x.iter().map(|&v| T::lit(v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_spectrum() {
        let m = [3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0];
        let e = dense_eigs(3, &m, &Limits::default()).unwrap();
        let re: Vec<f64> = e.iter().map(|z| z.re).collect();
        assert_eq!(re, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn two_state_intensity_spectrum() {
        let (a, b) = (0.7f64, 2.1);
        let e = dense_eigs(2, &[-a, a, b, -b], &Limits::default()).unwrap();
        assert!((e[0].re + (a + b)).abs() < 1e-12);
        assert!(e[1].norm() < 1e-12);
    }

    #[test]
    fn rotation_has_complex_pair() {
        let e = dense_eigs(2, &[0.0f64, -1.0, 1.0, 0.0], &Limits::default()).unwrap();
        assert!((e[0].im + 1.0).abs() < 1e-12 && (e[1].im - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cap_is_enforced() {
        let limits = Limits {
            max_dense_dim: 2,
            ..Limits::default()
        };
        let err = dense_eigs(3, &[0.0f64; 9], &limits).unwrap_err();
        assert!(err.is_resource_cap());
    }

    #[test]
    fn stationary_of_two_state() {
        let (a, b) = (0.4f64, 1.6);
        let w = SparseGenerator::from_dense(2, &[-a, a, b, -b], Convention::Intensity).unwrap();
        let pi = stationary_dense(&w, &Limits::default()).unwrap();
        assert!((pi[0] - 0.8).abs() < 1e-14 && (pi[1] - 0.2).abs() < 1e-14);
        let pi_h = stationary_dense(&w.negative_transpose(), &Limits::default()).unwrap();
        assert!((pi_h[0] - 0.8).abs() < 1e-14);
    }
}
