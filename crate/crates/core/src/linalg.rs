//! Dense complex helpers shared by the filter and the sensing model.
//!
//! All matrices are `faer::Mat<c64>`. Hermitian inputs are factorized with a
//! lower Cholesky (`LLᴴ`) factor; explicit inverses are only formed where an
//! algorithm needs the matrix itself.

use faer::linalg::solvers::{DenseSolveCore, Llt, Solve};
use faer::{c64, Col, ColRef, Mat, MatRef, Side};

use crate::error::{Error, Result};

pub type CMat = Mat<c64>;
pub type CCol = Col<c64>;

/// Largest entry modulus.
pub fn max_abs(a: MatRef<'_, c64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

/// Largest modulus of `a - aᴴ`.
pub fn hermitian_deviation(a: MatRef<'_, c64>) -> f64 {
    let n = a.nrows();
    let mut m = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

/// Replaces `a` by `(a + aᴴ)/2`.
pub fn hermitize(a: &mut CMat) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    for j in 0..n {
        a[(j, j)] = c64::new(a[(j, j)].re, 0.0);
        for i in (j + 1)..n {
            let avg = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = avg;
            a[(j, i)] = avg.conj();
        }
    }
}

pub(crate) fn ensure_square(a: MatRef<'_, c64>, context: &'static str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            context,
            expected: a.nrows(),
            actual: a.ncols(),
        });
    }
    Ok(())
}

pub(crate) fn ensure_hermitian(a: MatRef<'_, c64>, name: &'static str, tol: f64) -> Result<()> {
    ensure_square(a, name)?;
    let scale = max_abs(a).max(1.0);
    let deviation = hermitian_deviation(a);
    if deviation > tol * scale {
        return Err(Error::NotHermitian { name, deviation });
    }
    Ok(())
}

/// Cholesky factor of a Hermitian positive definite matrix.
pub fn cholesky(a: MatRef<'_, c64>, name: &'static str) -> Result<Llt<c64>> {
    ensure_square(a, name)?;
    a.llt(Side::Lower)
        .map_err(|_| Error::NotPositiveDefinite { name })
}

/// Solves `a x = b` for Hermitian positive definite `a`.
pub fn hpd_solve(a: MatRef<'_, c64>, b: MatRef<'_, c64>, name: &'static str) -> Result<CMat> {
    Ok(cholesky(a, name)?.solve(b))
}

/// Inverse of a Hermitian positive definite matrix, re-symmetrized.
pub fn hpd_inverse(a: MatRef<'_, c64>, name: &'static str) -> Result<CMat> {
    let mut inv = cholesky(a, name)?.inverse();
    hermitize(&mut inv);
    Ok(inv)
}

/// Eigenvalues of a Hermitian matrix in nondecreasing order.
pub fn hermitian_eigenvalues(a: MatRef<'_, c64>) -> Result<Vec<f64>> {
    ensure_square(a, "eigenvalue input")?;
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::Decomposition)
}

pub fn min_eigenvalue(a: MatRef<'_, c64>) -> Result<f64> {
    Ok(hermitian_eigenvalues(a)?
        .first()
        .copied()
        .unwrap_or(f64::INFINITY))
}

/// Largest singular value.
pub fn spectral_norm(a: MatRef<'_, c64>) -> Result<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0.0);
    }
    let s = a.singular_values().map_err(|_| Error::Decomposition)?;
    Ok(s.first().copied().unwrap_or(0.0))
}

/// Kronecker product with row-major multi-indices: entry `((i r),(j s))` sits
/// at row `i·p + r`, column `j·q + s` for a `p×q` right factor.
pub fn kron_product(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    let (p, q) = (b.nrows(), b.ncols());
    Mat::from_fn(a.nrows() * p, a.ncols() * q, |row, col| {
        a[(row / p, col / q)] * b[(row % p, col % q)]
    })
}

pub fn l1_norm(x: ColRef<'_, c64>) -> f64 {
    x.iter().map(|z| z.norm()).sum()
}

pub fn l2_norm(x: ColRef<'_, c64>) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn identity(n: usize) -> CMat {
    Mat::identity(n, n)
}

/// `scale · I`.
pub fn scaled_identity(n: usize, scale: f64) -> CMat {
    Mat::from_fn(n, n, |i, j| {
        if i == j {
            c64::new(scale, 0.0)
        } else {
            c64::new(0.0, 0.0)
        }
    })
}

pub fn diagonal(values: &[f64]) -> CMat {
    let n = values.len();
    Mat::from_fn(n, n, |i, j| {
        if i == j {
            c64::new(values[i], 0.0)
        } else {
            c64::new(0.0, 0.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> c64 {
        c64::new(re, im)
    }

    #[test]
    fn kron_of_identities_is_identity() {
        let k = kron_product(identity(2).as_ref(), identity(3).as_ref());
        assert_eq!(k.nrows(), 6);
        assert!(max_abs((&k - identity(6)).as_ref()) == 0.0);
    }

    #[test]
    fn kron_with_scalar_scales() {
        let a = Mat::from_fn(2, 2, |i, j| if i == j { c(0.0, 0.0) } else { c(1.0, 0.0) });
        let b = Mat::from_fn(1, 1, |_, _| c(2.0, 0.0));
        let k = kron_product(a.as_ref(), b.as_ref());
        assert_eq!(k[(0, 1)], c(2.0, 0.0));
        assert_eq!(k[(1, 0)], c(2.0, 0.0));
        assert_eq!(k[(0, 0)], c(0.0, 0.0));
    }

    #[test]
    fn hermitize_removes_skew_part() {
        let mut a = Mat::from_fn(3, 3, |i, j| c((i + 2 * j) as f64, (i as f64) - (j as f64) + 0.5));
        hermitize(&mut a);
        assert!(hermitian_deviation(a.as_ref()) == 0.0);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let d = diagonal(&[0.5, -3.0, 2.0]);
        assert!((spectral_norm(d.as_ref()).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let d = diagonal(&[1.0, -1.0]);
        assert!(matches!(
            cholesky(d.as_ref(), "d"),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }
}
