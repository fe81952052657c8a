//! Independent definiteness checks for synthesized certificates.
//!
//! The eigen-solver here is a plain cyclic Jacobi sweep, deliberately separate
//! from the factorizations used inside the SDP solver so that a verdict does not
//! rely on the same numerical kernel that produced the certificate.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PsdError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix asymmetric: max |M - Mᵀ| = {0}")]
    Asymmetric(f64),
    #[error("eigenvalue {0} is below the clamp threshold")]
    Indefinite(f64),
    #[error("non-finite entry")]
    NonFinite,
}

/// Symmetric part `(M + Mᵀ)/2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute asymmetry relative to the largest entry.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() / scale
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a symmetric matrix.
pub fn eig_sym(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>), PsdError> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(PsdError::NotSquare { rows: n, cols: m.ncols() });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(PsdError::NonFinite);
    }
    let mut a = symmetrize(m);
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        let total: f64 = a.iter().map(|x| x * x).sum();
        if off <= 1e-30 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok((values, vectors))
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> Result<f64, PsdError> {
    let (vals, _) = eig_sym(m)?;
    Ok(vals.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64, PsdError> {
    let (vals, _) = eig_sym(m)?;
    Ok(vals.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Whether the symmetric part has every eigenvalue below `-margin`.
pub fn is_negative_definite(m: &DMatrix<f64>, margin: f64) -> Result<bool, PsdError> {
    Ok(max_eigenvalue(m)? < -margin)
}

pub fn is_positive_definite(m: &DMatrix<f64>, margin: f64) -> Result<bool, PsdError> {
    Ok(min_eigenvalue(m)? > margin)
}

/// Symmetric square root of a positive semidefinite matrix. Eigenvalues in
/// `[-1e-12, 0)` are clamped to zero; anything more negative is an error.
pub fn sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>, PsdError> {
    let (vals, vecs) = eig_sym(m)?;
    let scale = vals.amax().max(1.0);
    let mut roots = DVector::zeros(vals.len());
    for (i, &l) in vals.iter().enumerate() {
        if l < -1e-12 * scale {
            return Err(PsdError::Indefinite(l));
        }
        roots[i] = l.max(0.0).sqrt();
    }
    Ok(&vecs * DMatrix::from_diagonal(&roots) * vecs.transpose())
}

/// Largest real part over the eigenvalues of a general square matrix.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64, PsdError> {
    if m.nrows() != m.ncols() {
        return Err(PsdError::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(PsdError::NonFinite);
    }
    if m.is_empty() {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(m.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}
