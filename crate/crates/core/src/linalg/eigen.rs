//! Dense symmetric eigendecomposition by cyclic Jacobi rotations.
//!
//! This is the verification oracle for every spectral claim in the crate. It
//! is O(n^3) per sweep and capped at small dimensions; the training path never
//! calls it.

use crate::error::{Error, Result};
use crate::linalg::dense::DenseMatrix;
use crate::linalg::sparse::SparseSymMatrix;
use crate::scalar::Scalar;

/// Largest dimension the oracle accepts by default.
pub const DEFAULT_ORACLE_CAP: usize = 256;

const MAX_SWEEPS: usize = 100;

/// Ascending eigenvalues with column-orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition<S> {
    pub eigenvalues: Vec<S>,
    pub eigenvectors: DenseMatrix<S>,
}

impl<S: Scalar> SpectralDecomposition<S> {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Column `k` of the eigenvector matrix.
    pub fn eigenvector(&self, k: usize) -> Vec<S> {
        self.eigenvectors.column(k)
    }

    pub fn lambda_min(&self) -> S {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> S {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    /// Spectral norm (largest absolute eigenvalue).
    pub fn spectral_norm(&self) -> S {
        self.eigenvalues
            .iter()
            .fold(S::zero(), |acc, &l| acc.max(l.abs()))
    }

    /// max |U^T U - I|.
    pub fn orthonormality_residual(&self) -> S {
        let u = &self.eigenvectors;
        let gram = u.transpose().matmul(u);
        gram.max_abs_diff(&DenseMatrix::identity(self.dim()))
    }

    /// max |U diag(lambda) U^T - M|.
    pub fn reconstruction_residual(&self, m: &DenseMatrix<S>) -> S {
        let n = self.dim();
        let u = &self.eigenvectors;
        let mut scaled = u.clone();
        for r in 0..n {
            for c in 0..n {
                scaled.set(r, c, u.get(r, c) * self.eigenvalues[c]);
            }
        }
        scaled.matmul(&u.transpose()).max_abs_diff(m)
    }
}

/// Eigendecomposition of a sparse symmetric matrix, densified internally.
pub fn eigendecompose_sym<S: Scalar>(m: &SparseSymMatrix<S>) -> Result<SpectralDecomposition<S>> {
    eigendecompose_sym_with_cap(m, DEFAULT_ORACLE_CAP)
}

pub fn eigendecompose_sym_with_cap<S: Scalar>(
    m: &SparseSymMatrix<S>,
    cap: usize,
) -> Result<SpectralDecomposition<S>> {
    if m.dim() > cap {
        return Err(Error::OracleCapacity { dim: m.dim(), cap });
    }
    eigendecompose_dense(&m.to_dense())
}

/// Cyclic Jacobi sweeps until the off-diagonal Frobenius norm drops below
/// 1e-12 times the Frobenius norm of the input.
pub fn eigendecompose_dense<S: Scalar>(m: &DenseMatrix<S>) -> Result<SpectralDecomposition<S>> {
    let n = m.rows();
    assert_eq!(n, m.cols(), "eigendecomposition needs a square matrix");
    let mut a = m.clone();
    let mut u = DenseMatrix::identity(n);
    let norm = frobenius(&a);
    let target = S::from_f64_lossy(1e-12) * norm;

    if n <= 1 || norm == S::zero() {
        return Ok(sorted(a, u));
    }

    for _ in 0..MAX_SWEEPS {
        if off_diag_frobenius(&a) <= target {
            return Ok(sorted(a, u));
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == S::zero() {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (S::from_f64_lossy(2.0) * apq);
                let t = {
                    let sign = if theta >= S::zero() {
                        S::one()
                    } else {
                        -S::one()
                    };
                    sign / (theta.abs() + (S::one() + theta * theta).sqrt())
                };
                let c = S::one() / (S::one() + t * t).sqrt();
                let s = t * c;
                rotate(&mut a, p, q, c, s);
                for r in 0..n {
                    let urp = u.get(r, p);
                    let urq = u.get(r, q);
                    u.set(r, p, c * urp - s * urq);
                    u.set(r, q, s * urp + c * urq);
                }
            }
        }
    }
    if off_diag_frobenius(&a) <= target {
        return Ok(sorted(a, u));
    }
    Err(Error::Numeric(
        "Jacobi iteration did not converge".to_string(),
    ))
}

/// Applies the rotation G^T A G with G acting on the (p, q) plane.
fn rotate<S: Scalar>(a: &mut DenseMatrix<S>, p: usize, q: usize, c: S, s: S) {
    let n = a.rows();
    let app = a.get(p, p);
    let aqq = a.get(q, q);
    let apq = a.get(p, q);
    let new_pp = c * c * app - S::from_f64_lossy(2.0) * s * c * apq + s * s * aqq;
    let new_qq = s * s * app + S::from_f64_lossy(2.0) * s * c * apq + c * c * aqq;
    a.set(p, p, new_pp);
    a.set(q, q, new_qq);
    a.set(p, q, S::zero());
    a.set(q, p, S::zero());
    for r in 0..n {
        if r == p || r == q {
            continue;
        }
        let arp = a.get(r, p);
        let arq = a.get(r, q);
        let new_rp = c * arp - s * arq;
        let new_rq = s * arp + c * arq;
        a.set(r, p, new_rp);
        a.set(p, r, new_rp);
        a.set(r, q, new_rq);
        a.set(q, r, new_rq);
    }
}

fn frobenius<S: Scalar>(a: &DenseMatrix<S>) -> S {
    a.data().iter().map(|&v| v * v).sum::<S>().sqrt()
}

fn off_diag_frobenius<S: Scalar>(a: &DenseMatrix<S>) -> S {
    let n = a.rows();
    let mut acc = S::zero();
    for r in 0..n {
        for c in 0..n {
            if r != c {
                let v = a.get(r, c);
                acc += v * v;
            }
        }
    }
    acc.sqrt()
}

fn sorted<S: Scalar>(a: DenseMatrix<S>, u: DenseMatrix<S>) -> SpectralDecomposition<S> {
    let n = a.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a.get(i, i)
            .partial_cmp(&a.get(j, j))
            .expect("finite eigenvalues")
    });
    let eigenvalues: Vec<S> = order.iter().map(|&k| a.get(k, k)).collect();
    let mut eigenvectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            eigenvectors.set(r, dst, u.get(r, src));
        }
    }
    SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    }
}
