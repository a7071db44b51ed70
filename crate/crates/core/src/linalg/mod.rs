//! Graph matrices: Laplacian construction, extreme-eigenvalue estimation,
//! Rayleigh Quotient evaluation, and the dense eigendecomposition oracle.

pub mod dense;
pub mod eigen;
pub mod sparse;

pub use dense::DenseMatrix;
pub use eigen::{
    eigendecompose_dense, eigendecompose_sym, eigendecompose_sym_with_cap, SpectralDecomposition,
    DEFAULT_ORACLE_CAP,
};
pub use sparse::SparseSymMatrix;

use crate::dataset::GraphRecord;
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};
use crate::scalar::Scalar;

/// Guard added to the Rayleigh Quotient denominator so dead feature columns
/// yield zero instead of dividing by zero.
pub const RQ_DENOMINATOR_GUARD: f64 = 1e-12;

/// Which graph Laplacian to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplacianKind {
    /// D - A.
    Regular,
    /// I - D^{-1/2} A D^{-1/2}, with D^{-1/2}_ii = 0 for isolated nodes.
    Normalized,
}

/// Builds the requested Laplacian of an undirected graph.
pub fn build_laplacian<S: Scalar>(
    graph: &GraphRecord<S>,
    kind: LaplacianKind,
) -> SparseSymMatrix<S> {
    let n = graph.node_count;
    let mut degree = vec![0usize; n];
    for &(a, b) in &graph.edges {
        degree[a] += 1;
        degree[b] += 1;
    }
    let mut triplets: Vec<(usize, usize, S)> = Vec::with_capacity(n + 2 * graph.edges.len());
    match kind {
        LaplacianKind::Regular => {
            for (i, &d) in degree.iter().enumerate() {
                if d > 0 {
                    triplets.push((i, i, S::from_usize_lossy(d)));
                }
            }
            for &(a, b) in &graph.edges {
                triplets.push((a, b, -S::one()));
                triplets.push((b, a, -S::one()));
            }
        }
        LaplacianKind::Normalized => {
            let inv_sqrt: Vec<S> = degree
                .iter()
                .map(|&d| {
                    if d == 0 {
                        S::zero()
                    } else {
                        S::one() / S::from_usize_lossy(d).sqrt()
                    }
                })
                .collect();
            for i in 0..n {
                triplets.push((i, i, S::one()));
            }
            for &(a, b) in &graph.edges {
                let w = -inv_sqrt[a] * inv_sqrt[b];
                triplets.push((a, b, w));
                triplets.push((b, a, w));
            }
        }
    }
    SparseSymMatrix::from_triplets(n, &triplets)
        .expect("laplacian construction yields a symmetric pattern")
}

/// Estimates the largest eigenvalue of a positive semidefinite matrix by
/// power iteration from a seeded start vector.
///
/// The returned estimate never exceeds the true largest eigenvalue. When the
/// iteration has not settled to `tol` relative change within `max_iters`, the
/// safe upper bound is returned instead: 2 for the normalized Laplacian,
/// the Gershgorin bound for the regular one.
pub fn lambda_max<S: Scalar>(
    m: &SparseSymMatrix<S>,
    kind: LaplacianKind,
    tol: f64,
    max_iters: usize,
) -> S {
    let n = m.dim();
    if n == 0 {
        return S::zero();
    }
    let fallback = match kind {
        LaplacianKind::Normalized => S::from_f64_lossy(2.0),
        LaplacianKind::Regular => m.gershgorin_bound(),
    };

    let mut rng = Rng::new(0x51ac_7a11).fork(stream::POWER_ITERATION);
    let mut v: Vec<S> = (0..n)
        .map(|_| S::from_f64_lossy(rng.uniform(-1.0, 1.0)))
        .collect();
    let norm = dense::norm2(&v);
    if norm == S::zero() {
        return fallback;
    }
    for x in v.iter_mut() {
        *x /= norm;
    }

    let tol = S::from_f64_lossy(tol);
    let mut w = vec![S::zero(); n];
    let mut estimate = S::zero();
    for iter in 0..max_iters {
        m.matvec(&v, &mut w);
        // Rayleigh Quotient of the unit iterate: always <= lambda_n.
        let next = dense::dot(&v, &w);
        let wn = dense::norm2(&w);
        if wn == S::zero() {
            return S::zero();
        }
        for (vi, &wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
        if iter > 0 && (next - estimate).abs() <= tol * next.abs().max(S::one()) {
            return next;
        }
        estimate = next;
    }
    fallback
}

/// Per-column Rayleigh Quotient of `x` against the symmetric matrix `l`:
/// component f is `x_f^T L x_f / (x_f^T x_f + eps)`.
///
/// Computed from one sparse product, never forming the off-diagonals of
/// `X^T L X`.
pub fn rayleigh_quotient<S: Scalar>(l: &SparseSymMatrix<S>, x: &DenseMatrix<S>) -> Result<Vec<S>> {
    if x.rows() != l.dim() {
        return Err(Error::Shape(format!(
            "signal has {} rows but matrix dimension is {}",
            x.rows(),
            l.dim()
        )));
    }
    let lx = l.matmul_dense(x);
    let eps = S::from_f64_lossy(RQ_DENOMINATOR_GUARD);
    let mut out = vec![S::zero(); x.cols()];
    for (f, component) in out.iter_mut().enumerate() {
        let mut num = S::zero();
        let mut den = S::zero();
        for r in 0..x.rows() {
            let xv = x.get(r, f);
            num += xv * lx.get(r, f);
            den += xv * xv;
        }
        *component = num / (den + eps);
    }
    Ok(out)
}

/// Scalar Rayleigh Quotient of a single signal.
pub fn rayleigh_quotient_vec<S: Scalar>(l: &SparseSymMatrix<S>, x: &[S]) -> Result<S> {
    let m = DenseMatrix::from_vec(x.len(), 1, x.to_vec());
    Ok(rayleigh_quotient(l, &m)?[0])
}
