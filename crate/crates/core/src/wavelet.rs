//! Chebyshev-approximated graph wavelet bank.
//!
//! A bank of `q` spectral filters, each the kernel `g` re-scaled by a dyadic
//! scale, applied through shifted Chebyshev polynomials of the normalized
//! Laplacian so no eigendecomposition is ever needed on the training path.
//! Wavelet `i` is truncated at order `i * K`, capturing `i * K`-hop
//! neighborhoods. The exact spectral oracle used by the tests lives here too.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SparseSymMatrix, SpectralDecomposition};
use crate::scalar::Scalar;

/// Spectral kernel shapes, evaluated on `[0, lambda_max]` after scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// Band-pass `t * exp(1 - t)`: peaks at 1, vanishes at 0. The default.
    Band,
    /// Constant 1 (identity filter).
    Constant,
    /// Identity map `t` (reproduces the Laplacian itself).
    Linear,
    /// Heat kernel `exp(-t)`.
    Heat,
}

impl Kernel {
    pub fn eval<S: Scalar>(self, t: S) -> S {
        match self {
            Kernel::Band => t * (S::one() - t).exp(),
            Kernel::Constant => S::one(),
            Kernel::Linear => t,
            Kernel::Heat => (-t).exp(),
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Kernel::Band => "band",
            Kernel::Constant => "constant",
            Kernel::Linear => "linear",
            Kernel::Heat => "heat",
        }
    }

    pub fn parse(id: &str) -> Result<Self> {
        match id {
            "band" => Ok(Kernel::Band),
            "constant" => Ok(Kernel::Constant),
            "linear" => Ok(Kernel::Linear),
            "heat" => Ok(Kernel::Heat),
            other => Err(Error::Config(format!("unknown kernel id {other:?}"))),
        }
    }
}

/// Default quadrature resolution for coefficient integrals.
pub const DEFAULT_QUAD_POINTS: usize = 512;

/// Chebyshev coefficients of the scaled kernel on `[0, lambda_max]` by the
/// composite midpoint rule:
/// `c_k = (2/Q) * sum_m cos(k theta_m) g(scale * lambda_max (cos theta_m + 1) / 2)`
/// with `theta_m = pi (m + 1/2) / Q`. Entry 0 is halved at application time.
pub fn chebyshev_coefficients<S: Scalar>(
    kernel: Kernel,
    scale: S,
    order: usize,
    lambda_max: S,
    quad_points: usize,
) -> Result<Vec<S>> {
    if scale <= S::zero() {
        return Err(Error::Config(format!("scale {scale} must be positive")));
    }
    if lambda_max <= S::zero() {
        return Err(Error::Config(format!(
            "lambda_max {lambda_max} must be positive"
        )));
    }
    if quad_points < 64.max(4 * order) {
        return Err(Error::Config(format!(
            "quad_points {quad_points} below minimum {}",
            64.max(4 * order)
        )));
    }
    let q = quad_points;
    let half = S::from_f64_lossy(0.5);
    let pi = S::PI();
    // Kernel values at the quadrature nodes are shared by every order k.
    let mut nodes = Vec::with_capacity(q);
    for m in 0..q {
        let theta = pi * (S::from_usize_lossy(m) + half) / S::from_usize_lossy(q);
        let lambda = lambda_max * (theta.cos() + S::one()) * half;
        nodes.push((theta, kernel.eval(scale * lambda)));
    }
    let norm = S::from_f64_lossy(2.0) / S::from_usize_lossy(q);
    let mut coeffs = Vec::with_capacity(order + 1);
    for k in 0..=order {
        let k_s = S::from_usize_lossy(k);
        let mut acc = S::zero();
        for &(theta, g) in &nodes {
            acc += (k_s * theta).cos() * g;
        }
        coeffs.push(norm * acc);
    }
    Ok(coeffs)
}

/// Applies the truncated Chebyshev filter
/// `(1/2) c_0 X + sum_k c_k Tbar_k(L) X` where `Tbar` are the Chebyshev
/// polynomials shifted onto `[0, lambda_max]`:
/// `Tbar_1(L) X = (2/lambda_max) L X - X` and
/// `Tbar_k = (4/lambda_max) L Tbar_{k-1} - 2 Tbar_{k-1} - Tbar_{k-2}`.
///
/// Never materializes a dense polynomial of `L`; cost is
/// O(order * (edges + nodes) * columns).
pub fn apply_chebyshev_filter<S: Scalar>(
    l_norm: &SparseSymMatrix<S>,
    x: &DenseMatrix<S>,
    coeffs: &[S],
    lambda_max: S,
) -> Result<DenseMatrix<S>> {
    if coeffs.is_empty() {
        return Err(Error::Config(
            "filter needs at least one coefficient".into(),
        ));
    }
    if lambda_max <= S::zero() {
        return Err(Error::Config(format!(
            "lambda_max {lambda_max} must be positive"
        )));
    }
    if x.rows() != l_norm.dim() {
        return Err(Error::Shape(format!(
            "signal has {} rows for a {} dimensional operator",
            x.rows(),
            l_norm.dim()
        )));
    }
    let half = S::from_f64_lossy(0.5);
    let two = S::from_f64_lossy(2.0);
    let mut acc = x.scale(half * coeffs[0]);
    if coeffs.len() == 1 {
        return Ok(acc);
    }

    let inv = two / lambda_max;
    // T1 = (2/lambda_max) L X - X
    let mut prev = x.clone();
    let mut curr = l_norm.matmul_dense(x).scale(inv).sub(x);
    acc.axpy(coeffs[1], &curr);
    for &c in &coeffs[2..] {
        let mut next = l_norm.matmul_dense(&curr).scale(two * inv);
        next.axpy(-two, &curr);
        next.axpy(-S::one(), &prev);
        acc.axpy(c, &next);
        prev = curr;
        curr = next;
    }
    Ok(acc)
}

/// A concrete wavelet bank: kernel, dyadic scales, and the precomputed
/// Chebyshev coefficients for one spectrum bound. Wavelet `i` (1-based)
/// carries `i * K + 1` coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaveletBank<S> {
    pub q: usize,
    #[serde(rename = "K")]
    pub base_order: usize,
    pub lambda_max: S,
    pub kernel_id: Kernel,
    pub scales: Vec<S>,
    pub coefficients: Vec<Vec<S>>,
}

impl<S: Scalar> WaveletBank<S> {
    /// Builds the bank for a given spectrum bound. Scales are
    /// `2^{i-2} * (2 / lambda_max)` for wavelet `i`, so the kernel peaks sweep
    /// `lambda_max * {1, 1/2, 1/4, ...}` from the top of the spectrum down.
    pub fn build(
        kernel: Kernel,
        q: usize,
        base_order: usize,
        lambda_max: S,
        quad_points: usize,
    ) -> Result<Self> {
        if q == 0 || base_order == 0 {
            return Err(Error::Config(
                "wavelet count and base order must be positive".into(),
            ));
        }
        let two = S::from_f64_lossy(2.0);
        let mut scales = Vec::with_capacity(q);
        let mut coefficients = Vec::with_capacity(q);
        for i in 1..=q {
            let scale = S::from_f64_lossy(2f64.powi(i as i32 - 2)) * (two / lambda_max);
            let order = i * base_order;
            coefficients.push(chebyshev_coefficients(
                kernel,
                scale,
                order,
                lambda_max,
                quad_points.max(4 * order),
            )?);
            scales.push(scale);
        }
        Ok(WaveletBank {
            q,
            base_order,
            lambda_max,
            kernel_id: kernel,
            scales,
            coefficients,
        })
    }

    /// Output column count for `d` input columns.
    pub fn output_dim(&self, d: usize) -> usize {
        self.q * d
    }
}

/// Filters `x` with every wavelet in the bank and concatenates the results
/// column-blockwise in wavelet order: the output is `n x (q d)`.
pub fn wavelet_features<S: Scalar>(
    l_norm: &SparseSymMatrix<S>,
    x: &DenseMatrix<S>,
    bank: &WaveletBank<S>,
) -> Result<DenseMatrix<S>> {
    let mut parts = Vec::with_capacity(bank.q);
    for coeffs in &bank.coefficients {
        parts.push(apply_chebyshev_filter(l_norm, x, coeffs, bank.lambda_max)?);
    }
    let refs: Vec<&DenseMatrix<S>> = parts.iter().collect();
    Ok(DenseMatrix::hconcat(&refs))
}

/// Ground-truth spectral filter `U diag(g(scale * lambda_j)) U^T x`, computed
/// densely from an eigendecomposition of the same normalized Laplacian.
pub fn exact_filter_oracle<S: Scalar>(
    decomp: &SpectralDecomposition<S>,
    x: &DenseMatrix<S>,
    kernel: Kernel,
    scale: S,
) -> Result<DenseMatrix<S>> {
    let n = decomp.dim();
    if x.rows() != n {
        return Err(Error::Shape(format!(
            "signal has {} rows for a {n} dimensional decomposition",
            x.rows()
        )));
    }
    let mut projected = decomp.eigenvectors.transpose().matmul(x);
    for (j, &lambda) in decomp.eigenvalues.iter().enumerate() {
        let g = kernel.eval(scale * lambda);
        for v in projected.row_mut(j) {
            *v *= g;
        }
    }
    Ok(decomp.eigenvectors.matmul(&projected))
}

/// Builds and caches banks keyed by the per-graph spectrum bound rounded up
/// to two decimals, so graphs with near-identical spectra share coefficients.
#[derive(Debug, Clone)]
pub struct BankBuilder<S> {
    kernel: Kernel,
    q: usize,
    base_order: usize,
    quad_points: usize,
    cache: HashMap<i64, Arc<WaveletBank<S>>>,
}

impl<S: Scalar> BankBuilder<S> {
    pub fn new(kernel: Kernel, q: usize, base_order: usize, quad_points: usize) -> Self {
        BankBuilder {
            kernel,
            q,
            base_order,
            quad_points,
            cache: HashMap::new(),
        }
    }

    /// Rounds the spectrum bound up to two decimals; rounding up keeps the
    /// Chebyshev domain covering the whole spectrum.
    pub fn bank_for(&mut self, lambda_max: S) -> Result<Arc<WaveletBank<S>>> {
        let raw = lambda_max.to_f64_lossy();
        if raw.is_nan() || raw <= 0.0 {
            return Err(Error::Config(format!("non-positive spectrum bound {raw}")));
        }
        let key = (raw * 100.0).ceil() as i64;
        if let Some(bank) = self.cache.get(&key) {
            return Ok(Arc::clone(bank));
        }
        let bank = Arc::new(WaveletBank::build(
            self.kernel,
            self.q,
            self.base_order,
            S::from_f64_lossy(key as f64 / 100.0),
            self.quad_points,
        )?);
        self.cache.insert(key, Arc::clone(&bank));
        Ok(bank)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::GraphRecord;
    use crate::linalg::{build_laplacian, eigendecompose_sym, lambda_max, LaplacianKind};
    use crate::rng::Rng;

    fn random_graph(rng: &mut Rng, n: usize, p: f64) -> GraphRecord<f64> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.next_f64() < p {
                    edges.push((i, j));
                }
            }
        }
        GraphRecord::new(n, edges, DenseMatrix::zeros(n, 1), 0).unwrap()
    }

    fn random_features(rng: &mut Rng, n: usize, d: usize) -> DenseMatrix<f64> {
        let data: Vec<f64> = (0..n * d).map(|_| rng.normal()).collect();
        DenseMatrix::from_vec(n, d, data)
    }

    #[test]
    fn constant_kernel_coefficients() {
        let c = chebyshev_coefficients::<f64>(Kernel::Constant, 1.0, 8, 2.0, 128).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-12);
        for &v in &c[1..] {
            assert!(v.abs() <= 1e-10);
        }
    }

    #[test]
    fn linear_kernel_reconstructs_the_laplacian() {
        let c = chebyshev_coefficients::<f64>(Kernel::Linear, 1.0, 6, 2.0, 128).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-10);
        assert!((c[1] - 1.0).abs() < 1e-10);
        for &v in &c[2..] {
            assert!(v.abs() <= 1e-10);
        }
        let mut rng = Rng::new(2);
        let g = random_graph(&mut rng, 7, 0.5);
        let l = build_laplacian(&g, LaplacianKind::Normalized);
        let x = random_features(&mut rng, 7, 3);
        let filtered = apply_chebyshev_filter(&l, &x, &c, 2.0).unwrap();
        let direct = l.matmul_dense(&x);
        assert!(filtered.max_abs_diff(&direct) < 1e-9);
    }

    #[test]
    fn identity_filter_passes_signal_through() {
        let mut rng = Rng::new(3);
        let g = random_graph(&mut rng, 5, 0.6);
        let l = build_laplacian(&g, LaplacianKind::Normalized);
        let x = random_features(&mut rng, 5, 2);
        let out = apply_chebyshev_filter(&l, &x, &[2.0], 2.0).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn edgeless_graph_scales_by_kernel_at_one() {
        let g = GraphRecord::new(4, vec![], DenseMatrix::<f64>::zeros(4, 1), 0).unwrap();
        let l = build_laplacian(&g, LaplacianKind::Normalized);
        let mut rng = Rng::new(4);
        let x = random_features(&mut rng, 4, 3);
        let c = chebyshev_coefficients(Kernel::Band, 1.0, 12, 1.0, 256).unwrap();
        let out = apply_chebyshev_filter(&l, &x, &c, 1.0).unwrap();
        let expected = x.scale(Kernel::Band.eval(1.0));
        assert!(out.max_abs_diff(&expected) < 1e-10);
    }

    #[test]
    fn filter_matches_exact_oracle_at_order_24() {
        let mut rng = Rng::new(5);
        for _ in 0..10 {
            let n = 4 + rng.below(13);
            let g = random_graph(&mut rng, n, 0.4);
            let l = build_laplacian(&g, LaplacianKind::Normalized);
            let lm = lambda_max(&l, LaplacianKind::Normalized, 1e-10, 2000);
            let d = eigendecompose_sym(&l).unwrap();
            let x = random_features(&mut rng, n, 2);
            let c = chebyshev_coefficients(Kernel::Band, 1.0, 24, lm, 256).unwrap();
            let approx = apply_chebyshev_filter(&l, &x, &c, lm).unwrap();
            let exact = exact_filter_oracle(&d, &x, Kernel::Band, 1.0).unwrap();
            assert!(
                approx.max_abs_diff(&exact) <= 1e-6,
                "error {}",
                approx.max_abs_diff(&exact)
            );
        }
    }

    #[test]
    fn oracle_error_is_monotone_in_order() {
        let mut rng = Rng::new(6);
        for _ in 0..10 {
            let n = 4 + rng.below(13);
            let g = random_graph(&mut rng, n, 0.4);
            let l = build_laplacian(&g, LaplacianKind::Normalized);
            let lm = lambda_max(&l, LaplacianKind::Normalized, 1e-10, 2000);
            let d = eigendecompose_sym(&l).unwrap();
            let x = random_features(&mut rng, n, 2);
            let exact = exact_filter_oracle(&d, &x, Kernel::Band, 1.0).unwrap();
            let err = |order: usize| -> f64 {
                let c = chebyshev_coefficients(Kernel::Band, 1.0, order, lm, 256).unwrap();
                apply_chebyshev_filter(&l, &x, &c, lm)
                    .unwrap()
                    .max_abs_diff(&exact)
            };
            let (e6, e12, e24) = (err(6), err(12), err(24));
            assert!(e24 <= e12 + 1e-12, "e24 {e24} e12 {e12}");
            assert!(e12 <= e6 + 1e-12, "e12 {e12} e6 {e6}");
        }
    }

    #[test]
    fn filter_is_linear() {
        let mut rng = Rng::new(7);
        let g = random_graph(&mut rng, 9, 0.4);
        let l = build_laplacian(&g, LaplacianKind::Normalized);
        let lm = lambda_max(&l, LaplacianKind::Normalized, 1e-10, 2000);
        let c = chebyshev_coefficients(Kernel::Band, 0.7, 10, lm, 256).unwrap();
        let x = random_features(&mut rng, 9, 2);
        let y = random_features(&mut rng, 9, 2);
        let (a, b) = (1.7, -0.4);
        let combined = apply_chebyshev_filter(&l, &x.scale(a).add(&y.scale(b)), &c, lm).unwrap();
        let mut separate = apply_chebyshev_filter(&l, &x, &c, lm).unwrap().scale(a);
        separate.axpy(b, &apply_chebyshev_filter(&l, &y, &c, lm).unwrap());
        let scale = combined.max_abs().max(1.0);
        assert!(combined.max_abs_diff(&separate) / scale < 1e-10);
    }

    #[test]
    fn order_k_filter_sees_exactly_k_hops() {
        // Path on 8 nodes, impulse at node 0: entries beyond graph distance k
        // are exactly zero.
        let n = 8;
        let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let g = GraphRecord::new(n, edges, DenseMatrix::<f64>::zeros(n, 1), 0).unwrap();
        let l = build_laplacian(&g, LaplacianKind::Normalized);
        let mut x = DenseMatrix::zeros(n, 1);
        x.set(0, 0, 1.0);
        let order = 3;
        let c = chebyshev_coefficients(Kernel::Band, 1.0, order, 2.0, 256).unwrap();
        let out = apply_chebyshev_filter(&l, &x, &c, 2.0).unwrap();
        for node in 0..n {
            if node > order {
                assert_eq!(out.get(node, 0), 0.0, "node {node}");
            }
        }
        assert!(out.get(order, 0) != 0.0);
    }

    #[test]
    fn band_kernel_coefficients_match_frozen_high_precision_quadrature() {
        // Reference values from a 10^4-point midpoint rule.
        let reference = [
            1.401_813_547_519_047,
            2.714_953_395_340_769e-1,
            -3.158_321_893_827_399_4e-1,
            9.414_794_013_942_214e-2,
            -1.696_564_763_819_548_3e-2,
            2.216_682_570_609_357_3e-3,
            -2.280_850_512_336_808e-4,
        ];
        let c =
            chebyshev_coefficients::<f64>(Kernel::Band, 1.0, 6, 2.0, DEFAULT_QUAD_POINTS).unwrap();
        for (got, want) in c.iter().zip(&reference) {
            assert!((got - want).abs() < 1e-9, "got {got} want {want}");
        }
    }

    #[test]
    fn doubling_quadrature_points_barely_moves_coefficients() {
        for order in [6usize, 24] {
            let base = chebyshev_coefficients::<f64>(Kernel::Band, 1.3, order, 2.0, 512).unwrap();
            let fine = chebyshev_coefficients::<f64>(Kernel::Band, 1.3, order, 2.0, 1024).unwrap();
            for (a, b) in base.iter().zip(&fine) {
                assert!((a - b).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn bank_shapes_and_scales() {
        let bank = WaveletBank::<f64>::build(Kernel::Band, 4, 6, 2.0, 512).unwrap();
        assert_eq!(bank.coefficients.len(), 4);
        for (i, c) in bank.coefficients.iter().enumerate() {
            assert_eq!(c.len(), (i + 1) * 6 + 1);
        }
        for w in bank.scales.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert_eq!(bank.scales, vec![0.5, 1.0, 2.0, 4.0]);
        assert_eq!(bank.output_dim(64), 256);
    }

    #[test]
    fn bank_serializes_to_json_and_back() {
        let bank = WaveletBank::<f64>::build(Kernel::Band, 2, 3, 2.0, 512).unwrap();
        let text = serde_json::to_string(&bank).unwrap();
        assert!(text.contains("\"kernel_id\":\"band\""));
        assert!(text.contains("\"K\":3"));
        let back: WaveletBank<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back.coefficients, bank.coefficients);
        assert_eq!(back.scales, bank.scales);
    }

    #[test]
    fn wavelet_features_concatenate_blockwise() {
        let mut rng = Rng::new(8);
        let g = random_graph(&mut rng, 6, 0.5);
        let l = build_laplacian(&g, LaplacianKind::Normalized);
        let lm = lambda_max(&l, LaplacianKind::Normalized, 1e-9, 1000);
        let bank = WaveletBank::build(Kernel::Band, 3, 2, lm, 512).unwrap();
        let x = random_features(&mut rng, 6, 4);
        let feats = wavelet_features(&l, &x, &bank).unwrap();
        assert_eq!(feats.cols(), 12);
        let first = apply_chebyshev_filter(&l, &x, &bank.coefficients[0], bank.lambda_max).unwrap();
        for r in 0..6 {
            assert_eq!(&feats.row(r)[..4], first.row(r));
        }
        let zero = wavelet_features(&l, &DenseMatrix::zeros(6, 4), &bank).unwrap();
        assert!(zero.max_abs() == 0.0);
    }

    #[test]
    fn bank_builder_caches_by_rounded_bound() {
        let mut builder = BankBuilder::<f64>::new(Kernel::Band, 2, 2, 512);
        let a = builder.bank_for(1.871).unwrap();
        let b = builder.bank_for(1.8703).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert!((a.lambda_max - 1.88).abs() < 1e-12);
        let c = builder.bank_for(2.0).unwrap();
        assert_eq!(c.lambda_max, 2.0);
        assert!(builder.bank_for(0.0).is_err());
    }

    #[test]
    fn unknown_kernel_id_is_rejected() {
        assert!(Kernel::parse("band").is_ok());
        assert!(matches!(Kernel::parse("nope"), Err(Error::Config(_))));
    }
}
