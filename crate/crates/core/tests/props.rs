//! Property tests for the library's structural invariants.

use proptest::prelude::*;

use rqgnn::dataset::{parse_tudataset, write_tudataset, Dataset, GraphRecord};
use rqgnn::linalg::{
    build_laplacian, eigendecompose_sym, rayleigh_quotient, rayleigh_quotient_vec, DenseMatrix,
    LaplacianKind,
};
use rqgnn::metrics::auc;
use rqgnn::spectral::energy_profile;
use rqgnn::train::{cb_focal_loss, expected_number, LossConfig};
use rqgnn::wavelet::{apply_chebyshev_filter, chebyshev_coefficients, Kernel};

/// Graph from a node count and an edge-presence bitmask over node pairs.
fn graph_from_mask(n: usize, mask: u64, feature_dim: usize) -> GraphRecord<f64> {
    let mut edges = Vec::new();
    let mut bit = 0;
    for i in 0..n {
        for j in i + 1..n {
            if mask >> (bit % 64) & 1 == 1 {
                edges.push((i, j));
            }
            bit += 1;
        }
    }
    let mut features = DenseMatrix::zeros(n, feature_dim);
    for r in 0..n {
        features.set(r, r % feature_dim, 1.0);
    }
    GraphRecord::new(n, edges, features, 0).unwrap()
}

fn signal_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-3.0f64..3.0, n..=n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rayleigh_quotient_is_scale_invariant(
        n in 2usize..10,
        mask in any::<u64>(),
        scale in prop::sample::select(vec![-7.5f64, -1.0, 0.25, 3.0, 1e3]),
        x in signal_strategy(10),
    ) {
        let g = graph_from_mask(n, mask, 2);
        let l = build_laplacian(&g, LaplacianKind::Regular);
        let x = DenseMatrix::from_vec(n, 1, x[..n].to_vec());
        let base = rayleigh_quotient(&l, &x).unwrap()[0];
        let scaled = rayleigh_quotient(&l, &x.scale(scale)).unwrap()[0];
        prop_assert!((base - scaled).abs() <= 1e-10 * base.abs().max(1.0));
    }

    #[test]
    fn rayleigh_quotient_lies_in_the_spectrum(
        n in 2usize..9,
        mask in any::<u64>(),
        x in signal_strategy(9),
    ) {
        let g = graph_from_mask(n, mask, 2);
        let l = build_laplacian(&g, LaplacianKind::Regular);
        let d = eigendecompose_sym(&l).unwrap();
        let x = &x[..n];
        prop_assume!(x.iter().any(|v| v.abs() > 1e-6));
        let rq = rayleigh_quotient_vec(&l, x).unwrap();
        prop_assert!(rq >= d.lambda_min() - 1e-9);
        prop_assert!(rq <= d.lambda_max() + 1e-9);
    }

    #[test]
    fn laplacians_are_psd_and_normalized_spectrum_capped(
        n in 2usize..9,
        mask in any::<u64>(),
    ) {
        let g = graph_from_mask(n, mask, 2);
        for kind in [LaplacianKind::Regular, LaplacianKind::Normalized] {
            let l = build_laplacian(&g, kind);
            let d = eigendecompose_sym(&l).unwrap();
            prop_assert!(d.lambda_min() >= -1e-10);
            if kind == LaplacianKind::Normalized {
                prop_assert!(d.lambda_max() <= 2.0 + 1e-10);
            }
        }
    }

    #[test]
    fn spectral_energies_always_normalize(
        n in 2usize..9,
        mask in any::<u64>(),
        x in signal_strategy(9),
    ) {
        let g = graph_from_mask(n, mask, 2);
        let l = build_laplacian(&g, LaplacianKind::Regular);
        let d = eigendecompose_sym(&l).unwrap();
        let x = &x[..n];
        prop_assume!(x.iter().any(|v| v.abs() > 1e-6));
        let profile = energy_profile(&d, x).unwrap();
        prop_assert!((profile.total() - 1.0).abs() <= 1e-10);
        prop_assert!(profile.energies.iter().all(|&e| e >= 0.0));
    }

    #[test]
    fn chebyshev_filter_is_linear(
        n in 3usize..8,
        mask in any::<u64>(),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let g = graph_from_mask(n, mask, 2);
        let l = build_laplacian(&g, LaplacianKind::Normalized);
        let coeffs = chebyshev_coefficients(Kernel::Band, 1.0, 8, 2.0, 128).unwrap();
        let x = DenseMatrix::from_vec(n, 1, (0..n).map(|i| (i as f64).sin()).collect());
        let y = DenseMatrix::from_vec(n, 1, (0..n).map(|i| (i as f64 + 0.5).cos()).collect());
        let combined =
            apply_chebyshev_filter(&l, &x.scale(a).add(&y.scale(b)), &coeffs, 2.0).unwrap();
        let mut parts = apply_chebyshev_filter(&l, &x, &coeffs, 2.0).unwrap().scale(a);
        parts.axpy(b, &apply_chebyshev_filter(&l, &y, &coeffs, 2.0).unwrap());
        prop_assert!(combined.max_abs_diff(&parts) <= 1e-10 * combined.max_abs().max(1.0));
    }

    #[test]
    fn tudataset_round_trip_is_identity(
        seed in any::<u64>(),
        graphs in 2usize..6,
    ) {
        let mut records = Vec::new();
        let mut state = seed;
        for g in 0..graphs {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            // Parsed datasets have every feature column inhabited (the vocab
            // comes from the file), so keep n >= 3: features cycle 3 labels.
            let n = 3 + (state >> 33) as usize % 4;
            let record = graph_from_mask(n, state, 3);
            let record = GraphRecord::new(
                record.node_count,
                record.edges.clone(),
                record.features.clone(),
                u8::from(g == 0),
            )
            .unwrap();
            records.push(record);
        }
        let data = Dataset::new(records).unwrap();
        let dir = std::env::temp_dir().join(format!(
            "rqgnn-prop-{}-{}",
            std::process::id(),
            seed
        ));
        write_tudataset(&data, &dir, "prop").unwrap();
        let reparsed: Dataset<f64> = parse_tudataset(&dir, "prop").unwrap();
        std::fs::remove_dir_all(&dir).ok();
        // Anomalous stays the minority class here, so labels survive.
        prop_assert_eq!(data, reparsed);
    }

    #[test]
    fn auc_survives_monotone_transforms(
        scores in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 4..40),
        shift in -3.0f64..3.0,
    ) {
        let positives = scores.iter().filter(|(_, a)| *a).count();
        prop_assume!(positives > 0 && positives < scores.len());
        let base = auc(&scores).unwrap();
        let transformed: Vec<(f64, bool)> = scores
            .iter()
            .map(|&(s, a)| ((3.0 * s + shift).exp(), a))
            .collect();
        prop_assert!((auc(&transformed).unwrap() - base).abs() <= 1e-12);
    }

    #[test]
    fn focal_loss_is_positive_and_monotone(
        margin in -6.0f64..6.0,
        gamma in prop::sample::select(vec![0.0f64, 0.5, 1.5, 2.0]),
    ) {
        let cfg = LossConfig::new(0.99, gamma, (20, 5)).unwrap();
        let loss = cb_focal_loss([0.0, margin], 1, &cfg);
        prop_assert!(loss > 0.0);
        let better = cb_focal_loss([0.0, margin + 0.5], 1, &cfg);
        prop_assert!(better < loss);
    }

    #[test]
    fn expected_number_satisfies_the_recurrence(
        beta in prop::sample::select(vec![0.0f64, 0.5, 0.9, 0.999]),
        k in 2usize..500,
    ) {
        let closed = expected_number(k, beta).unwrap();
        let previous = expected_number(k - 1, beta).unwrap();
        let recurrence = 1.0 + beta * previous;
        prop_assert!((closed - recurrence).abs() <= 1e-9 * recurrence.abs());
    }
}
