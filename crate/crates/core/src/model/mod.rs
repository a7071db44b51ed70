//! The anomaly-detection model: a shared feature MLP feeding an explicit
//! Rayleigh Quotient branch and a Chebyshev wavelet branch pooled by RQ
//! attention, concatenated through batch normalization into a two-class head.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};

use std::sync::Arc;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{
    build_laplacian, lambda_max, rayleigh_quotient, DenseMatrix, LaplacianKind, SparseSymMatrix,
};
use crate::rng::{stream, Rng};
use crate::scalar::Scalar;
use crate::wavelet::{wavelet_features, BankBuilder, Kernel, WaveletBank, DEFAULT_QUAD_POINTS};

/// Batch-normalization variance guard.
pub const BN_EPS: f64 = 1e-5;
/// Momentum for the running batch-norm statistics.
pub const BN_MOMENTUM: f64 = 0.9;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Input feature dimension F.
    pub feature_dim: usize,
    /// Hidden dimension d.
    pub hidden_dim: usize,
    /// Wavelet count q.
    pub wavelets: usize,
    /// Chebyshev base order K; wavelet i is truncated at i * K.
    pub base_order: usize,
    pub kernel: Kernel,
    pub quad_points: usize,
}

impl ModelConfig {
    pub fn new(feature_dim: usize, hidden_dim: usize, wavelets: usize, base_order: usize) -> Self {
        ModelConfig {
            feature_dim,
            hidden_dim,
            wavelets,
            base_order,
            kernel: Kernel::Band,
            quad_points: DEFAULT_QUAD_POINTS,
        }
    }

    /// Width of the concatenated embedding `q * d + d`.
    pub fn embedding_dim(&self) -> usize {
        self.wavelets * self.hidden_dim + self.hidden_dim
    }
}

/// One dense layer, weight `in x out` plus a bias row.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<S> {
    pub weight: DenseMatrix<S>,
    pub bias: DenseMatrix<S>,
}

impl<S: Scalar> Layer<S> {
    fn init(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Self {
        let bound = (1.0 / fan_in as f64).sqrt();
        let weight = DenseMatrix::from_vec(
            fan_in,
            fan_out,
            (0..fan_in * fan_out)
                .map(|_| S::from_f64_lossy(rng.uniform(-bound, bound)))
                .collect(),
        );
        let bias = DenseMatrix::from_vec(
            1,
            fan_out,
            (0..fan_out)
                .map(|_| S::from_f64_lossy(rng.uniform(-bound, bound)))
                .collect(),
        );
        Layer { weight, bias }
    }

    pub fn apply(&self, x: &DenseMatrix<S>) -> DenseMatrix<S> {
        x.matmul(&self.weight).add_row_bias(self.bias.row(0))
    }
}

/// Batch-normalization state over the concatenated embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<S> {
    pub gamma: DenseMatrix<S>,
    pub beta: DenseMatrix<S>,
    pub running_mean: Vec<S>,
    pub running_var: Vec<S>,
}

impl<S: Scalar> BatchNormState<S> {
    fn init(dim: usize) -> Self {
        BatchNormState {
            gamma: DenseMatrix::from_vec(1, dim, vec![S::one(); dim]),
            beta: DenseMatrix::zeros(1, dim),
            running_mean: vec![S::zero(); dim],
            running_var: vec![S::one(); dim],
        }
    }

    /// Folds freshly observed batch statistics into the running estimates.
    pub fn update_running(&mut self, batch_mean: &[S], batch_var: &[S]) {
        let momentum = S::from_f64_lossy(BN_MOMENTUM);
        let rest = S::one() - momentum;
        for (r, &b) in self.running_mean.iter_mut().zip(batch_mean) {
            *r = momentum * *r + rest * b;
        }
        for (r, &b) in self.running_var.iter_mut().zip(batch_var) {
            *r = momentum * *r + rest * b;
        }
    }
}

/// Identifies one learnable tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ParamId {
    Feat1Weight,
    Feat1Bias,
    Feat2Weight,
    Feat2Bias,
    Rq1Weight,
    Rq1Bias,
    Rq2Weight,
    Rq2Bias,
    Head1Weight,
    Head1Bias,
    Head2Weight,
    Head2Bias,
    BnGamma,
    BnBeta,
}

impl ParamId {
    pub const ALL: [ParamId; 14] = [
        ParamId::Feat1Weight,
        ParamId::Feat1Bias,
        ParamId::Feat2Weight,
        ParamId::Feat2Bias,
        ParamId::Rq1Weight,
        ParamId::Rq1Bias,
        ParamId::Rq2Weight,
        ParamId::Rq2Bias,
        ParamId::Head1Weight,
        ParamId::Head1Bias,
        ParamId::Head2Weight,
        ParamId::Head2Bias,
        ParamId::BnGamma,
        ParamId::BnBeta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamId::Feat1Weight => "feat1.weight",
            ParamId::Feat1Bias => "feat1.bias",
            ParamId::Feat2Weight => "feat2.weight",
            ParamId::Feat2Bias => "feat2.bias",
            ParamId::Rq1Weight => "rq1.weight",
            ParamId::Rq1Bias => "rq1.bias",
            ParamId::Rq2Weight => "rq2.weight",
            ParamId::Rq2Bias => "rq2.bias",
            ParamId::Head1Weight => "head1.weight",
            ParamId::Head1Bias => "head1.bias",
            ParamId::Head2Weight => "head2.weight",
            ParamId::Head2Bias => "head2.bias",
            ParamId::BnGamma => "bn.gamma",
            ParamId::BnBeta => "bn.beta",
        }
    }
}

/// All learnable tensors plus the batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S> {
    pub config: ModelConfig,
    pub feat1: Layer<S>,
    pub feat2: Layer<S>,
    pub rq1: Layer<S>,
    pub rq2: Layer<S>,
    pub head1: Layer<S>,
    pub head2: Layer<S>,
    pub bn: BatchNormState<S>,
}

impl<S: Scalar> ModelParams<S> {
    /// Seeded uniform init, bound `sqrt(1 / fan_in)` per layer.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let root = Rng::new(seed).fork(stream::INIT);
        let (f, d) = (config.feature_dim, config.hidden_dim);
        let z = config.embedding_dim();
        let layer = |idx: u64, fan_in: usize, fan_out: usize| {
            Layer::init(&mut root.fork(idx), fan_in, fan_out)
        };
        ModelParams {
            config: *config,
            feat1: layer(0, f, d),
            feat2: layer(1, d, d),
            rq1: layer(2, d, d),
            rq2: layer(3, d, d),
            head1: layer(4, z, d),
            head2: layer(5, d, 2),
            bn: BatchNormState::init(z),
        }
    }

    pub fn tensor(&self, id: ParamId) -> &DenseMatrix<S> {
        match id {
            ParamId::Feat1Weight => &self.feat1.weight,
            ParamId::Feat1Bias => &self.feat1.bias,
            ParamId::Feat2Weight => &self.feat2.weight,
            ParamId::Feat2Bias => &self.feat2.bias,
            ParamId::Rq1Weight => &self.rq1.weight,
            ParamId::Rq1Bias => &self.rq1.bias,
            ParamId::Rq2Weight => &self.rq2.weight,
            ParamId::Rq2Bias => &self.rq2.bias,
            ParamId::Head1Weight => &self.head1.weight,
            ParamId::Head1Bias => &self.head1.bias,
            ParamId::Head2Weight => &self.head2.weight,
            ParamId::Head2Bias => &self.head2.bias,
            ParamId::BnGamma => &self.bn.gamma,
            ParamId::BnBeta => &self.bn.beta,
        }
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut DenseMatrix<S> {
        match id {
            ParamId::Feat1Weight => &mut self.feat1.weight,
            ParamId::Feat1Bias => &mut self.feat1.bias,
            ParamId::Feat2Weight => &mut self.feat2.weight,
            ParamId::Feat2Bias => &mut self.feat2.bias,
            ParamId::Rq1Weight => &mut self.rq1.weight,
            ParamId::Rq1Bias => &mut self.rq1.bias,
            ParamId::Rq2Weight => &mut self.rq2.weight,
            ParamId::Rq2Bias => &mut self.rq2.bias,
            ParamId::Head1Weight => &mut self.head1.weight,
            ParamId::Head1Bias => &mut self.head1.bias,
            ParamId::Head2Weight => &mut self.head2.weight,
            ParamId::Head2Bias => &mut self.head2.bias,
            ParamId::BnGamma => &mut self.bn.gamma,
            ParamId::BnBeta => &mut self.bn.beta,
        }
    }

    pub fn parameter_count(&self) -> usize {
        ParamId::ALL
            .iter()
            .map(|&id| self.tensor(id).data().len())
            .sum()
    }
}

/// A graph with its Laplacians and wavelet bank resolved, ready for forward
/// passes. Construction happens once per dataset; everything here is
/// immutable and shareable afterwards.
#[derive(Debug, Clone)]
pub struct PreparedGraph<S> {
    pub features: DenseMatrix<S>,
    pub label: u8,
    pub l_regular: Arc<SparseSymMatrix<S>>,
    pub l_normalized: Arc<SparseSymMatrix<S>>,
    pub bank: Arc<WaveletBank<S>>,
}

/// Precomputes Laplacians, spectrum bounds, and wavelet banks for a dataset.
pub fn prepare_dataset<S: Scalar>(
    dataset: &Dataset<S>,
    config: &ModelConfig,
) -> Result<Vec<PreparedGraph<S>>> {
    if dataset.feature_dim() != config.feature_dim {
        return Err(Error::Shape(format!(
            "dataset carries {} features, model expects {}",
            dataset.feature_dim(),
            config.feature_dim
        )));
    }
    let mut builder = BankBuilder::new(
        config.kernel,
        config.wavelets,
        config.base_order,
        config.quad_points,
    );
    dataset
        .records()
        .iter()
        .map(|record| {
            let l_regular = Arc::new(build_laplacian(record, LaplacianKind::Regular));
            let l_normalized = Arc::new(build_laplacian(record, LaplacianKind::Normalized));
            let bound = lambda_max(&l_normalized, LaplacianKind::Normalized, 1e-9, 500);
            let bank = builder.bank_for(bound)?;
            Ok(PreparedGraph {
                features: record.features.clone(),
                label: record.label,
                l_regular,
                l_normalized,
                bank,
            })
        })
        .collect()
}

/// Intermediates of one inference forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<S> {
    pub x_tilde: DenseMatrix<S>,
    pub rq_vec: Vec<S>,
    pub wavelet: DenseMatrix<S>,
    pub attention: Vec<S>,
    pub h_att: Vec<S>,
    pub h_rq: Vec<S>,
    /// Concatenated embedding before batch normalization.
    pub embedding: Vec<S>,
    pub logits: [S; 2],
}

/// Shared feature MLP: `relu(X W1 + b1) W2 + b2`.
pub fn feature_transform<S: Scalar>(
    params: &ModelParams<S>,
    features: &DenseMatrix<S>,
) -> DenseMatrix<S> {
    params.feat2.apply(&params.feat1.apply(features).relu())
}

/// Explicit branch: Rayleigh Quotient of the transformed features against the
/// regular Laplacian, passed through the RQ MLP.
pub fn rql_forward<S: Scalar>(
    graph: &PreparedGraph<S>,
    params: &ModelParams<S>,
) -> Result<(Vec<S>, Vec<S>, DenseMatrix<S>)> {
    let x_tilde = feature_transform(params, &graph.features);
    let rq_vec = rayleigh_quotient(&graph.l_regular, &x_tilde)?;
    let rq_row = DenseMatrix::from_vec(1, rq_vec.len(), rq_vec.clone());
    let h_rq = params.rq2.apply(&params.rq1.apply(&rq_row).relu());
    Ok((h_rq.row(0).to_vec(), rq_vec, x_tilde))
}

/// Repeats `v` `times` times.
pub fn tile<S: Scalar>(v: &[S], times: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(v.len() * times);
    for _ in 0..times {
        out.extend_from_slice(v);
    }
    out
}

/// RQ-pooling: node j's attention weight is the inner product of the tiled
/// RQ vector with its wavelet features; the pooled vector is the
/// attention-weighted sum of node features under a ReLU.
pub fn attention_pool<S: Scalar>(wavelet: &DenseMatrix<S>, rq_tiled: &[S]) -> (Vec<S>, Vec<S>) {
    let n = wavelet.rows();
    let width = wavelet.cols();
    let mut attention = Vec::with_capacity(n);
    let mut pooled = vec![S::zero(); width];
    for j in 0..n {
        let h_j = wavelet.row(j);
        let a_j = crate::linalg::dense::dot(rq_tiled, h_j);
        for (p, &h) in pooled.iter_mut().zip(h_j) {
            *p += a_j * h;
        }
        attention.push(a_j);
    }
    let h_att = pooled.iter().map(|&v| v.max(S::zero())).collect();
    (attention, h_att)
}

/// Implicit branch: wavelet features of the transformed nodes pooled by RQ
/// attention.
pub fn cwgnn_rq_forward<S: Scalar>(
    graph: &PreparedGraph<S>,
    x_tilde: &DenseMatrix<S>,
    rq_vec: &[S],
) -> Result<(DenseMatrix<S>, Vec<S>, Vec<S>)> {
    let wavelet = wavelet_features(&graph.l_normalized, x_tilde, &graph.bank)?;
    let tiled = tile(rq_vec, graph.bank.q);
    let (attention, h_att) = attention_pool(&wavelet, &tiled);
    Ok((wavelet, attention, h_att))
}

/// Inference-mode batch normalization from the running statistics.
pub fn batch_norm_infer<S: Scalar>(z: &[S], bn: &BatchNormState<S>) -> Vec<S> {
    let eps = S::from_f64_lossy(BN_EPS);
    z.iter()
        .enumerate()
        .map(|(c, &v)| {
            let hat = (v - bn.running_mean[c]) / (bn.running_var[c] + eps).sqrt();
            bn.gamma.get(0, c) * hat + bn.beta.get(0, c)
        })
        .collect()
}

/// Full inference forward pass (running batch-norm statistics, no dropout).
/// Before any training batch has run, the running statistics still hold
/// their initialization (mean 0, variance 1).
pub fn forward_infer<S: Scalar>(
    graph: &PreparedGraph<S>,
    params: &ModelParams<S>,
) -> Result<ForwardTrace<S>> {
    let (h_rq, rq_vec, x_tilde) = rql_forward(graph, params)?;
    let (wavelet, attention, h_att) = cwgnn_rq_forward(graph, &x_tilde, &rq_vec)?;
    let mut embedding = h_att.clone();
    embedding.extend_from_slice(&h_rq);
    let normalized = batch_norm_infer(&embedding, &params.bn);
    let z_row = DenseMatrix::from_vec(1, normalized.len(), normalized);
    let logits_row = params.head2.apply(&params.head1.apply(&z_row).relu());
    let logits = [logits_row.get(0, 0), logits_row.get(0, 1)];
    Ok(ForwardTrace {
        x_tilde,
        rq_vec,
        wavelet,
        attention,
        h_att,
        h_rq,
        embedding,
        logits,
    })
}

/// Softmax probabilities of a two-class logit pair.
pub fn softmax2<S: Scalar>(logits: [S; 2]) -> [S; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let total = e0 + e1;
    [e0 / total, e1 / total]
}

/// Anomaly score: softmax probability of the anomalous class.
pub fn anomaly_score<S: Scalar>(logits: [S; 2]) -> S {
    softmax2(logits)[1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, GraphRecord};

    fn prepared(record: GraphRecord<f64>, config: &ModelConfig) -> PreparedGraph<f64> {
        let data = Dataset::new(vec![record]).unwrap();
        prepare_dataset(&data, config).unwrap().pop().unwrap()
    }

    fn small_config() -> ModelConfig {
        ModelConfig::new(3, 4, 2, 2)
    }

    fn one_hot(rows: &[usize], dim: usize) -> DenseMatrix<f64> {
        let mut m = DenseMatrix::zeros(rows.len(), dim);
        for (i, &c) in rows.iter().enumerate() {
            m.set(i, c, 1.0);
        }
        m
    }

    #[test]
    fn embedding_dim_matches_default_hyperparameters() {
        let config = ModelConfig::new(65, 64, 4, 6);
        assert_eq!(config.embedding_dim(), 320);
    }

    #[test]
    fn constant_feature_columns_zero_the_rq_vector() {
        let config = small_config();
        let params = ModelParams::init(&config, 1);
        let features = DenseMatrix::from_vec(4, 3, vec![1.0; 12]);
        let g = prepared(
            GraphRecord::new(4, vec![(0, 1), (1, 2), (2, 3)], features, 0).unwrap(),
            &config,
        );
        let (h_rq, rq_vec, _) = rql_forward(&g, &params).unwrap();
        for v in &rq_vec {
            assert!(v.abs() < 1e-9, "rq {v}");
        }
        let zero_row = DenseMatrix::zeros(1, config.hidden_dim);
        let expect = params.rq2.apply(&params.rq1.apply(&zero_row).relu());
        for (a, b) in h_rq.iter().zip(expect.row(0)) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn single_node_graph_has_zero_rq() {
        let config = small_config();
        let params = ModelParams::init(&config, 2);
        let g = prepared(
            GraphRecord::new(1, vec![], one_hot(&[0], 3), 0).unwrap(),
            &config,
        );
        let (_, rq_vec, _) = rql_forward(&g, &params).unwrap();
        for v in rq_vec {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn identity_weights_reproduce_hand_rayleigh_quotient() {
        // Hand-set weights that pass the signal through the ReLU intact:
        // relu(x) - relu(-x) = x, so x_tilde column 0 equals the raw feature.
        let config = ModelConfig::new(1, 2, 1, 2);
        let mut params = ModelParams::init(&config, 3);
        params.feat1 = Layer {
            weight: DenseMatrix::from_vec(1, 2, vec![1.0, -1.0]),
            bias: DenseMatrix::zeros(1, 2),
        };
        params.feat2 = Layer {
            weight: DenseMatrix::from_vec(2, 2, vec![1.0, 0.0, -1.0, 0.0]),
            bias: DenseMatrix::zeros(1, 2),
        };
        let features = DenseMatrix::from_vec(2, 1, vec![1.0, -1.0]);
        let g = prepared(
            GraphRecord::new(2, vec![(0, 1)], features, 0).unwrap(),
            &config,
        );
        let (_, rq_vec, x_tilde) = rql_forward(&g, &params).unwrap();
        assert_eq!(x_tilde.column(0), vec![1.0, -1.0]);
        assert!((rq_vec[0] - 2.0).abs() < 1e-10);
        assert_eq!(rq_vec[1], 0.0);
    }

    #[test]
    fn zero_rq_vector_gives_zero_pooled_branch() {
        let config = small_config();
        let params = ModelParams::init(&config, 4);
        let g = prepared(
            GraphRecord::new(3, vec![(0, 1), (1, 2)], one_hot(&[0, 1, 2], 3), 0).unwrap(),
            &config,
        );
        let (_, _, x_tilde) = rql_forward(&g, &params).unwrap();
        let zero_rq = vec![0.0; config.hidden_dim];
        let (_, attention, h_att) = cwgnn_rq_forward(&g, &x_tilde, &zero_rq).unwrap();
        assert!(attention.iter().all(|&a| a == 0.0));
        assert!(h_att.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn doubling_rq_doubles_attention_and_pooled_vector() {
        let config = small_config();
        let params = ModelParams::init(&config, 5);
        let g = prepared(
            GraphRecord::new(
                4,
                vec![(0, 1), (1, 2), (0, 3)],
                one_hot(&[0, 1, 2, 0], 3),
                0,
            )
            .unwrap(),
            &config,
        );
        let (_, rq_vec, x_tilde) = rql_forward(&g, &params).unwrap();
        let doubled: Vec<f64> = rq_vec.iter().map(|v| 2.0 * v).collect();
        let (_, att1, h1) = cwgnn_rq_forward(&g, &x_tilde, &rq_vec).unwrap();
        let (_, att2, h2) = cwgnn_rq_forward(&g, &x_tilde, &doubled).unwrap();
        for (a, b) in att1.iter().zip(&att2) {
            assert!((2.0 * a - b).abs() < 1e-9);
        }
        for (a, b) in h1.iter().zip(&h2) {
            assert!((2.0 * a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rq_vector_ignores_feature_scale_but_pooling_does_not() {
        let config = small_config();
        let params = ModelParams::init(&config, 21);
        let g = prepared(
            GraphRecord::new(
                4,
                vec![(0, 1), (1, 2), (2, 3)],
                one_hot(&[0, 1, 2, 1], 3),
                0,
            )
            .unwrap(),
            &config,
        );
        let (_, rq_vec, x_tilde) = rql_forward(&g, &params).unwrap();
        let scaled = x_tilde.scale(3.0);
        let rq_scaled = rayleigh_quotient(&g.l_regular, &scaled).unwrap();
        for (a, b) in rq_vec.iter().zip(&rq_scaled) {
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
        let (_, _, h_base) = cwgnn_rq_forward(&g, &x_tilde, &rq_vec).unwrap();
        let (_, _, h_scaled) = cwgnn_rq_forward(&g, &scaled, &rq_scaled).unwrap();
        assert!(h_base != h_scaled);
    }

    #[test]
    fn single_edgeless_node_pools_its_own_features() {
        let config = small_config();
        let params = ModelParams::init(&config, 6);
        let g = prepared(
            GraphRecord::new(1, vec![], one_hot(&[1], 3), 0).unwrap(),
            &config,
        );
        let trace = forward_infer(&g, &params).unwrap();
        let expect: Vec<f64> = trace
            .wavelet
            .row(0)
            .iter()
            .map(|&h| (trace.attention[0] * h).max(0.0))
            .collect();
        assert_eq!(trace.h_att, expect);
    }

    #[test]
    fn embedding_has_contract_shape() {
        let config = ModelConfig::new(65, 64, 4, 6);
        let params = ModelParams::init(&config, 7);
        let g = prepared(
            GraphRecord::new(
                5,
                vec![(0, 1), (1, 2), (2, 3), (3, 4)],
                one_hot(&[0, 7, 12, 33, 64], 65),
                0,
            )
            .unwrap(),
            &config,
        );
        let trace = forward_infer(&g, &params).unwrap();
        assert_eq!(trace.embedding.len(), 320);
        assert_eq!(trace.h_att.len(), 256);
        assert_eq!(trace.h_rq.len(), 64);
    }

    #[test]
    fn forward_is_deterministic_and_permutation_invariant() {
        let config = small_config();
        let params = ModelParams::init(&config, 8);
        let record = GraphRecord::new(
            5,
            vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)],
            one_hot(&[0, 1, 2, 0, 1], 3),
            0,
        )
        .unwrap();
        let g = prepared(record.clone(), &config);
        let a = forward_infer(&g, &params).unwrap().logits;
        let b = forward_infer(&g, &params).unwrap().logits;
        assert_eq!(a, b);

        // Relabel nodes with the permutation p(i) = (i + 2) mod 5.
        let perm = |i: usize| (i + 2) % 5;
        let edges: Vec<(usize, usize)> = record
            .edges
            .iter()
            .map(|&(x, y)| (perm(x), perm(y)))
            .collect();
        let mut features = DenseMatrix::zeros(5, 3);
        for i in 0..5 {
            for c in 0..3 {
                features.set(perm(i), c, record.features.get(i, c));
            }
        }
        let permuted = prepared(GraphRecord::new(5, edges, features, 0).unwrap(), &config);
        let c = forward_infer(&permuted, &params).unwrap().logits;
        assert!((a[0] - c[0]).abs() < 1e-9);
        assert!((a[1] - c[1]).abs() < 1e-9);
    }

    #[test]
    fn inference_before_training_uses_init_statistics() {
        let config = small_config();
        let params = ModelParams::init(&config, 9);
        let g = prepared(
            GraphRecord::new(3, vec![(0, 1), (1, 2)], one_hot(&[0, 1, 2], 3), 0).unwrap(),
            &config,
        );
        let trace = forward_infer(&g, &params).unwrap();
        assert!(trace.logits[0].is_finite() && trace.logits[1].is_finite());
        let probs = softmax2(trace.logits);
        assert!((probs[0] + probs[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_norm_infer_with_unit_stats_passes_standardized_input() {
        let bn = BatchNormState::<f64>::init(3);
        let z = vec![0.5, -1.0, 2.0];
        let out = batch_norm_infer(&z, &bn);
        for (o, i) in out.iter().zip(&z) {
            assert!((o - i).abs() < 1e-4);
        }
    }
}
