//! Training loop: batched tape forward passes, class-balanced focal loss,
//! Adam updates, validation-selected checkpoints, and the finite-difference
//! gradient check.

pub mod adam;
pub mod loss;
pub mod tape;

pub use adam::{adam_step, AdamState};
pub use loss::{cb_focal_grad, cb_focal_loss, expected_number, LossConfig};
pub use tape::{GradientTape, Gradients, NodeId};

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::metrics::{auc, macro_f1, Confusion, Metrics};
use crate::model::{
    anomaly_score, forward_infer, prepare_dataset, ModelConfig, ModelParams, ParamId, PreparedGraph,
};
use crate::rng::{stream, Rng};
use crate::scalar::Scalar;
use crate::wavelet::{Kernel, DEFAULT_QUAD_POINTS};

/// Training hyperparameters. Defaults: learning rate 0.005, batch size 512,
/// d = 64, q = 4, K = 6, dropout 0.4, beta = 0.999, gamma = 1.5.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden_dim: usize,
    pub wavelets: usize,
    pub base_order: usize,
    pub dropout: f64,
    pub beta: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.005,
            batch_size: 512,
            epochs: 200,
            hidden_dim: 64,
            wavelets: 4,
            base_order: 6,
            dropout: 0.4,
            beta: 0.999,
            gamma: 1.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        if self.batch_size == 0
            || self.hidden_dim == 0
            || self.wavelets == 0
            || self.base_order == 0
        {
            return Err(Error::Config(
                "batch size, hidden dim, wavelets, and base order must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} must lie in [0, 1)",
                self.dropout
            )));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::Config(format!(
                "beta {} must lie in [0, 1)",
                self.beta
            )));
        }
        if self.gamma < 0.0 {
            return Err(Error::Config(format!(
                "gamma {} must be non-negative",
                self.gamma
            )));
        }
        Ok(())
    }

    pub fn model_config(&self, feature_dim: usize) -> ModelConfig {
        ModelConfig {
            feature_dim,
            hidden_dim: self.hidden_dim,
            wavelets: self.wavelets,
            base_order: self.base_order,
            kernel: Kernel::Band,
            quad_points: DEFAULT_QUAD_POINTS,
        }
    }
}

/// One line of training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: Option<f64>,
    pub val_macro_f1: f64,
}

/// Final parameters (from the best validation Macro-F1 epoch, earliest on
/// ties) plus the per-epoch history.
#[derive(Debug, Clone)]
pub struct TrainOutput<S> {
    pub params: ModelParams<S>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    /// Set when training stopped early on a non-finite loss; `params` then
    /// holds the last good checkpoint.
    pub diverged_at: Option<usize>,
}

/// Serializes training history as JSON-lines, one record per epoch.
pub fn history_to_jsonl(history: &[EpochRecord]) -> String {
    let mut out = String::new();
    for record in history {
        out.push_str(&serde_json::to_string(record).expect("history serializes"));
        out.push('\n');
    }
    out
}

/// Result of one batched tape forward.
pub struct BatchForward<S> {
    pub tape: GradientTape<S>,
    pub loss: S,
    pub logits: Vec<[S; 2]>,
    pub batch_mean: Vec<S>,
    pub batch_var: Vec<S>,
}

/// Builds the full training-mode computation for one batch on a fresh tape:
/// per-graph RQL and wavelet branches, shared batch normalization, optional
/// dropout, head MLP, and the mean class-balanced focal loss.
pub fn batch_forward<S: Scalar>(
    params: &ModelParams<S>,
    graphs: &[&PreparedGraph<S>],
    loss_cfg: &LossConfig,
    dropout: f64,
    dropout_rng: Option<&mut Rng>,
) -> Result<BatchForward<S>> {
    if graphs.is_empty() {
        return Err(Error::Config(
            "batch must contain at least one graph".into(),
        ));
    }
    let mut tape = GradientTape::new();
    let p = |tape: &mut GradientTape<S>, id: ParamId| {
        let value = params.tensor(id).clone();
        tape.param(id, value)
    };
    let feat1_w = p(&mut tape, ParamId::Feat1Weight);
    let feat1_b = p(&mut tape, ParamId::Feat1Bias);
    let feat2_w = p(&mut tape, ParamId::Feat2Weight);
    let feat2_b = p(&mut tape, ParamId::Feat2Bias);
    let rq1_w = p(&mut tape, ParamId::Rq1Weight);
    let rq1_b = p(&mut tape, ParamId::Rq1Bias);
    let rq2_w = p(&mut tape, ParamId::Rq2Weight);
    let rq2_b = p(&mut tape, ParamId::Rq2Bias);
    let head1_w = p(&mut tape, ParamId::Head1Weight);
    let head1_b = p(&mut tape, ParamId::Head1Bias);
    let head2_w = p(&mut tape, ParamId::Head2Weight);
    let head2_b = p(&mut tape, ParamId::Head2Bias);
    let bn_gamma = p(&mut tape, ParamId::BnGamma);
    let bn_beta = p(&mut tape, ParamId::BnBeta);

    let mut rows = Vec::with_capacity(graphs.len());
    let mut labels = Vec::with_capacity(graphs.len());
    let mut weights = Vec::with_capacity(graphs.len());
    for graph in graphs {
        let x = tape.constant(graph.features.clone());
        let lin1 = tape.matmul(x, feat1_w);
        let biased1 = tape.add_row_bias(lin1, feat1_b);
        let hidden = tape.relu(biased1);
        let lin2 = tape.matmul(hidden, feat2_w);
        let x_tilde = tape.add_row_bias(lin2, feat2_b);

        let rq = tape.rayleigh(x_tilde, graph.l_regular.clone())?;
        let rq_lin1 = tape.matmul(rq, rq1_w);
        let rq_b1 = tape.add_row_bias(rq_lin1, rq1_b);
        let rq_act = tape.relu(rq_b1);
        let rq_lin2 = tape.matmul(rq_act, rq2_w);
        let h_rq = tape.add_row_bias(rq_lin2, rq2_b);

        let bank = &graph.bank;
        let mut filtered = Vec::with_capacity(bank.q);
        for coeffs in &bank.coefficients {
            filtered.push(tape.cheb_filter(
                x_tilde,
                graph.l_normalized.clone(),
                std::sync::Arc::new(coeffs.clone()),
                bank.lambda_max,
            )?);
        }
        let wavelet = tape.concat_cols(filtered);
        let tiled = tape.tile(rq, bank.q);
        let tiled_t = tape.transpose(tiled);
        let attention = tape.matmul(wavelet, tiled_t);
        let attention_t = tape.transpose(attention);
        let pooled = tape.matmul(attention_t, wavelet);
        let h_att = tape.relu(pooled);

        rows.push(tape.concat_cols(vec![h_att, h_rq]));
        labels.push(graph.label);
        weights.push(S::from_f64_lossy(loss_cfg.class_weight(graph.label)));
    }

    let stacked = tape.concat_rows(rows);
    let (normalized, batch_mean, batch_var) = tape.batch_norm(stacked, bn_gamma, bn_beta);

    let regularized = if dropout > 0.0 {
        let rng =
            dropout_rng.ok_or_else(|| Error::Config("dropout requires a mask generator".into()))?;
        let z = tape.value(normalized);
        let keep = 1.0 - dropout;
        let scale = S::from_f64_lossy(1.0 / keep);
        let mask_data: Vec<S> = (0..z.rows() * z.cols())
            .map(|_| {
                if rng.next_f64() < dropout {
                    S::zero()
                } else {
                    scale
                }
            })
            .collect();
        let mask = DenseMatrix::from_vec(z.rows(), z.cols(), mask_data);
        tape.dropout(normalized, mask)
    } else {
        normalized
    };

    let head_lin1 = tape.matmul(regularized, head1_w);
    let head_b1 = tape.add_row_bias(head_lin1, head1_b);
    let head_act = tape.relu(head_b1);
    let head_lin2 = tape.matmul(head_act, head2_w);
    let logits_node = tape.add_row_bias(head_lin2, head2_b);
    let logits: Vec<[S; 2]> = (0..graphs.len())
        .map(|r| {
            let row = tape.value(logits_node).row(r);
            [row[0], row[1]]
        })
        .collect();

    let gamma = S::from_f64_lossy(loss_cfg.gamma);
    let loss_node = tape.cb_focal_loss(logits_node, labels, weights, gamma);
    let loss = tape.value(loss_node).get(0, 0);
    Ok(BatchForward {
        tape,
        loss,
        logits,
        batch_mean,
        batch_var,
    })
}

/// Trains on the given splits. Randomness (init, shuffles, dropout masks)
/// derives entirely from `cfg.seed`, so identical inputs produce identical
/// outputs. A non-finite loss aborts the loop with the last good parameters
/// and `diverged_at` set.
pub fn train<S: Scalar>(
    train_set: &Dataset<S>,
    val_set: &Dataset<S>,
    cfg: &TrainConfig,
) -> Result<TrainOutput<S>> {
    cfg.validate()?;
    let (normal, anomalous) = train_set.class_counts();
    if normal == 0 || anomalous == 0 {
        return Err(Error::Config(format!(
            "training split needs both classes, got {normal} normal / {anomalous} anomalous"
        )));
    }
    let model_config = cfg.model_config(train_set.feature_dim());
    let prepared_train = prepare_dataset(train_set, &model_config)?;
    let prepared_val = prepare_dataset(val_set, &model_config)?;
    let loss_cfg = LossConfig::new(cfg.beta, cfg.gamma, (normal, anomalous))?;

    let mut params = ModelParams::init(&model_config, cfg.seed);
    let mut adam_state = AdamState::new();
    let root = Rng::new(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ModelParams<S>)> = None;

    for epoch in 0..cfg.epochs {
        let epoch_rng = root.fork(stream::EPOCH).fork(epoch as u64);
        let mut order: Vec<usize> = (0..prepared_train.len()).collect();
        epoch_rng.fork(0).shuffle(&mut order);

        let last_good = params.clone();
        let mut epoch_loss = 0.0f64;
        let mut diverged = false;
        for (batch_index, batch_ids) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&PreparedGraph<S>> =
                batch_ids.iter().map(|&i| &prepared_train[i]).collect();
            let mut mask_rng = epoch_rng.fork(1 + batch_index as u64);
            let fwd = batch_forward(&params, &batch, &loss_cfg, cfg.dropout, Some(&mut mask_rng))?;
            let batch_loss = fwd.loss.to_f64_lossy();
            if !batch_loss.is_finite() {
                diverged = true;
                break;
            }
            epoch_loss += batch_loss * batch.len() as f64;
            let grads = fwd.tape.backward()?;
            match adam_step(&mut params, &grads, &mut adam_state, cfg.lr) {
                Ok(()) => {}
                // Exploding activations surface as non-finite gradients; treat
                // them like a non-finite loss and fall back to the last good
                // parameters.
                Err(Error::NanGradient { .. }) => {
                    diverged = true;
                    break;
                }
                Err(other) => return Err(other),
            }
            params.bn.update_running(&fwd.batch_mean, &fwd.batch_var);
        }
        if diverged {
            let params = best.map(|(_, _, p)| p).unwrap_or(last_good);
            return Ok(TrainOutput {
                params,
                history,
                best_epoch: None,
                diverged_at: Some(epoch),
            });
        }

        let train_loss = epoch_loss / prepared_train.len() as f64;
        let metrics = evaluate(&params, &prepared_val, &loss_cfg)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_auc: metrics.auc,
            val_macro_f1: metrics.macro_f1,
        });
        let improved = match &best {
            Some((_, best_f1, _)) => metrics.macro_f1 > *best_f1,
            None => true,
        };
        if improved {
            best = Some((epoch, metrics.macro_f1, params.clone()));
        }
    }

    let (best_epoch, params) = match best {
        Some((epoch, _, p)) => (Some(epoch), p),
        None => (None, params),
    };
    Ok(TrainOutput {
        params,
        history,
        best_epoch,
        diverged_at: None,
    })
}

/// Inference-mode evaluation: per-graph forward with running batch-norm
/// statistics, AUC of the anomaly probability, Macro-F1 at argmax, and the
/// mean class-balanced focal loss.
pub fn evaluate<S: Scalar>(
    params: &ModelParams<S>,
    graphs: &[PreparedGraph<S>],
    loss_cfg: &LossConfig,
) -> Result<Metrics> {
    if graphs.is_empty() {
        return Err(Error::Config("cannot evaluate an empty split".into()));
    }
    let mut scored = Vec::with_capacity(graphs.len());
    let mut confusion = Confusion::default();
    let mut total_loss = 0.0;
    for graph in graphs {
        let trace = forward_infer(graph, params)?;
        let score = anomaly_score(trace.logits).to_f64_lossy();
        let prediction = u8::from(trace.logits[1] > trace.logits[0]);
        scored.push((score, graph.label == 1));
        confusion.record(graph.label, prediction);
        total_loss += cb_focal_loss(trace.logits, graph.label, loss_cfg).to_f64_lossy();
    }
    Ok(Metrics {
        auc: auc(&scored),
        macro_f1: macro_f1(&confusion),
        loss: total_loss / graphs.len() as f64,
        confusion,
    })
}

/// Central-difference check of the full tape gradient on a small fixture.
/// Returns the maximum over parameters of
/// `|g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8)`. The dropout mask is replayed
/// identically for every loss evaluation.
pub fn gradient_check<S: Scalar>(
    params: &ModelParams<S>,
    graphs: &[&PreparedGraph<S>],
    loss_cfg: &LossConfig,
    dropout: f64,
    mask_seed: u64,
    h: f64,
) -> Result<f64> {
    let loss_at = |p: &ModelParams<S>| -> Result<f64> {
        let mut rng = Rng::new(mask_seed);
        let fwd = batch_forward(p, graphs, loss_cfg, dropout, Some(&mut rng))?;
        Ok(fwd.loss.to_f64_lossy())
    };
    let mut rng = Rng::new(mask_seed);
    let fwd = batch_forward(params, graphs, loss_cfg, dropout, Some(&mut rng))?;
    let grads = fwd.tape.backward()?;

    let mut worst = 0.0f64;
    for id in ParamId::ALL {
        let analytic = grads.get(id).ok_or_else(|| {
            Error::Numeric(format!("parameter {} received no gradient", id.name()))
        })?;
        for idx in 0..analytic.data().len() {
            let mut plus = params.clone();
            plus.tensor_mut(id).data_mut()[idx] += S::from_f64_lossy(h);
            let mut minus = params.clone();
            minus.tensor_mut(id).data_mut()[idx] -= S::from_f64_lossy(h);
            let fd = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * h);
            let ad = analytic.data()[idx].to_f64_lossy();
            let rel = (ad - fd).abs() / ad.abs().max(fd.abs()).max(1e-8);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
