//! JSON model checkpoints.
//!
//! Layout: `{version, config: {F, d, q, K, kernel_id, scales}, params:
//! {layer name -> {shape, values}}, bn: {gamma, beta, running_mean,
//! running_var}}`. Values are written as decimal floats that round-trip
//! 64-bit precision; the `scales` entry lists the wavelet scales at the
//! reference spectrum bound 2 (per-graph bounds rescale them at run time).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::model::{BatchNormState, Layer, ModelConfig, ModelParams, ParamId};
use crate::scalar::Scalar;
use crate::wavelet::{Kernel, DEFAULT_QUAD_POINTS};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: CheckpointConfig,
    pub params: BTreeMap<String, TensorData>,
    pub bn: BnData,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointConfig {
    #[serde(rename = "F")]
    pub feature_dim: usize,
    pub d: usize,
    pub q: usize,
    #[serde(rename = "K")]
    pub base_order: usize,
    pub kernel_id: String,
    pub scales: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorData {
    pub shape: [usize; 2],
    /// Row-major entries.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BnData {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

fn tensor_data<S: Scalar>(m: &DenseMatrix<S>) -> TensorData {
    TensorData {
        shape: [m.rows(), m.cols()],
        values: m.data().iter().map(|v| v.to_f64_lossy()).collect(),
    }
}

fn to_vec_f64<S: Scalar>(v: &[S]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_lossy()).collect()
}

impl Checkpoint {
    pub fn from_params<S: Scalar>(params: &ModelParams<S>) -> Self {
        let config = &params.config;
        let mlp_ids = &ParamId::ALL[..12];
        let tensors: BTreeMap<String, TensorData> = mlp_ids
            .iter()
            .map(|&id| (id.name().to_string(), tensor_data(params.tensor(id))))
            .collect();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: CheckpointConfig {
                feature_dim: config.feature_dim,
                d: config.hidden_dim,
                q: config.wavelets,
                base_order: config.base_order,
                kernel_id: config.kernel.id().to_string(),
                scales: (1..=config.wavelets)
                    .map(|i| 2f64.powi(i as i32 - 2))
                    .collect(),
            },
            params: tensors,
            bn: BnData {
                gamma: to_vec_f64(params.bn.gamma.row(0)),
                beta: to_vec_f64(params.bn.beta.row(0)),
                running_mean: to_vec_f64(&params.bn.running_mean),
                running_var: to_vec_f64(&params.bn.running_var),
            },
        }
    }

    pub fn into_params<S: Scalar>(self) -> Result<ModelParams<S>> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        let config = ModelConfig {
            feature_dim: self.config.feature_dim,
            hidden_dim: self.config.d,
            wavelets: self.config.q,
            base_order: self.config.base_order,
            kernel: Kernel::parse(&self.config.kernel_id)?,
            quad_points: DEFAULT_QUAD_POINTS,
        };
        let z = config.embedding_dim();
        let restore = |name: &str, rows: usize, cols: usize| -> Result<DenseMatrix<S>> {
            let t = self
                .params
                .get(name)
                .ok_or_else(|| Error::Config(format!("checkpoint is missing tensor {name}")))?;
            if t.shape != [rows, cols] || t.values.len() != rows * cols {
                return Err(Error::Config(format!(
                    "tensor {name} has shape {:?}, expected [{rows}, {cols}]",
                    t.shape
                )));
            }
            Ok(DenseMatrix::from_vec(
                rows,
                cols,
                t.values.iter().map(|&v| S::from_f64_lossy(v)).collect(),
            ))
        };
        let layer = |w: &str, b: &str, fan_in: usize, fan_out: usize| -> Result<Layer<S>> {
            Ok(Layer {
                weight: restore(w, fan_in, fan_out)?,
                bias: restore(b, 1, fan_out)?,
            })
        };
        let (f, d) = (config.feature_dim, config.hidden_dim);
        let bn_vec = |v: &[f64], what: &str| -> Result<Vec<S>> {
            if v.len() != z {
                return Err(Error::Config(format!(
                    "bn {what} has length {}, expected {z}",
                    v.len()
                )));
            }
            Ok(v.iter().map(|&x| S::from_f64_lossy(x)).collect())
        };
        Ok(ModelParams {
            config,
            feat1: layer("feat1.weight", "feat1.bias", f, d)?,
            feat2: layer("feat2.weight", "feat2.bias", d, d)?,
            rq1: layer("rq1.weight", "rq1.bias", d, d)?,
            rq2: layer("rq2.weight", "rq2.bias", d, d)?,
            head1: layer("head1.weight", "head1.bias", z, d)?,
            head2: layer("head2.weight", "head2.bias", d, 2)?,
            bn: BatchNormState {
                gamma: DenseMatrix::from_vec(1, z, bn_vec(&self.bn.gamma, "gamma")?),
                beta: DenseMatrix::from_vec(1, z, bn_vec(&self.bn.beta, "beta")?),
                running_mean: bn_vec(&self.bn.running_mean, "running_mean")?,
                running_var: bn_vec(&self.bn.running_var, "running_var")?,
            },
        })
    }
}

pub fn save_checkpoint<S: Scalar>(params: &ModelParams<S>, path: &Path) -> Result<()> {
    let checkpoint = Checkpoint::from_params(params);
    let text = serde_json::to_string(&checkpoint)
        .map_err(|e| Error::Config(format!("checkpoint serialization failed: {e}")))?;
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<ModelParams<S>> {
    if !path.exists() {
        return Err(Error::MissingFile {
            path: path.to_path_buf(),
        });
    }
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let checkpoint: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("malformed checkpoint: {e}")))?;
    checkpoint.into_params()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trips_bitwise() {
        let config = ModelConfig::new(3, 4, 2, 2);
        let mut params = ModelParams::<f64>::init(&config, 42);
        params.bn.running_mean[0] = 0.25;
        params.bn.running_var[1] = 3.5;
        let dir = std::env::temp_dir().join(format!("rqgnn-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");
        save_checkpoint(&params, &path).unwrap();
        let restored: ModelParams<f64> = load_checkpoint(&path).unwrap();
        assert_eq!(params, restored);
    }

    #[test]
    fn checkpoint_schema_has_expected_keys() {
        let config = ModelConfig::new(3, 4, 2, 2);
        let params = ModelParams::<f64>::init(&config, 1);
        let json = serde_json::to_value(Checkpoint::from_params(&params)).unwrap();
        assert_eq!(json["config"]["F"], 3);
        assert_eq!(json["config"]["d"], 4);
        assert_eq!(json["config"]["q"], 2);
        assert_eq!(json["config"]["K"], 2);
        assert_eq!(json["config"]["kernel_id"], "band");
        assert!(json["params"]["feat1.weight"]["shape"].is_array());
        assert!(json["bn"]["running_var"].is_array());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let config = ModelConfig::new(3, 4, 2, 2);
        let params = ModelParams::<f64>::init(&config, 1);
        let mut checkpoint = Checkpoint::from_params(&params);
        checkpoint.params.get_mut("feat1.weight").unwrap().shape = [4, 4];
        assert!(checkpoint.into_params::<f64>().is_err());
    }
}
