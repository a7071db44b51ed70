//! Run configuration: defaults, config-file entries, then command-line
//! flags, in that precedence order.

use std::path::{Path, PathBuf};

use rqgnn::train::TrainConfig;
use rqgnn::{Error, Result};

use crate::{CommonArgs, TrainArgs};

/// Parses a `key = value` config file into a TrainConfig, starting from the
/// defaults. Blank lines and `#` comments are allowed; unknown keys are
/// rejected.
pub fn load_config_file(path: &Path, base: TrainConfig) -> Result<TrainConfig> {
    if !path.exists() {
        return Err(Error::MissingFile {
            path: path.to_path_buf(),
        });
    }
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg = base;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "{}:{}: expected `key = value`, found {line:?}",
                path.display(),
                i + 1
            ))
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad = |what: &str| {
            Error::Config(format!(
                "{}:{}: invalid {what} value {value:?}",
                path.display(),
                i + 1
            ))
        };
        match key {
            "lr" => cfg.lr = value.parse().map_err(|_| bad("lr"))?,
            "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad("batch_size"))?,
            "epochs" => cfg.epochs = value.parse().map_err(|_| bad("epochs"))?,
            "d" => cfg.hidden_dim = value.parse().map_err(|_| bad("d"))?,
            "q" => cfg.wavelets = value.parse().map_err(|_| bad("q"))?,
            "K" | "k" => cfg.base_order = value.parse().map_err(|_| bad("K"))?,
            "dropout" => cfg.dropout = value.parse().map_err(|_| bad("dropout"))?,
            "beta" => cfg.beta = value.parse().map_err(|_| bad("beta"))?,
            "gamma" => cfg.gamma = value.parse().map_err(|_| bad("gamma"))?,
            "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
            other => {
                return Err(Error::Config(format!(
                    "{}:{}: unknown config key {other:?}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(cfg)
}

/// Resolves the effective training configuration for one invocation.
pub fn resolve_train_config(common: &CommonArgs, train: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = &common.config {
        cfg = load_config_file(path, cfg)?;
    }
    if let Some(v) = train.lr {
        cfg.lr = v;
    }
    if let Some(v) = train.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = train.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = train.d {
        cfg.hidden_dim = v;
    }
    if let Some(v) = train.q {
        cfg.wavelets = v;
    }
    if let Some(v) = train.base_order {
        cfg.base_order = v;
    }
    if let Some(v) = train.dropout {
        cfg.dropout = v;
    }
    if let Some(v) = train.beta {
        cfg.beta = v;
    }
    if let Some(v) = train.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The dataset directory, required for data-driven subcommands.
pub fn require_data(common: &CommonArgs) -> Result<&PathBuf> {
    common
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("--data is required for this subcommand".into()))
}

/// The output path, required by every artifact-writing subcommand.
pub fn require_out(common: &CommonArgs) -> Result<&PathBuf> {
    common
        .out
        .as_ref()
        .ok_or_else(|| Error::Config("--out is required for this subcommand".into()))
}

/// Resolves the dataset name: an explicit --name, or the unique
/// `<name>_graph_indicator.txt` prefix in the data directory.
pub fn resolve_dataset_name(common: &CommonArgs, data_dir: &Path) -> Result<String> {
    if let Some(name) = &common.name {
        return Ok(name.clone());
    }
    let entries = std::fs::read_dir(data_dir).map_err(|source| Error::Io {
        path: data_dir.to_path_buf(),
        source,
    })?;
    let mut candidates = Vec::new();
    for entry in entries.flatten() {
        let file_name = entry.file_name();
        let file_name = file_name.to_string_lossy();
        if let Some(prefix) = file_name.strip_suffix("_graph_indicator.txt") {
            candidates.push(prefix.to_string());
        }
    }
    candidates.sort();
    match candidates.len() {
        1 => Ok(candidates.remove(0)),
        0 => Err(Error::MissingFile {
            path: data_dir.join("<name>_graph_indicator.txt"),
        }),
        _ => Err(Error::Config(format!(
            "multiple datasets in {}: {candidates:?}; pass --name",
            data_dir.display()
        ))),
    }
}

pub fn write_json_file(path: &Path, value: &serde_json::Value) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| Error::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
