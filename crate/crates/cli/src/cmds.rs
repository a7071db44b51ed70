//! Subcommand implementations.

use std::path::Path;

use serde_json::json;

use rqgnn::dataset::{
    generate_er_dataset, parse_tudataset, perturb_dataset, stratified_split, write_tudataset,
    Dataset, GraphRecord, SplitSpec,
};
use rqgnn::linalg::{
    build_laplacian, eigendecompose_sym, rayleigh_quotient_vec, DenseMatrix, LaplacianKind,
    SparseSymMatrix,
};
use rqgnn::model::{load_checkpoint, prepare_dataset, save_checkpoint, ModelParams, PreparedGraph};
use rqgnn::rng::Rng;
use rqgnn::spectral::{
    accumulated_energy_integral, distance_ratios, rq_histogram, verify_perturbation_bounds,
};
use rqgnn::train::{evaluate, gradient_check, history_to_jsonl, train, LossConfig, TrainConfig};
use rqgnn::{Error, Result};

use crate::cfg::{
    load_config_file, require_data, require_out, resolve_dataset_name, resolve_train_config,
    write_json_file,
};
use crate::{CommonArgs, TrainArgs};

fn load_dataset(common: &CommonArgs) -> Result<(Dataset<f64>, String)> {
    let dir = require_data(common)?;
    let name = resolve_dataset_name(common, dir)?;
    let data = parse_tudataset::<f64>(dir, &name)?;
    Ok((data, name))
}

fn metrics_json(metrics: &rqgnn::metrics::Metrics) -> serde_json::Value {
    json!({
        "auc": metrics.auc,
        "macro_f1": metrics.macro_f1,
        "loss": metrics.loss,
        "confusion": metrics.confusion.counts,
    })
}

pub fn run_train(common: &CommonArgs, train_args: &TrainArgs) -> Result<()> {
    let cfg = resolve_train_config(common, train_args)?;
    let out_dir = require_out(common)?;
    let (data, name) = load_dataset(common)?;
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.clone(),
        source,
    })?;

    let spec = SplitSpec::new(0.7, 0.15, 0.15, cfg.seed)?;
    let (train_set, val_set, test_set) = stratified_split(&data, &spec)?;
    let output = train(&train_set, &val_set, &cfg)?;

    std::fs::write(
        out_dir.join("history.jsonl"),
        history_to_jsonl(&output.history),
    )
    .map_err(|source| Error::Io {
        path: out_dir.join("history.jsonl"),
        source,
    })?;
    save_checkpoint(&output.params, &out_dir.join("checkpoint.json"))?;

    if let Some(epoch) = output.diverged_at {
        return Err(Error::Diverged { epoch });
    }

    let model_config = cfg.model_config(data.feature_dim());
    let prepared_test = prepare_dataset(&test_set, &model_config)?;
    let loss_cfg = LossConfig::new(cfg.beta, cfg.gamma, train_set.class_counts())?;
    let metrics = evaluate(&output.params, &prepared_test, &loss_cfg)?;
    let mut report = metrics_json(&metrics);
    report["dataset"] = json!(name);
    report["split"] = json!("test");
    report["best_epoch"] = json!(output.best_epoch);
    report["epochs_run"] = json!(output.history.len());
    write_json_file(&out_dir.join("metrics.json"), &report)?;
    println!(
        "train: {} epochs on {name}, best epoch {:?}, test auc {:?}, test macro-f1 {:.4}",
        output.history.len(),
        output.best_epoch,
        metrics.auc,
        metrics.macro_f1
    );
    Ok(())
}

pub fn run_eval(common: &CommonArgs, checkpoint: &Path) -> Result<()> {
    let out = require_out(common)?;
    let (data, name) = load_dataset(common)?;
    let params: ModelParams<f64> = load_checkpoint(checkpoint)?;
    let prepared = prepare_dataset(&data, &params.config)?;
    let base = match &common.config {
        Some(path) => load_config_file(path, TrainConfig::default())?,
        None => TrainConfig::default(),
    };
    // Loss weights here are informational; the evaluated split provides the
    // counts (clamped so single-class corpora still evaluate).
    let (normal, anomalous) = data.class_counts();
    let loss_cfg = LossConfig::new(base.beta, base.gamma, (normal.max(1), anomalous.max(1)))?;
    let metrics = evaluate(&params, &prepared, &loss_cfg)?;
    let mut report = metrics_json(&metrics);
    report["dataset"] = json!(name);
    report["records"] = json!(data.len());
    write_json_file(out, &report)?;
    println!(
        "eval: {name} ({} graphs), auc {:?}, macro-f1 {:.4}",
        data.len(),
        metrics.auc,
        metrics.macro_f1
    );
    Ok(())
}

pub fn run_rq_dist(common: &CommonArgs, bins: usize) -> Result<()> {
    let out = require_out(common)?;
    let (data, name) = load_dataset(common)?;
    let hist = rq_histogram(data.records(), bins)?;
    let mut value = serde_json::to_value(&hist)
        .map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
    value["dataset"] = json!(name);
    write_json_file(out, &value)?;
    println!(
        "rq-dist: {name}, {} bins, class total-variation distance {:.4}",
        hist.freq_normal.len(),
        hist.total_variation()
    );
    Ok(())
}

pub fn run_distance_ratio(common: &CommonArgs, subsamples: usize, bins: usize) -> Result<()> {
    let out = require_out(common)?;
    let seed = common.seed.unwrap_or(0);
    let (data, name) = load_dataset(common)?;
    let (anomalous, normal): (Vec<GraphRecord<f64>>, Vec<GraphRecord<f64>>) = data
        .records()
        .iter()
        .cloned()
        .partition(GraphRecord::is_anomalous);
    let ratios = distance_ratios(&anomalous, &normal, bins, subsamples, seed)?;
    let mut value = serde_json::to_value(&ratios)
        .map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
    value["dataset"] = json!(name);
    value["subsamples"] = json!(subsamples);
    write_json_file(out, &value)?;
    println!("distance-ratio: {name}, {subsamples} subsamples per class");
    Ok(())
}

pub fn run_perturb(common: &CommonArgs, fraction: f64, prob: f64) -> Result<()> {
    let out_dir = require_out(common)?;
    let seed = common.seed.unwrap_or(0);
    let (data, name) = load_dataset(common)?;
    let perturbed = perturb_dataset(&data, fraction, prob, seed)?;
    write_tudataset(&perturbed, out_dir, &name)?;
    let (normal, anomalous) = perturbed.class_counts();
    write_json_file(
        &out_dir.join("summary.json"),
        &json!({
            "dataset": name,
            "input_records": data.len(),
            "output_records": perturbed.len(),
            "normal": normal,
            "anomalous": anomalous,
            "fraction": fraction,
            "prob": prob,
            "seed": seed,
        }),
    )?;
    println!(
        "perturb: {name}, {} -> {} records ({normal} normal, {anomalous} anomalous)",
        data.len(),
        perturbed.len()
    );
    Ok(())
}

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

fn random_unit_signal(rng: &mut Rng, n: usize) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return x.into_iter().map(|v| v / norm).collect();
        }
    }
}

pub fn run_verify(common: &CommonArgs, trials: usize) -> Result<()> {
    let out = require_out(common)?;
    let seed = common.seed.unwrap_or(0);
    let mut rng = Rng::new(seed).fork(rqgnn::rng::stream::VERIFY);

    // Accumulated-energy identity on random graphs and signals.
    let mut integral_worst = 0.0f64;
    for _ in 0..trials {
        let n = 2 + rng.below(11);
        let graph = random_graph(&mut rng, n, 0.4);
        let l = build_laplacian(&graph, LaplacianKind::Regular);
        let decomp = eigendecompose_sym(&l)?;
        let x = random_unit_signal(&mut rng, n);
        let integral = accumulated_energy_integral(&decomp, &x)?;
        let rq = rayleigh_quotient_vec(&l, &x)?;
        integral_worst = integral_worst.max((integral - rq).abs());
    }

    // Matrix-perturbation bound and signal-expansion identity.
    let n = 8;
    let mut bound_violations = 0usize;
    let mut identity_worst = 0.0f64;
    for _ in 0..trials {
        let graph = random_graph(&mut rng, n, 0.5);
        let l = build_laplacian(&graph, LaplacianKind::Regular);
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in i..n {
                let v = rng.normal();
                triplets.push((i, j, v));
                if i != j {
                    triplets.push((j, i, v));
                }
            }
        }
        let raw = SparseSymMatrix::from_triplets(n, &triplets)?;
        let norm = eigendecompose_sym(&raw)?.spectral_norm();
        let scaled: Vec<(usize, usize, f64)> = (0..n)
            .flat_map(|r| raw.row_entries(r).map(move |(c, v)| (r, c, 0.1 * v / norm)))
            .collect();
        let delta = SparseSymMatrix::from_triplets(n, &scaled)?;
        let x = random_unit_signal(&mut rng, n);
        let delta_x: Vec<f64> = (0..n).map(|_| 0.1 * rng.normal()).collect();
        let report = verify_perturbation_bounds(&l, &x, &delta, &delta_x)?;
        if !report.matrix_bound_holds {
            bound_violations += 1;
        }
        identity_worst = identity_worst.max(report.signal_identity_residual);
    }

    let pass = integral_worst <= 1e-8 && bound_violations == 0 && identity_worst <= 1e-10;
    write_json_file(
        out,
        &json!({
            "trials": trials,
            "seed": seed,
            "energy_identity_max_residual": integral_worst,
            "matrix_bound_violations": bound_violations,
            "signal_identity_max_residual": identity_worst,
            "pass": pass,
        }),
    )?;
    println!(
        "verify: {trials} trials, energy residual {integral_worst:.3e}, bound violations {bound_violations}, identity residual {identity_worst:.3e}"
    );
    if pass {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "verification failed: {bound_violations} bound violations, energy residual {integral_worst:.3e}, identity residual {identity_worst:.3e}"
        )))
    }
}

/// Hyperparameter swept by `sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    HiddenDim,
    Wavelets,
    BaseOrder,
    Beta,
    Gamma,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::HiddenDim => "d",
            SweepParam::Wavelets => "q",
            SweepParam::BaseOrder => "K",
            SweepParam::Beta => "beta",
            SweepParam::Gamma => "gamma",
        }
    }
}

pub fn parse_sweep_param(value: &str) -> std::result::Result<SweepParam, String> {
    match value {
        "d" => Ok(SweepParam::HiddenDim),
        "q" => Ok(SweepParam::Wavelets),
        "K" | "k" => Ok(SweepParam::BaseOrder),
        "beta" => Ok(SweepParam::Beta),
        "gamma" => Ok(SweepParam::Gamma),
        other => Err(format!(
            "unknown sweep parameter {other:?}; expected d, q, K, beta, or gamma"
        )),
    }
}

fn apply_sweep_value(cfg: &mut TrainConfig, param: SweepParam, value: f64) -> Result<()> {
    let as_count = |value: f64, what: &str| -> Result<usize> {
        if value.fract() != 0.0 || value < 1.0 {
            return Err(Error::Config(format!(
                "{what} must be a positive integer, got {value}"
            )));
        }
        Ok(value as usize)
    };
    match param {
        SweepParam::HiddenDim => cfg.hidden_dim = as_count(value, "d")?,
        SweepParam::Wavelets => cfg.wavelets = as_count(value, "q")?,
        SweepParam::BaseOrder => cfg.base_order = as_count(value, "K")?,
        SweepParam::Beta => cfg.beta = value,
        SweepParam::Gamma => cfg.gamma = value,
    }
    cfg.validate()
}

pub fn run_sweep(
    common: &CommonArgs,
    train_args: &TrainArgs,
    param: SweepParam,
    values: &[f64],
) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Config(
            "--values must list at least one value".into(),
        ));
    }
    let out = require_out(common)?;
    let base = resolve_train_config(common, train_args)?;
    let (data, name) = load_dataset(common)?;
    let spec = SplitSpec::new(0.7, 0.15, 0.15, base.seed)?;
    let (train_set, val_set, test_set) = stratified_split(&data, &spec)?;

    let mut lines = String::new();
    for &value in values {
        let mut cfg = base;
        apply_sweep_value(&mut cfg, param, value)?;
        let output = train(&train_set, &val_set, &cfg)?;
        let model_config = cfg.model_config(data.feature_dim());
        let prepared_test = prepare_dataset(&test_set, &model_config)?;
        let loss_cfg = LossConfig::new(cfg.beta, cfg.gamma, train_set.class_counts())?;
        let metrics = evaluate(&output.params, &prepared_test, &loss_cfg)?;
        let record = json!({
            "param": param.name(),
            "value": value,
            "dataset": name,
            "best_epoch": output.best_epoch,
            "diverged_at": output.diverged_at,
            "test_auc": metrics.auc,
            "test_macro_f1": metrics.macro_f1,
            "test_loss": metrics.loss,
        });
        lines.push_str(&record.to_string());
        lines.push('\n');
        println!(
            "sweep {}={value}: test auc {:?}, macro-f1 {:.4}",
            param.name(),
            metrics.auc,
            metrics.macro_f1
        );
    }
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| Error::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    std::fs::write(out, lines).map_err(|source| Error::Io {
        path: out.clone(),
        source,
    })?;
    Ok(())
}

pub fn run_gradcheck(common: &CommonArgs, h: f64) -> Result<()> {
    let out = require_out(common)?;
    let seed = common.seed.unwrap_or(0);
    if h <= 0.0 {
        return Err(Error::Config(format!("step {h} must be positive")));
    }

    // Built-in fixture: a few small graphs with mixed densities.
    let normals = generate_er_dataset::<f64>(4, 6, 0.4, 3, seed)?;
    let mut records = normals.records().to_vec();
    for (i, r) in records.iter_mut().enumerate() {
        r.label = (i % 2) as u8;
    }
    let data = Dataset::new(records)?;
    let cfg = TrainConfig {
        hidden_dim: 10,
        wavelets: 3,
        base_order: 3,
        ..TrainConfig::default()
    };
    let model_config = cfg.model_config(data.feature_dim());
    let prepared = prepare_dataset(&data, &model_config)?;
    let params = ModelParams::<f64>::init(&model_config, seed);
    let loss_cfg = LossConfig::new(cfg.beta, cfg.gamma, (300, 100))?;
    let batch: Vec<&PreparedGraph<f64>> = prepared.iter().collect();
    let max_rel_error = gradient_check(&params, &batch, &loss_cfg, cfg.dropout, seed, h)?;
    let threshold = 1e-4;
    let pass = max_rel_error <= threshold;
    write_json_file(
        out,
        &json!({
            "max_rel_error": max_rel_error,
            "h": h,
            "threshold": threshold,
            "parameters": params.parameter_count(),
            "seed": seed,
            "pass": pass,
        }),
    )?;
    println!(
        "gradcheck: max relative error {max_rel_error:.3e} over {} parameters",
        params.parameter_count()
    );
    if pass {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "gradient check failed: {max_rel_error:.3e} > {threshold:.0e}"
        )))
    }
}
