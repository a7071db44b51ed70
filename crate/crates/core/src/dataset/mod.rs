//! Graph corpora: record types, TUDataset ingestion, stratified splits, and
//! synthetic perturbation datasets.

mod tudataset;

pub use tudataset::{parse_tudataset, write_tudataset};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::{stream, Rng};
use crate::scalar::Scalar;

/// Label of a normal graph.
pub const LABEL_NORMAL: u8 = 0;
/// Label of an anomalous graph.
pub const LABEL_ANOMALOUS: u8 = 1;

/// One attributed undirected graph with a binary class label.
///
/// Edges are unordered pairs stored as `(lo, hi)` with `lo < hi`, without
/// duplicates or self-loops. Disconnected and edgeless graphs are accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord<S> {
    pub node_count: usize,
    pub edges: Vec<(usize, usize)>,
    pub features: DenseMatrix<S>,
    pub label: u8,
}

impl<S: Scalar> GraphRecord<S> {
    /// Validates invariants and normalizes the edge list (each unordered pair
    /// once, ascending).
    pub fn new(
        node_count: usize,
        edges: Vec<(usize, usize)>,
        features: DenseMatrix<S>,
        label: u8,
    ) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::Shape("graph must have at least one node".into()));
        }
        if features.rows() != node_count {
            return Err(Error::Shape(format!(
                "feature matrix has {} rows for {} nodes",
                features.rows(),
                node_count
            )));
        }
        let mut normalized: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a == b {
                return Err(Error::Shape(format!("self-loop on node {a}")));
            }
            if a >= node_count || b >= node_count {
                return Err(Error::Shape(format!(
                    "edge ({a}, {b}) out of range for {node_count} nodes"
                )));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        normalized.dedup();
        Ok(GraphRecord {
            node_count,
            edges: normalized,
            features,
            label,
        })
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn is_anomalous(&self) -> bool {
        self.label == LABEL_ANOMALOUS
    }
}

/// An immutable collection of graphs sharing one feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<S> {
    records: Vec<GraphRecord<S>>,
    feature_dim: usize,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(records: Vec<GraphRecord<S>>) -> Result<Self> {
        let feature_dim = records
            .first()
            .map(GraphRecord::feature_dim)
            .ok_or_else(|| Error::Shape("dataset must contain at least one graph".into()))?;
        if feature_dim == 0 {
            return Err(Error::Shape("feature dimension must be positive".into()));
        }
        for (i, r) in records.iter().enumerate() {
            if r.feature_dim() != feature_dim {
                return Err(Error::Shape(format!(
                    "graph {i} has feature dim {} but dataset uses {feature_dim}",
                    r.feature_dim()
                )));
            }
        }
        Ok(Dataset {
            records,
            feature_dim,
        })
    }

    pub fn records(&self) -> &[GraphRecord<S>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// (normal count, anomalous count).
    pub fn class_counts(&self) -> (usize, usize) {
        let anomalous = self.records.iter().filter(|r| r.is_anomalous()).count();
        (self.records.len() - anomalous, anomalous)
    }
}

/// Ratios and seed for a stratified train/validation/test split.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Result<Self> {
        for (name, r) in [("train", train), ("val", val), ("test", test)] {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::Config(format!(
                    "{name} ratio {r} must lie strictly inside (0, 1)"
                )));
            }
        }
        if (train + val + test - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "ratios sum to {}, expected 1",
                train + val + test
            )));
        }
        Ok(SplitSpec {
            train,
            val,
            test,
            seed,
        })
    }
}

/// Splits a dataset per class: members are shuffled with the seeded generator
/// and cut at the ratio boundaries, flooring the train and validation counts
/// and sending the remainder to test. Record order inside each split follows
/// the original dataset order.
pub fn stratified_split<S: Scalar>(
    dataset: &Dataset<S>,
    spec: &SplitSpec,
) -> Result<(Dataset<S>, Dataset<S>, Dataset<S>)> {
    let root = Rng::new(spec.seed).fork(stream::SPLIT);
    let mut chosen: Vec<u8> = vec![0; dataset.len()];
    for class in [LABEL_NORMAL, LABEL_ANOMALOUS] {
        let mut members: Vec<usize> = dataset
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() < 3 {
            return Err(Error::Split(format!(
                "class {class} has only {} members; at least 3 are required",
                members.len()
            )));
        }
        let mut rng = root.fork(class as u64);
        rng.shuffle(&mut members);
        let n = members.len();
        // Guard against products like 0.7 * 90 landing just below the integer.
        let n_train = (spec.train * n as f64 + 1e-9).floor() as usize;
        let n_val = (spec.val * n as f64 + 1e-9).floor() as usize;
        for (pos, &idx) in members.iter().enumerate() {
            chosen[idx] = if pos < n_train {
                0
            } else if pos < n_train + n_val {
                1
            } else {
                2
            };
        }
    }
    let collect = |bucket: u8| -> Result<Dataset<S>> {
        Dataset::new(
            dataset
                .records
                .iter()
                .enumerate()
                .filter(|(i, _)| chosen[*i] == bucket)
                .map(|(_, r)| r.clone())
                .collect(),
        )
    };
    Ok((collect(0)?, collect(1)?, collect(2)?))
}

/// Builds a perturbation anomaly corpus: a seeded fraction of the normal
/// graphs is copied with every unordered node pair independently flipping its
/// adjacency bit with probability `flip_prob`, and the copies are labeled
/// anomalous. The output holds the untouched normal graphs plus the perturbed
/// copies; originals of perturbed graphs (and any anomalous inputs) are
/// excluded.
pub fn perturb_dataset<S: Scalar>(
    dataset: &Dataset<S>,
    sample_fraction: f64,
    flip_prob: f64,
    seed: u64,
) -> Result<Dataset<S>> {
    if !(sample_fraction > 0.0 && sample_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "sample fraction {sample_fraction} must lie in (0, 1]"
        )));
    }
    if !(0.0..=1.0).contains(&flip_prob) {
        return Err(Error::Config(format!(
            "flip probability {flip_prob} must lie in [0, 1]"
        )));
    }
    let normals: Vec<usize> = dataset
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.is_anomalous())
        .map(|(i, _)| i)
        .collect();
    if normals.is_empty() {
        return Err(Error::Config("no normal graphs to perturb".into()));
    }
    let k = (sample_fraction * normals.len() as f64).ceil() as usize;
    let k = k.min(normals.len());

    let root = Rng::new(seed).fork(stream::PERTURB);
    let mut order = normals.clone();
    root.fork(0).shuffle(&mut order);
    let mut selected: Vec<usize> = order[..k].to_vec();
    selected.sort_unstable();

    let mut records = Vec::with_capacity(normals.len());
    for &idx in &normals {
        if !selected.contains(&idx) {
            records.push(dataset.records[idx].clone());
        }
    }
    for &idx in &selected {
        let original = &dataset.records[idx];
        let mut rng = root.fork(1 + idx as u64);
        records.push(flip_edges(original, flip_prob, &mut rng)?);
    }
    Dataset::new(records)
}

fn flip_edges<S: Scalar>(
    graph: &GraphRecord<S>,
    flip_prob: f64,
    rng: &mut Rng,
) -> Result<GraphRecord<S>> {
    let n = graph.node_count;
    let mut present: std::collections::BTreeSet<(usize, usize)> =
        graph.edges.iter().copied().collect();
    for i in 0..n {
        for j in i + 1..n {
            if rng.next_f64() < flip_prob {
                let pair = (i, j);
                if !present.remove(&pair) {
                    present.insert(pair);
                }
            }
        }
    }
    GraphRecord::new(
        n,
        present.into_iter().collect(),
        graph.features.clone(),
        LABEL_ANOMALOUS,
    )
}

/// Generates `count` normal Erdos-Renyi graphs with `nodes` nodes, edge
/// probability `edge_prob`, and node labels drawn uniformly from a vocabulary
/// of `label_count` values (one-hot encoded, so the feature dimension equals
/// `label_count`).
pub fn generate_er_dataset<S: Scalar>(
    count: usize,
    nodes: usize,
    edge_prob: f64,
    label_count: usize,
    seed: u64,
) -> Result<Dataset<S>> {
    if count == 0 || nodes == 0 || label_count == 0 {
        return Err(Error::Config(
            "ER generator needs positive counts and label vocabulary".into(),
        ));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::Config(format!(
            "edge probability {edge_prob} must lie in [0, 1]"
        )));
    }
    let root = Rng::new(seed).fork(stream::SYNTH);
    let mut records = Vec::with_capacity(count);
    for g in 0..count {
        let mut rng = root.fork(g as u64);
        let mut edges = Vec::new();
        for i in 0..nodes {
            for j in i + 1..nodes {
                if rng.next_f64() < edge_prob {
                    edges.push((i, j));
                }
            }
        }
        let mut features = DenseMatrix::zeros(nodes, label_count);
        for i in 0..nodes {
            features.set(i, rng.below(label_count), S::one());
        }
        records.push(GraphRecord::new(nodes, edges, features, LABEL_NORMAL)?);
    }
    Dataset::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot_features(labels: &[usize], dim: usize) -> DenseMatrix<f64> {
        let mut m = DenseMatrix::zeros(labels.len(), dim);
        for (i, &l) in labels.iter().enumerate() {
            m.set(i, l, 1.0);
        }
        m
    }

    fn toy_dataset(n_normal: usize, n_anomalous: usize) -> Dataset<f64> {
        let mut records = Vec::new();
        for i in 0..n_normal + n_anomalous {
            let label = if i < n_normal {
                LABEL_NORMAL
            } else {
                LABEL_ANOMALOUS
            };
            records.push(
                GraphRecord::new(
                    3,
                    vec![(0, 1), (1, 2)],
                    one_hot_features(&[0, 1, 0], 2),
                    label,
                )
                .unwrap(),
            );
        }
        Dataset::new(records).unwrap()
    }

    #[test]
    fn record_rejects_self_loops_and_out_of_range() {
        let f = one_hot_features(&[0, 0], 1);
        assert!(GraphRecord::new(2, vec![(1, 1)], f.clone(), 0).is_err());
        assert!(GraphRecord::new(2, vec![(0, 2)], f, 0).is_err());
    }

    #[test]
    fn record_deduplicates_both_directions() {
        let f = one_hot_features(&[0, 0], 1);
        let g = GraphRecord::new(2, vec![(0, 1), (1, 0)], f, 0).unwrap();
        assert_eq!(g.edges, vec![(0, 1)]);
    }

    #[test]
    fn split_counts_follow_per_class_floors() {
        let data = toy_dataset(90, 10);
        let spec = SplitSpec::new(0.7, 0.15, 0.15, 7).unwrap();
        let (train, val, test) = stratified_split(&data, &spec).unwrap();
        assert_eq!(train.class_counts(), (63, 7));
        assert_eq!(val.class_counts(), (13, 1));
        assert_eq!(test.class_counts(), (14, 2));
        assert_eq!(train.len() + val.len() + test.len(), 100);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let data = toy_dataset(20, 10);
        // Tag node counts so records are distinguishable.
        let mut records = data.records().to_vec();
        for (i, r) in records.iter_mut().enumerate() {
            r.features.set(0, 0, i as f64);
        }
        let data = Dataset::new(records).unwrap();
        let spec = SplitSpec::new(0.6, 0.2, 0.2, 99).unwrap();
        let (a1, b1, c1) = stratified_split(&data, &spec).unwrap();
        let (a2, b2, c2) = stratified_split(&data, &spec).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        assert_eq!(c1, c2);

        let mut tags: Vec<f64> = a1
            .records()
            .iter()
            .chain(b1.records())
            .chain(c1.records())
            .map(|r| r.features.get(0, 0))
            .collect();
        tags.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(tags, (0..30).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_degenerate_ratio_and_tiny_class() {
        assert!(SplitSpec::new(1.0, 0.0, 0.0, 1).is_err());
        assert!(SplitSpec::new(0.5, 0.3, 0.3, 1).is_err());
        let data = toy_dataset(10, 2);
        let spec = SplitSpec::new(0.7, 0.15, 0.15, 1).unwrap();
        assert!(matches!(
            stratified_split(&data, &spec),
            Err(Error::Split(_))
        ));
    }

    #[test]
    fn stratification_keeps_class_priors() {
        let data = toy_dataset(300, 30);
        let spec = SplitSpec::new(0.7, 0.15, 0.15, 3).unwrap();
        let prior = 30.0 / 330.0;
        let (train, val, test) = stratified_split(&data, &spec).unwrap();
        for split in [&train, &val, &test] {
            let (_, a) = split.class_counts();
            let frac = a as f64 / split.len() as f64;
            assert!((frac - prior).abs() <= 1.0 / split.len() as f64);
        }
    }

    #[test]
    fn perturb_zero_probability_only_relabels() {
        let data = toy_dataset(10, 0);
        let out = perturb_dataset(&data, 0.5, 0.0, 11).unwrap();
        assert_eq!(out.len(), 10);
        let (normal, anomalous) = out.class_counts();
        assert_eq!((normal, anomalous), (5, 5));
        for r in out.records().iter().filter(|r| r.is_anomalous()) {
            assert_eq!(r.edges, vec![(0, 1), (1, 2)]);
        }
    }

    #[test]
    fn perturb_full_probability_complements_path2() {
        let record = GraphRecord::new(2, vec![(0, 1)], one_hot_features(&[0, 0], 1), 0).unwrap();
        let data = Dataset::new(vec![record; 4]).unwrap();
        let out = perturb_dataset(&data, 1.0, 1.0, 5).unwrap();
        assert_eq!(out.len(), 4);
        for r in out.records() {
            assert!(r.is_anomalous());
            assert!(r.edges.is_empty());
        }
    }

    #[test]
    fn perturb_counts_match_fraction() {
        let data = toy_dataset(1000, 0);
        let out = perturb_dataset(&data, 0.05, 0.15, 1).unwrap();
        assert_eq!(out.len(), 1000);
        assert_eq!(out.class_counts(), (950, 50));
    }

    #[test]
    fn perturb_is_deterministic() {
        let data = toy_dataset(50, 0);
        let a = perturb_dataset(&data, 0.2, 0.3, 77).unwrap();
        let b = perturb_dataset(&data, 0.2, 0.3, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn perturb_rejects_bad_probabilities() {
        let data = toy_dataset(10, 0);
        assert!(perturb_dataset(&data, 0.5, -0.1, 1).is_err());
        assert!(perturb_dataset(&data, 0.5, 1.1, 1).is_err());
        assert!(perturb_dataset(&data, 0.0, 0.5, 1).is_err());
    }

    #[test]
    fn flip_count_statistics_match_bernoulli_mean() {
        let n = 12usize;
        let pairs = n * (n - 1) / 2;
        let p = 0.2;
        let trials = 400;
        let base =
            GraphRecord::<f64>::new(n, vec![(0, 1), (2, 3), (4, 5)], DenseMatrix::zeros(n, 1), 0)
                .unwrap();
        let mut rng = Rng::new(123);
        let mut total = 0usize;
        for _ in 0..trials {
            let flipped = flip_edges(&base, p, &mut rng).unwrap();
            let before: std::collections::BTreeSet<_> = base.edges.iter().copied().collect();
            let after: std::collections::BTreeSet<_> = flipped.edges.iter().copied().collect();
            total += before.symmetric_difference(&after).count();
        }
        let mean = total as f64 / trials as f64;
        let expect = p * pairs as f64;
        let se = (pairs as f64 * p * (1.0 - p) / trials as f64).sqrt();
        assert!(
            (mean - expect).abs() <= 3.0 * se,
            "mean {mean} expect {expect} se {se}"
        );
    }

    #[test]
    fn er_generator_hits_expected_edge_count() {
        let data = generate_er_dataset::<f64>(200, 26, 28.0 / 325.0, 5, 42).unwrap();
        assert_eq!(data.len(), 200);
        assert_eq!(data.feature_dim(), 5);
        let mean_edges = data
            .records()
            .iter()
            .map(GraphRecord::edge_count)
            .sum::<usize>() as f64
            / 200.0;
        assert!((mean_edges - 28.0).abs() < 2.0, "mean edges {mean_edges}");
        for r in data.records() {
            assert!(!r.is_anomalous());
            for row in 0..r.node_count {
                let s: f64 = r.features.row(row).iter().sum();
                assert_eq!(s, 1.0);
            }
        }
    }
}
