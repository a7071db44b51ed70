//! TUDataset plain-text corpus format.
//!
//! Four files per corpus, all 1-indexed:
//! `<name>_A.txt` with one directed pair "i, j" per line (both directions
//! listed), `<name>_graph_indicator.txt` mapping node k to its graph id,
//! `<name>_graph_labels.txt` with one integer per graph, and
//! `<name>_node_labels.txt` with one integer per node. Node attributes are
//! the one-hot encoding of the node labels over the corpus-wide vocabulary.
//!
//! The class with fewer graphs in the label file becomes the anomalous class
//! (ties broken toward the numerically larger raw label).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dataset::{Dataset, GraphRecord, LABEL_ANOMALOUS, LABEL_NORMAL};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

fn read_file(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile {
            path: path.to_path_buf(),
        });
    }
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn parse_int(token: &str, file: &str, line: usize) -> Result<i64> {
    token.trim().parse::<i64>().map_err(|_| Error::Parse {
        file: file.to_string(),
        line,
        message: format!("expected an integer, found {:?}", token.trim()),
    })
}

fn parse_int_lines(path: &Path) -> Result<Vec<i64>> {
    let text = read_file(path)?;
    let file = file_name(path);
    text.lines()
        .enumerate()
        .map(|(i, l)| parse_int(l, &file, i + 1))
        .collect()
}

/// Parses a TUDataset corpus rooted at `directory/<name>_*.txt`.
pub fn parse_tudataset<S: Scalar>(directory: &Path, name: &str) -> Result<Dataset<S>> {
    let path_for = |suffix: &str| -> PathBuf { directory.join(format!("{name}_{suffix}.txt")) };

    let indicator = parse_int_lines(&path_for("graph_indicator"))?;
    let indicator_file = file_name(&path_for("graph_indicator"));
    let total_nodes = indicator.len();
    if total_nodes == 0 {
        return Err(Error::Parse {
            file: indicator_file,
            line: 1,
            message: "graph indicator is empty".to_string(),
        });
    }

    // Graph ids in the file are arbitrary positive integers; records are
    // emitted in ascending id order with nodes numbered by appearance.
    let mut graphs: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    let mut local_index = vec![(0i64, 0usize); total_nodes];
    for (node, &gid) in indicator.iter().enumerate() {
        if gid < 1 {
            return Err(Error::Parse {
                file: indicator_file.clone(),
                line: node + 1,
                message: format!("graph id {gid} must be positive"),
            });
        }
        let members = graphs.entry(gid).or_default();
        local_index[node] = (gid, members.len());
        members.push(node);
    }

    let node_labels = parse_int_lines(&path_for("node_labels"))?;
    if node_labels.len() != total_nodes {
        return Err(Error::Parse {
            file: file_name(&path_for("node_labels")),
            line: node_labels.len() + 1,
            message: format!(
                "{} node labels for {total_nodes} indicator entries",
                node_labels.len()
            ),
        });
    }
    let mut vocab: Vec<i64> = node_labels.clone();
    vocab.sort_unstable();
    vocab.dedup();
    let feature_index: BTreeMap<i64, usize> =
        vocab.iter().enumerate().map(|(i, &v)| (v, i)).collect();

    let raw_graph_labels = parse_int_lines(&path_for("graph_labels"))?;
    if raw_graph_labels.len() != graphs.len() {
        return Err(Error::Parse {
            file: file_name(&path_for("graph_labels")),
            line: raw_graph_labels.len() + 1,
            message: format!(
                "{} graph labels for {} graphs",
                raw_graph_labels.len(),
                graphs.len()
            ),
        });
    }
    let anomalous_raw =
        anomalous_raw_label(&raw_graph_labels, &file_name(&path_for("graph_labels")))?;

    // Adjacency: validate endpoints, convert to per-graph local 0-based pairs.
    let adjacency_path = path_for("A");
    let adjacency_file = file_name(&adjacency_path);
    let text = read_file(&adjacency_path)?;
    let mut per_graph_edges: BTreeMap<i64, Vec<(usize, usize)>> =
        graphs.keys().map(|&g| (g, Vec::new())).collect();
    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let mut parts = raw_line.split(',');
        let a = parse_int(parts.next().unwrap_or(""), &adjacency_file, line)?;
        let b = parse_int(parts.next().unwrap_or(""), &adjacency_file, line)?;
        if parts.next().is_some() {
            return Err(Error::Parse {
                file: adjacency_file.clone(),
                line,
                message: "expected exactly two comma-separated node ids".to_string(),
            });
        }
        for v in [a, b] {
            if v < 1 || v as usize > total_nodes {
                return Err(Error::Parse {
                    file: adjacency_file.clone(),
                    line,
                    message: format!("node id {v} outside 1..={total_nodes}"),
                });
            }
        }
        if a == b {
            return Err(Error::Parse {
                file: adjacency_file.clone(),
                line,
                message: format!("self-loop on node {a}"),
            });
        }
        let (ga, la) = local_index[(a - 1) as usize];
        let (gb, lb) = local_index[(b - 1) as usize];
        if ga != gb {
            return Err(Error::Parse {
                file: adjacency_file.clone(),
                line,
                message: format!("edge ({a}, {b}) crosses graphs {ga} and {gb}"),
            });
        }
        per_graph_edges
            .get_mut(&ga)
            .expect("graph id present")
            .push((la.min(lb), la.max(lb)));
    }

    let mut records = Vec::with_capacity(graphs.len());
    for (pos, (&gid, members)) in graphs.iter().enumerate() {
        let n = members.len();
        let mut features = DenseMatrix::zeros(n, vocab.len());
        for (local, &node) in members.iter().enumerate() {
            features.set(local, feature_index[&node_labels[node]], S::one());
        }
        let label = if raw_graph_labels[pos] == anomalous_raw {
            LABEL_ANOMALOUS
        } else {
            LABEL_NORMAL
        };
        let edges = per_graph_edges.remove(&gid).unwrap_or_default();
        records.push(GraphRecord::new(n, edges, features, label)?);
    }
    Dataset::new(records)
}

/// Picks the raw label value treated as anomalous: the minority class, ties
/// broken toward the larger raw label. A single-class file is all normal,
/// so a sentinel no raw label equals is returned.
fn anomalous_raw_label(labels: &[i64], file: &str) -> Result<i64> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    match counts.len() {
        0 | 1 => Ok(i64::MIN),
        2 => {
            let pairs: Vec<(i64, usize)> = counts.into_iter().collect();
            let (lo, hi) = (pairs[0], pairs[1]);
            Ok(if hi.1 <= lo.1 { hi.0 } else { lo.0 })
        }
        n => Err(Error::Parse {
            file: file.to_string(),
            line: 1,
            message: format!("expected at most two distinct graph labels, found {n}"),
        }),
    }
}

/// Serializes a dataset back to TUDataset text. Node labels are written as
/// the argmax feature column, graph labels as 0 (normal) / 1 (anomalous), and
/// every edge is listed in both directions.
pub fn write_tudataset<S: Scalar>(
    dataset: &Dataset<S>,
    directory: &Path,
    name: &str,
) -> Result<()> {
    std::fs::create_dir_all(directory).map_err(|source| Error::Io {
        path: directory.to_path_buf(),
        source,
    })?;
    let mut adjacency = String::new();
    let mut indicator = String::new();
    let mut graph_labels = String::new();
    let mut node_labels = String::new();

    let mut node_base = 0usize;
    for (g, record) in dataset.records().iter().enumerate() {
        let _ = writeln!(graph_labels, "{}", record.label);
        for local in 0..record.node_count {
            let _ = writeln!(indicator, "{}", g + 1);
            let row = record.features.row(local);
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite features"))
                .map(|(i, _)| i)
                .unwrap_or(0);
            let _ = writeln!(node_labels, "{argmax}");
        }
        for &(a, b) in &record.edges {
            let (ga, gb) = (node_base + a + 1, node_base + b + 1);
            let _ = writeln!(adjacency, "{ga}, {gb}");
            let _ = writeln!(adjacency, "{gb}, {ga}");
        }
        node_base += record.node_count;
    }

    for (suffix, contents) in [
        ("A", adjacency),
        ("graph_indicator", indicator),
        ("graph_labels", graph_labels),
        ("node_labels", node_labels),
    ] {
        let path = directory.join(format!("{name}_{suffix}.txt"));
        std::fs::write(&path, contents).map_err(|source| Error::Io { path, source })?;
    }
    Ok(())
}
