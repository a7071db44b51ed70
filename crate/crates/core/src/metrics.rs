//! Evaluation metrics: rank-based AUC and Macro-F1.

use serde::{Deserialize, Serialize};

/// Row = true label (0 normal, 1 anomalous), column = prediction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: [[usize; 2]; 2],
}

impl Confusion {
    pub fn record(&mut self, label: u8, prediction: u8) {
        self.counts[label as usize][prediction as usize] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn is_diagonal(&self) -> bool {
        self.counts[0][1] == 0 && self.counts[1][0] == 0
    }
}

/// Evaluation summary of one split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    /// Probability a random anomalous graph outscores a random normal one
    /// (ties count one half); undefined when a class is absent.
    pub auc: Option<f64>,
    pub macro_f1: f64,
    pub loss: f64,
    pub confusion: Confusion,
}

/// Mann-Whitney AUC of anomaly scores via average ranks, so ties contribute
/// one half. Returns `None` when either class is empty.
pub fn auc(scored: &[(f64, bool)]) -> Option<f64> {
    let positives = scored.iter().filter(|(_, anomalous)| *anomalous).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&i, &j| {
        scored[i]
            .0
            .partial_cmp(&scored[j].0)
            .expect("finite scores")
    });
    // Average ranks over tie groups.
    let mut rank_sum_positive = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scored[order[j]].0 == scored[order[i]].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if scored[idx].1 {
                rank_sum_positive += avg_rank;
            }
        }
        i = j;
    }
    let p = positives as f64;
    let n = negatives as f64;
    Some((rank_sum_positive - p * (p + 1.0) / 2.0) / (p * n))
}

/// Unweighted mean of the per-class F1 scores. A class with no true members
/// and no predictions contributes zero.
pub fn macro_f1(confusion: &Confusion) -> f64 {
    let f1 = |class: usize| -> f64 {
        let tp = confusion.counts[class][class] as f64;
        let fp = confusion.counts[1 - class][class] as f64;
        let fn_ = confusion.counts[class][1 - class] as f64;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        }
    };
    (f1(0) + f1(1)) / 2.0
}
