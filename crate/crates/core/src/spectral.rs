//! Spectral-energy analytics: per-eigenvalue energy, high-frequency energy,
//! the accumulated-energy integral identity, Rayleigh Quotient histograms,
//! subsample distance ratios, and runtime checks of the perturbation bounds.

use serde::{Deserialize, Serialize};

use crate::dataset::GraphRecord;
use crate::error::{Error, Result};
use crate::linalg::{
    build_laplacian, eigendecompose_sym, rayleigh_quotient, LaplacianKind, SparseSymMatrix,
    SpectralDecomposition,
};
use crate::rng::{stream, Rng};
use crate::scalar::Scalar;

/// Distribution of a signal's energy across the spectrum of a symmetric
/// matrix: `energies[k]` is the squared Fourier coefficient at eigenvalue `k`
/// normalized to total one.
#[derive(Debug, Clone)]
pub struct EnergyProfile<S> {
    pub eigenvalues: Vec<S>,
    pub energies: Vec<S>,
}

impl<S: Scalar> EnergyProfile<S> {
    /// High-frequency energy `E(t)`: the fraction of energy strictly above
    /// frequency `t`.
    pub fn high_frequency_energy(&self, t: S) -> S {
        let mut below = S::zero();
        for (lambda, e) in self.eigenvalues.iter().zip(&self.energies) {
            if *lambda <= t {
                below += *e;
            }
        }
        S::one() - below
    }

    pub fn total(&self) -> S {
        self.energies.iter().copied().sum()
    }
}

/// Projects a signal onto the eigenbasis and normalizes the squared
/// coefficients.
pub fn energy_profile<S: Scalar>(
    decomp: &SpectralDecomposition<S>,
    x: &[S],
) -> Result<EnergyProfile<S>> {
    let n = decomp.dim();
    if x.len() != n {
        return Err(Error::Shape(format!(
            "signal length {} does not match dimension {n}",
            x.len()
        )));
    }
    // x_hat = U^T x
    let mut coeffs = vec![S::zero(); n];
    for (k, c) in coeffs.iter_mut().enumerate() {
        let mut acc = S::zero();
        for (r, &xv) in x.iter().enumerate() {
            acc += decomp.eigenvectors.get(r, k) * xv;
        }
        *c = acc;
    }
    let total: S = coeffs.iter().map(|&c| c * c).sum();
    if total == S::zero() {
        return Err(Error::DegenerateSignal);
    }
    let energies = coeffs.iter().map(|&c| c * c / total).collect();
    Ok(EnergyProfile {
        eigenvalues: decomp.eigenvalues.clone(),
        energies,
    })
}

/// Piecewise-constant integral of the high-frequency energy over
/// `[0, lambda_n]`: the leading segment `[0, lambda_1)` where `E = 1` plus
/// one segment per eigenvalue gap. By the accumulated-energy identity this
/// equals the Rayleigh Quotient of the signal.
pub fn accumulated_energy_integral<S: Scalar>(
    decomp: &SpectralDecomposition<S>,
    x: &[S],
) -> Result<S> {
    let profile = energy_profile(decomp, x)?;
    let lambdas = &profile.eigenvalues;
    let n = lambdas.len();
    let mut integral = lambdas[0];
    let mut cumulative = S::zero();
    for k in 0..n - 1 {
        cumulative += profile.energies[k];
        integral += (S::one() - cumulative) * (lambdas[k + 1] - lambdas[k]);
    }
    Ok(integral)
}

/// Class-conditional histogram of pooled Rayleigh Quotient values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RqHistogram {
    /// `bins + 1` strictly increasing edges over the pooled value range.
    pub bin_edges: Vec<f64>,
    /// Per-bin frequency of normal-graph values, summing to one when the
    /// class is non-empty.
    pub freq_normal: Vec<f64>,
    /// Per-bin frequency of anomalous-graph values.
    pub freq_anomalous: Vec<f64>,
    /// (normal, anomalous) graph counts.
    pub counts: (usize, usize),
}

impl RqHistogram {
    /// Total-variation distance between the two class distributions.
    pub fn total_variation(&self) -> f64 {
        total_variation(&self.freq_normal, &self.freq_anomalous)
    }
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(&a, &b)| (a - b).abs()).sum::<f64>()
}

/// Rayleigh Quotient vector of one graph over its raw features with the
/// regular Laplacian — the convention every histogram in the crate uses.
pub fn graph_rq_values<S: Scalar>(graph: &GraphRecord<S>) -> Vec<f64> {
    let l = build_laplacian(graph, LaplacianKind::Regular);
    rayleigh_quotient(&l, &graph.features)
        .expect("features match the graph's own Laplacian")
        .into_iter()
        .map(Scalar::to_f64_lossy)
        .collect()
}

/// Pools the Rayleigh Quotient values of all graphs and bins them on the
/// global value range with `bins` equal-width bins (the maximum lands in the
/// last bin). Per-class counts are normalized to frequencies.
///
/// When every pooled value is identical the histogram collapses to a single
/// bin of nominal unit width holding frequency one.
pub fn rq_histogram<S: Scalar>(graphs: &[GraphRecord<S>], bins: usize) -> Result<RqHistogram> {
    if graphs.is_empty() {
        return Err(Error::Config("histogram needs at least one graph".into()));
    }
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let per_graph: Vec<(bool, Vec<f64>)> = graphs
        .iter()
        .map(|g| (g.is_anomalous(), graph_rq_values(g)))
        .collect();
    let lo = per_graph
        .iter()
        .flat_map(|(_, v)| v)
        .copied()
        .fold(f64::INFINITY, f64::min);
    let hi = per_graph
        .iter()
        .flat_map(|(_, v)| v)
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);

    let (edges, bins) = if hi > lo {
        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..=bins).map(|b| lo + width * b as f64).collect();
        edges[bins] = hi;
        (edges, bins)
    } else {
        (vec![lo, lo + 1.0], 1)
    };

    let mut count_normal = vec![0usize; bins];
    let mut count_anomalous = vec![0usize; bins];
    let mut graphs_normal = 0usize;
    let mut graphs_anomalous = 0usize;
    for (anomalous, values) in &per_graph {
        if *anomalous {
            graphs_anomalous += 1;
        } else {
            graphs_normal += 1;
        }
        for &v in values {
            let mut b = if hi > lo {
                (((v - lo) / (hi - lo)) * bins as f64).floor() as usize
            } else {
                0
            };
            if b >= bins {
                b = bins - 1;
            }
            if *anomalous {
                count_anomalous[b] += 1;
            } else {
                count_normal[b] += 1;
            }
        }
    }

    Ok(RqHistogram {
        bin_edges: edges,
        freq_normal: normalize(&count_normal),
        freq_anomalous: normalize(&count_anomalous),
        counts: (graphs_normal, graphs_anomalous),
    })
}

fn normalize(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// Per-bin inter/intra distance ratios between the Rayleigh Quotient
/// distributions of two classes. `None` marks a ratio whose intra-class
/// denominator is zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistanceRatios {
    pub bin_edges: Vec<f64>,
    pub inter: Vec<f64>,
    pub intra_anomalous: Vec<f64>,
    pub intra_normal: Vec<f64>,
    pub ratio_vs_anomalous: Vec<Option<f64>>,
    pub ratio_vs_normal: Vec<Option<f64>>,
}

/// Splits each class into `subsamples` disjoint random parts, computes each
/// part's normalized histogram on the shared global bin range, and reports
/// per bin the mean absolute cross-class frequency difference divided by the
/// mean absolute within-class difference.
pub fn distance_ratios<S: Scalar>(
    class_anomalous: &[GraphRecord<S>],
    class_normal: &[GraphRecord<S>],
    bins: usize,
    subsamples: usize,
    seed: u64,
) -> Result<DistanceRatios> {
    if subsamples < 2 {
        return Err(Error::Config("need at least two subsamples".into()));
    }
    for (name, class) in [("anomalous", class_anomalous), ("normal", class_normal)] {
        if class.len() < subsamples {
            return Err(Error::Config(format!(
                "{name} class has {} graphs, fewer than {subsamples} subsamples",
                class.len()
            )));
        }
    }

    let values_a: Vec<Vec<f64>> = class_anomalous.iter().map(graph_rq_values).collect();
    let values_n: Vec<Vec<f64>> = class_normal.iter().map(graph_rq_values).collect();
    let all: Vec<f64> = values_a
        .iter()
        .chain(values_n.iter())
        .flatten()
        .copied()
        .collect();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (edges, bins) = if hi > lo {
        (
            (0..=bins)
                .map(|b| lo + (hi - lo) * b as f64 / bins as f64)
                .collect(),
            bins,
        )
    } else {
        (vec![lo, lo + 1.0], 1)
    };

    let root = Rng::new(seed).fork(stream::SUBSAMPLE);
    let hists_a = subsample_histograms(&values_a, lo, hi, bins, subsamples, &mut root.fork(0));
    let hists_n = subsample_histograms(&values_n, lo, hi, bins, subsamples, &mut root.fork(1));

    let mut inter = vec![0.0; bins];
    for ha in &hists_a {
        for hn in &hists_n {
            for b in 0..bins {
                inter[b] += (ha[b] - hn[b]).abs();
            }
        }
    }
    let cross_pairs = (hists_a.len() * hists_n.len()) as f64;
    for v in inter.iter_mut() {
        *v /= cross_pairs;
    }

    let intra_anomalous = mean_pairwise_abs_diff(&hists_a, bins);
    let intra_normal = mean_pairwise_abs_diff(&hists_n, bins);

    let ratio = |num: &[f64], den: &[f64]| -> Vec<Option<f64>> {
        num.iter()
            .zip(den)
            .map(|(&n, &d)| if d > 0.0 { Some(n / d) } else { None })
            .collect()
    };
    Ok(DistanceRatios {
        ratio_vs_anomalous: ratio(&inter, &intra_anomalous),
        ratio_vs_normal: ratio(&inter, &intra_normal),
        bin_edges: edges,
        inter,
        intra_anomalous,
        intra_normal,
    })
}

fn subsample_histograms(
    per_graph: &[Vec<f64>],
    lo: f64,
    hi: f64,
    bins: usize,
    subsamples: usize,
    rng: &mut Rng,
) -> Vec<Vec<f64>> {
    let mut order: Vec<usize> = (0..per_graph.len()).collect();
    rng.shuffle(&mut order);
    let mut hists = Vec::with_capacity(subsamples);
    for part in 0..subsamples {
        let members = order
            .iter()
            .enumerate()
            .filter(|(pos, _)| pos % subsamples == part)
            .map(|(_, &g)| g);
        let mut counts = vec![0usize; bins];
        for g in members {
            for &v in &per_graph[g] {
                let mut b = if hi > lo {
                    (((v - lo) / (hi - lo)) * bins as f64).floor() as usize
                } else {
                    0
                };
                if b >= bins {
                    b = bins - 1;
                }
                counts[b] += 1;
            }
        }
        hists.push(normalize(&counts));
    }
    hists
}

fn mean_pairwise_abs_diff(hists: &[Vec<f64>], bins: usize) -> Vec<f64> {
    let mut acc = vec![0.0; bins];
    let mut pairs = 0.0;
    for i in 0..hists.len() {
        for j in i + 1..hists.len() {
            for b in 0..bins {
                acc[b] += (hists[i][b] - hists[j][b]).abs();
            }
            pairs += 1.0;
        }
    }
    if pairs > 0.0 {
        for v in acc.iter_mut() {
            *v /= pairs;
        }
    }
    acc
}

/// Runtime check of the two perturbation bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationReport {
    /// |RQ(x, L + delta_l) - RQ(x, L)|.
    pub rq_change: f64,
    /// Spectral norm of the matrix perturbation, from the oracle.
    pub delta_spectral_norm: f64,
    /// Whether `rq_change <= delta_spectral_norm + 1e-10`.
    pub matrix_bound_holds: bool,
    /// (x+d)^T L (x+d) - x^T L x.
    pub signal_change: f64,
    /// 2 x^T L d + d^T L d.
    pub signal_expansion: f64,
    /// |signal_change - signal_expansion|.
    pub signal_identity_residual: f64,
    /// Whether the expansion identity holds to 1e-10.
    pub signal_identity_holds: bool,
}

/// Measures the Rayleigh Quotient change under a symmetric matrix
/// perturbation against its spectral-norm bound, and the exact quadratic-form
/// expansion under a signal perturbation.
pub fn verify_perturbation_bounds<S: Scalar>(
    l: &SparseSymMatrix<S>,
    x: &[S],
    delta_matrix: &SparseSymMatrix<S>,
    delta_signal: &[S],
) -> Result<PerturbationReport> {
    if delta_matrix.dim() != l.dim() {
        return Err(Error::Shape(format!(
            "perturbation dimension {} does not match matrix dimension {}",
            delta_matrix.dim(),
            l.dim()
        )));
    }
    if x.len() != l.dim() || delta_signal.len() != l.dim() {
        return Err(Error::Shape("signal length mismatch".into()));
    }

    let rq_base = crate::linalg::rayleigh_quotient_vec(l, x)?.to_f64_lossy();
    let perturbed = l.add(delta_matrix)?;
    let rq_perturbed = crate::linalg::rayleigh_quotient_vec(&perturbed, x)?.to_f64_lossy();
    let rq_change = (rq_perturbed - rq_base).abs();
    let delta_spectral_norm = eigendecompose_sym(delta_matrix)?
        .spectral_norm()
        .to_f64_lossy();

    let quad = |v: &[S]| -> f64 {
        let mut lv = vec![S::zero(); v.len()];
        l.matvec(v, &mut lv);
        crate::linalg::dense::dot(v, &lv).to_f64_lossy()
    };
    let shifted: Vec<S> = x.iter().zip(delta_signal).map(|(&a, &b)| a + b).collect();
    let signal_change = quad(&shifted) - quad(x);
    let mut lx = vec![S::zero(); x.len()];
    l.matvec(x, &mut lx);
    let cross = crate::linalg::dense::dot(delta_signal, &lx).to_f64_lossy();
    let signal_expansion = 2.0 * cross + quad(delta_signal);
    let signal_identity_residual = (signal_change - signal_expansion).abs();

    Ok(PerturbationReport {
        rq_change,
        delta_spectral_norm,
        matrix_bound_holds: rq_change <= delta_spectral_norm + 1e-10,
        signal_change,
        signal_expansion,
        signal_identity_residual,
        signal_identity_holds: signal_identity_residual <= 1e-10,
    })
}
