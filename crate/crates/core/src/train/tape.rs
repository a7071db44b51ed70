//! Reverse-mode gradient tape.
//!
//! Forward passes append operation records with cached values; nodes only
//! reference earlier nodes, so walking the tape backwards is a valid reverse
//! topological order. Each record knows its vector-Jacobian product: sparse
//! filter nodes reuse the Chebyshev recurrence (the filter is symmetric),
//! the Rayleigh node differentiates the guarded ratio, and dropout replays
//! its stored mask.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SparseSymMatrix, RQ_DENOMINATOR_GUARD};
use crate::model::{ParamId, BN_EPS};
use crate::scalar::Scalar;
use crate::train::loss::cb_focal_with_weight;
use crate::wavelet::apply_chebyshev_filter;

pub type NodeId = usize;

/// Gradients keyed by parameter.
#[derive(Debug, Clone)]
pub struct Gradients<S> {
    map: BTreeMap<ParamId, DenseMatrix<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn new() -> Self {
        Gradients {
            map: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, id: ParamId, grad: DenseMatrix<S>) {
        match self.map.get_mut(&id) {
            Some(existing) => existing.axpy(S::one(), &grad),
            None => {
                self.map.insert(id, grad);
            }
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&DenseMatrix<S>> {
        self.map.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamId, &DenseMatrix<S>)> {
        self.map.iter()
    }

    pub fn max_abs(&self) -> S {
        self.map
            .values()
            .fold(S::zero(), |acc, g| acc.max(g.max_abs()))
    }
}

impl<S: Scalar> Default for Gradients<S> {
    fn default() -> Self {
        Self::new()
    }
}

enum Op<S> {
    Leaf {
        param: Option<ParamId>,
    },
    MatMul {
        a: NodeId,
        b: NodeId,
    },
    AddRowBias {
        x: NodeId,
        bias: NodeId,
    },
    Relu {
        x: NodeId,
    },
    Transpose {
        x: NodeId,
    },
    ConcatCols {
        parts: Vec<NodeId>,
    },
    ConcatRows {
        parts: Vec<NodeId>,
    },
    Tile {
        x: NodeId,
        times: usize,
    },
    Rayleigh {
        x: NodeId,
        lap: Arc<SparseSymMatrix<S>>,
    },
    ChebFilter {
        x: NodeId,
        lap: Arc<SparseSymMatrix<S>>,
        coeffs: Arc<Vec<S>>,
        lambda_max: S,
    },
    BatchNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mean: Vec<S>,
        var: Vec<S>,
    },
    Dropout {
        x: NodeId,
        mask: DenseMatrix<S>,
    },
    CbFocal {
        logits: NodeId,
        labels: Vec<u8>,
        weights: Vec<S>,
        gamma: S,
    },
}

pub struct GradientTape<S> {
    ops: Vec<Op<S>>,
    values: Vec<DenseMatrix<S>>,
    loss_node: Option<NodeId>,
}

impl<S: Scalar> GradientTape<S> {
    pub fn new() -> Self {
        GradientTape {
            ops: Vec::new(),
            values: Vec::new(),
            loss_node: None,
        }
    }

    fn push(&mut self, op: Op<S>, value: DenseMatrix<S>) -> NodeId {
        self.ops.push(op);
        self.values.push(value);
        self.ops.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &DenseMatrix<S> {
        &self.values[id]
    }

    pub fn loss_value(&self) -> Option<S> {
        self.loss_node.map(|id| self.values[id].get(0, 0))
    }

    pub fn constant(&mut self, value: DenseMatrix<S>) -> NodeId {
        self.push(Op::Leaf { param: None }, value)
    }

    pub fn param(&mut self, id: ParamId, value: DenseMatrix<S>) -> NodeId {
        self.push(Op::Leaf { param: Some(id) }, value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.values[a].matmul(&self.values[b]);
        self.push(Op::MatMul { a, b }, value)
    }

    pub fn add_row_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let value = self.values[x].add_row_bias(self.values[bias].row(0));
        self.push(Op::AddRowBias { x, bias }, value)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.values[x].relu();
        self.push(Op::Relu { x }, value)
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let value = self.values[x].transpose();
        self.push(Op::Transpose { x }, value)
    }

    pub fn concat_cols(&mut self, parts: Vec<NodeId>) -> NodeId {
        let refs: Vec<&DenseMatrix<S>> = parts.iter().map(|&p| &self.values[p]).collect();
        let value = DenseMatrix::hconcat(&refs);
        self.push(Op::ConcatCols { parts }, value)
    }

    pub fn concat_rows(&mut self, parts: Vec<NodeId>) -> NodeId {
        let refs: Vec<&DenseMatrix<S>> = parts.iter().map(|&p| &self.values[p]).collect();
        let value = DenseMatrix::vconcat(&refs);
        self.push(Op::ConcatRows { parts }, value)
    }

    pub fn tile(&mut self, x: NodeId, times: usize) -> NodeId {
        let row = self.values[x].row(0);
        let value = DenseMatrix::from_vec(1, row.len() * times, crate::model::tile(row, times));
        self.push(Op::Tile { x, times }, value)
    }

    /// Per-column Rayleigh Quotient against a fixed sparse matrix, as a row.
    pub fn rayleigh(&mut self, x: NodeId, lap: Arc<SparseSymMatrix<S>>) -> Result<NodeId> {
        let rq = crate::linalg::rayleigh_quotient(&lap, &self.values[x])?;
        let value = DenseMatrix::from_vec(1, rq.len(), rq);
        Ok(self.push(Op::Rayleigh { x, lap }, value))
    }

    /// Chebyshev filter application; the operator is symmetric so the VJP is
    /// the same filter applied to the adjoint.
    pub fn cheb_filter(
        &mut self,
        x: NodeId,
        lap: Arc<SparseSymMatrix<S>>,
        coeffs: Arc<Vec<S>>,
        lambda_max: S,
    ) -> Result<NodeId> {
        let value = apply_chebyshev_filter(&lap, &self.values[x], &coeffs, lambda_max)?;
        Ok(self.push(
            Op::ChebFilter {
                x,
                lap,
                coeffs,
                lambda_max,
            },
            value,
        ))
    }

    /// Train-mode batch normalization over the rows of `x`; returns the node
    /// plus the biased batch statistics for the running-average update.
    pub fn batch_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
    ) -> (NodeId, Vec<S>, Vec<S>) {
        let input = &self.values[x];
        let (rows, cols) = (input.rows(), input.cols());
        let m = S::from_usize_lossy(rows);
        let mut mean = vec![S::zero(); cols];
        for r in 0..rows {
            for (acc, &v) in mean.iter_mut().zip(input.row(r)) {
                *acc += v;
            }
        }
        for v in mean.iter_mut() {
            *v /= m;
        }
        let mut var = vec![S::zero(); cols];
        for r in 0..rows {
            for (c, (acc, &v)) in var.iter_mut().zip(input.row(r)).enumerate() {
                let d = v - mean[c];
                *acc += d * d;
            }
        }
        for v in var.iter_mut() {
            *v /= m;
        }

        let eps = S::from_f64_lossy(BN_EPS);
        let gamma_row = self.values[gamma].row(0).to_vec();
        let beta_row = self.values[beta].row(0).to_vec();
        let mut out = DenseMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                let hat = (input.get(r, c) - mean[c]) / (var[c] + eps).sqrt();
                out.set(r, c, gamma_row[c] * hat + beta_row[c]);
            }
        }
        let id = self.push(
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean: mean.clone(),
                var: var.clone(),
            },
            out,
        );
        (id, mean, var)
    }

    /// Elementwise mask multiply; mask entries are 0 or 1/keep.
    pub fn dropout(&mut self, x: NodeId, mask: DenseMatrix<S>) -> NodeId {
        let input = &self.values[x];
        assert_eq!((input.rows(), input.cols()), (mask.rows(), mask.cols()));
        let data = input
            .data()
            .iter()
            .zip(mask.data())
            .map(|(&v, &m)| v * m)
            .collect();
        let value = DenseMatrix::from_vec(input.rows(), input.cols(), data);
        self.push(Op::Dropout { x, mask }, value)
    }

    /// Mean class-balanced focal loss over the logit rows; marks the tape's
    /// loss node.
    pub fn cb_focal_loss(
        &mut self,
        logits: NodeId,
        labels: Vec<u8>,
        weights: Vec<S>,
        gamma: S,
    ) -> NodeId {
        let rows = self.values[logits].rows();
        assert_eq!(rows, labels.len());
        assert_eq!(rows, weights.len());
        let mut total = S::zero();
        for r in 0..rows {
            let row = self.values[logits].row(r);
            let (loss, _) = cb_focal_with_weight([row[0], row[1]], labels[r], weights[r], gamma);
            total += loss;
        }
        let mean = total / S::from_usize_lossy(rows);
        let id = self.push(
            Op::CbFocal {
                logits,
                labels,
                weights,
                gamma,
            },
            DenseMatrix::from_vec(1, 1, vec![mean]),
        );
        self.loss_node = Some(id);
        id
    }

    /// Reverse pass from the loss node with unit seed.
    pub fn backward(&self) -> Result<Gradients<S>> {
        let loss = self.loss_node.ok_or_else(|| {
            Error::Config("backward requires a completed loss forward pass".into())
        })?;
        self.backward_seeded(loss, S::one())
    }

    /// Reverse pass from an arbitrary node, seeding every entry of its
    /// adjoint with `seed`.
    pub fn backward_seeded(&self, start: NodeId, seed: S) -> Result<Gradients<S>> {
        if start >= self.ops.len() {
            return Err(Error::Config(format!("node {start} is not on the tape")));
        }
        let mut adjoints: Vec<Option<DenseMatrix<S>>> = vec![None; self.ops.len()];
        let shape = &self.values[start];
        adjoints[start] = Some(DenseMatrix::from_vec(
            shape.rows(),
            shape.cols(),
            vec![seed; shape.rows() * shape.cols()],
        ));

        let mut grads = Gradients::new();
        for id in (0..=start).rev() {
            let Some(g) = adjoints[id].take() else {
                continue;
            };
            match &self.ops[id] {
                Op::Leaf { param } => {
                    if let Some(p) = param {
                        grads.insert(*p, g);
                    }
                }
                Op::MatMul { a, b } => {
                    let da = g.matmul(&self.values[*b].transpose());
                    let db = self.values[*a].transpose().matmul(&g);
                    accumulate(&mut adjoints[*a], da);
                    accumulate(&mut adjoints[*b], db);
                }
                Op::AddRowBias { x, bias } => {
                    let mut dbias = DenseMatrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (acc, &v) in dbias.row_mut(0).iter_mut().zip(g.row(r)) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut adjoints[*bias], dbias);
                    accumulate(&mut adjoints[*x], g);
                }
                Op::Relu { x } => {
                    let input = &self.values[*x];
                    let data = g
                        .data()
                        .iter()
                        .zip(input.data())
                        .map(|(&gv, &xv)| if xv > S::zero() { gv } else { S::zero() })
                        .collect();
                    accumulate(
                        &mut adjoints[*x],
                        DenseMatrix::from_vec(g.rows(), g.cols(), data),
                    );
                }
                Op::Transpose { x } => {
                    accumulate(&mut adjoints[*x], g.transpose());
                }
                Op::ConcatCols { parts } => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.values[p].cols();
                        let mut part = DenseMatrix::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            part.row_mut(r)
                                .copy_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        accumulate(&mut adjoints[p], part);
                        offset += w;
                    }
                }
                Op::ConcatRows { parts } => {
                    let mut offset = 0;
                    for &p in parts {
                        let h = self.values[p].rows();
                        let mut part = DenseMatrix::zeros(h, g.cols());
                        for r in 0..h {
                            part.row_mut(r).copy_from_slice(g.row(offset + r));
                        }
                        accumulate(&mut adjoints[p], part);
                        offset += h;
                    }
                }
                Op::Tile { x, times } => {
                    let d = self.values[*x].cols();
                    let mut dx = DenseMatrix::zeros(1, d);
                    for block in 0..*times {
                        for c in 0..d {
                            let v = dx.get(0, c) + g.get(0, block * d + c);
                            dx.set(0, c, v);
                        }
                    }
                    accumulate(&mut adjoints[*x], dx);
                }
                Op::Rayleigh { x, lap } => {
                    // d rq_f / d x_f = (2 / (x_f^T x_f + eps)) (L x_f - rq_f x_f)
                    let input = &self.values[*x];
                    let rq = &self.values[id];
                    let lx = lap.matmul_dense(input);
                    let eps = S::from_f64_lossy(RQ_DENOMINATOR_GUARD);
                    let two = S::from_f64_lossy(2.0);
                    let mut dx = DenseMatrix::zeros(input.rows(), input.cols());
                    for f in 0..input.cols() {
                        let mut den = eps;
                        for r in 0..input.rows() {
                            let v = input.get(r, f);
                            den += v * v;
                        }
                        let scale = g.get(0, f) * two / den;
                        let rq_f = rq.get(0, f);
                        for r in 0..input.rows() {
                            dx.set(r, f, scale * (lx.get(r, f) - rq_f * input.get(r, f)));
                        }
                    }
                    accumulate(&mut adjoints[*x], dx);
                }
                Op::ChebFilter {
                    x,
                    lap,
                    coeffs,
                    lambda_max,
                } => {
                    let dx = apply_chebyshev_filter(lap, &g, coeffs, *lambda_max)
                        .expect("adjoint shape matches forward shape");
                    accumulate(&mut adjoints[*x], dx);
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    mean,
                    var,
                } => {
                    let input = &self.values[*x];
                    let (rows, cols) = (input.rows(), input.cols());
                    let m = S::from_usize_lossy(rows);
                    let eps = S::from_f64_lossy(BN_EPS);
                    let gamma_row = self.values[*gamma].row(0);
                    let mut dgamma = DenseMatrix::zeros(1, cols);
                    let mut dbeta = DenseMatrix::zeros(1, cols);
                    let mut dx = DenseMatrix::zeros(rows, cols);
                    for c in 0..cols {
                        let inv_std = S::one() / (var[c] + eps).sqrt();
                        let mut sum_dxhat = S::zero();
                        let mut sum_dxhat_center = S::zero();
                        let mut sum_center = S::zero();
                        let mut dg = S::zero();
                        let mut db = S::zero();
                        for r in 0..rows {
                            let center = input.get(r, c) - mean[c];
                            let gv = g.get(r, c);
                            let dxhat = gv * gamma_row[c];
                            dg += gv * center * inv_std;
                            db += gv;
                            sum_dxhat += dxhat;
                            sum_dxhat_center += dxhat * center;
                            sum_center += center;
                        }
                        dgamma.set(0, c, dg);
                        dbeta.set(0, c, db);
                        let half = S::from_f64_lossy(0.5);
                        let two = S::from_f64_lossy(2.0);
                        let dvar = -half * sum_dxhat_center * inv_std * inv_std * inv_std;
                        let dmean = -inv_std * sum_dxhat + dvar * (-two / m) * sum_center;
                        for r in 0..rows {
                            let center = input.get(r, c) - mean[c];
                            let dxhat = g.get(r, c) * gamma_row[c];
                            dx.set(r, c, dxhat * inv_std + dvar * two * center / m + dmean / m);
                        }
                    }
                    accumulate(&mut adjoints[*x], dx);
                    accumulate(&mut adjoints[*gamma], dgamma);
                    accumulate(&mut adjoints[*beta], dbeta);
                }
                Op::Dropout { x, mask } => {
                    let data = g
                        .data()
                        .iter()
                        .zip(mask.data())
                        .map(|(&gv, &mv)| gv * mv)
                        .collect();
                    accumulate(
                        &mut adjoints[*x],
                        DenseMatrix::from_vec(g.rows(), g.cols(), data),
                    );
                }
                Op::CbFocal {
                    logits,
                    labels,
                    weights,
                    gamma,
                } => {
                    let upstream = g.get(0, 0);
                    let rows = labels.len();
                    let scale = upstream / S::from_usize_lossy(rows);
                    let logit_values = &self.values[*logits];
                    let mut dl = DenseMatrix::zeros(rows, 2);
                    for r in 0..rows {
                        let row = logit_values.row(r);
                        let (_, grad) =
                            cb_focal_with_weight([row[0], row[1]], labels[r], weights[r], *gamma);
                        dl.set(r, 0, scale * grad[0]);
                        dl.set(r, 1, scale * grad[1]);
                    }
                    accumulate(&mut adjoints[*logits], dl);
                }
            }
        }
        Ok(grads)
    }
}

impl<S: Scalar> Default for GradientTape<S> {
    fn default() -> Self {
        Self::new()
    }
}

fn accumulate<S: Scalar>(slot: &mut Option<DenseMatrix<S>>, g: DenseMatrix<S>) {
    match slot {
        Some(existing) => existing.axpy(S::one(), &g),
        None => *slot = Some(g),
    }
}
