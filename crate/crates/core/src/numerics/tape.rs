//! Reverse-mode automatic differentiation over an append-only op tape.
//!
//! Nodes are appended in evaluation order, so parents always precede
//! children and a single reverse sweep visits each node exactly once.

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

const LAYERNORM_EPS: f32 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Matmul { a: NodeId, b: NodeId },
    Transpose { a: NodeId },
    Scale { a: NodeId, c: f32 },
    Relu { a: NodeId },
    Softmax { a: NodeId },
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId },
    EmbeddingLookup { table: NodeId, ids: Vec<usize> },
    CrossEntropyLs {
        logits: NodeId,
        targets: Vec<usize>,
        weights: Vec<f32>,
        eps: f32,
        loss_f64: f64,
    },
    Sum { a: NodeId, sum_f64: f64 },
    MeanRows { a: NodeId },
    SliceCols { a: NodeId, start: usize, len: usize },
    ConcatCols { parts: Vec<NodeId> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded op graph with per-node gradient accumulators.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Trainable leaf: gradients are accumulated for it.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable input: backward never flows into it.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// Elementwise add. The right operand may be a single row (`[d]` or
    /// `[1,d]`) broadcast over the rows of the left operand.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.value(a).rows_cols();
        let (br, bc) = self.value(b).rows_cols();
        if ac != bc || (br != ar && br != 1) {
            return Err(Error::ShapeMismatch {
                op: "add",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let mut out = self.value(a).clone();
        let bd = self.value(b).data();
        if br == ar {
            for (o, &v) in out.data_mut().iter_mut().zip(bd) {
                *o += v;
            }
        } else {
            for row in out.data_mut().chunks_mut(ac) {
                for (o, &v) in row.iter_mut().zip(bd) {
                    *o += v;
                }
            }
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Add { a, b }, rg))
    }

    /// Elementwise multiply; shapes must match exactly.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::ShapeMismatch {
                op: "mul",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let mut out = self.value(a).clone();
        for (o, &v) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o *= v;
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Mul { a, b }, rg))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.value(a).rows_cols();
        let (br, bc) = self.value(b).rows_cols();
        if ac != br {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let mut out = vec![0.0f32; ar * bc];
        matmul_nn(self.value(a).data(), ar, ac, self.value(b).data(), bc, &mut out);
        let value = Tensor::new(vec![ar, bc], out)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Matmul { a, b }, rg))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let (r, c) = self.value(a).rows_cols();
        let src = self.value(a).data();
        let mut out = vec![0.0f32; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let value = Tensor::new(vec![c, r], out)?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Transpose { a }, rg))
    }

    pub fn scale(&mut self, a: NodeId, c: f32) -> NodeId {
        let mut out = self.value(a).clone();
        for o in out.data_mut() {
            *o *= c;
        }
        let rg = self.needs(&[a]);
        self.push(out, Op::Scale { a, c }, rg)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        for o in out.data_mut() {
            if *o < 0.0 {
                *o = 0.0;
            }
        }
        let rg = self.needs(&[a]);
        self.push(out, Op::Relu { a }, rg)
    }

    /// Row softmax over the last dimension (rank-1 input is one row).
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let (r, c) = self.value(a).rows_cols();
        if c == 0 {
            return Err(Error::invalid_argument("softmax over zero columns"));
        }
        let mut out = self.value(a).clone();
        for row in out.data_mut().chunks_mut(c) {
            softmax_row(row);
        }
        let _ = r;
        let rg = self.needs(&[a]);
        Ok(self.push(out, Op::Softmax { a }, rg))
    }

    /// Per-row normalization with learned gain and bias vectors.
    pub fn layernorm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let (r, c) = self.value(x).rows_cols();
        for &p in &[gain, bias] {
            let (pr, pc) = self.value(p).rows_cols();
            if pr != 1 || pc != c {
                return Err(Error::ShapeMismatch {
                    op: "layernorm",
                    lhs: self.value(x).shape().to_vec(),
                    rhs: self.value(p).shape().to_vec(),
                });
            }
        }
        let mut out = vec![0.0f32; r * c];
        let xd = self.value(x).data();
        let gd = self.value(gain).data();
        let bd = self.value(bias).data();
        for i in 0..r {
            let row = &xd[i * c..(i + 1) * c];
            let (mean, inv_std) = row_norm_stats(row);
            for j in 0..c {
                out[i * c + j] = gd[j] * ((row[j] - mean) * inv_std) + bd[j];
            }
        }
        let value = Tensor::new(vec![r, c], out)?;
        let rg = self.needs(&[x, gain, bias]);
        Ok(self.push(value, Op::LayerNorm { x, gain, bias }, rg))
    }

    /// Gather rows of `table` by id.
    pub fn embedding_lookup(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let (v, d) = self.value(table).rows_cols();
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::invalid_argument(format!(
                "embedding id {bad} out of range for table with {v} rows"
            )));
        }
        let td = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&td[i * d..(i + 1) * d]);
        }
        let value = Tensor::new(vec![ids.len(), d], out)?;
        let rg = self.needs(&[table]);
        Ok(self.push(value, Op::EmbeddingLookup { table, ids: ids.to_vec() }, rg))
    }

    /// Label-smoothed cross entropy, averaged over rows weighted by
    /// `weights` (pass 0.0 to mask a row out). The smoothed target puts
    /// `1 - eps` on the gold label and spreads `eps` uniformly over the
    /// vocabulary. Accumulation is in f64.
    pub fn cross_entropy_ls(
        &mut self,
        logits: NodeId,
        targets: &[usize],
        weights: &[f32],
        eps: f32,
    ) -> Result<NodeId> {
        let (r, v) = self.value(logits).rows_cols();
        if targets.len() != r || weights.len() != r {
            return Err(Error::invalid_argument(format!(
                "cross_entropy_ls: {r} logit rows, {} targets, {} weights",
                targets.len(),
                weights.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= v) {
            return Err(Error::invalid_argument(format!(
                "target id {bad} out of vocab range {v}"
            )));
        }
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::invalid_argument(format!(
                "label smoothing eps {eps} outside [0,1)"
            )));
        }
        let total_weight: f64 = weights.iter().map(|&w| w as f64).sum();
        if total_weight <= 0.0 {
            return Err(Error::invalid_argument("cross_entropy_ls: all rows masked"));
        }
        let ld = self.value(logits).data();
        let mut loss = 0.0f64;
        for i in 0..r {
            let w = weights[i] as f64;
            if w == 0.0 {
                continue;
            }
            let row = &ld[i * v..(i + 1) * v];
            let lse = log_sum_exp(row);
            // -(1-eps)*logp[gold] - (eps/V) * sum_j logp[j]
            let gold = row[targets[i]] as f64 - lse;
            let mut sum_logp = 0.0f64;
            if eps > 0.0 {
                for &x in row {
                    sum_logp += x as f64 - lse;
                }
            }
            loss += w * (-(1.0 - eps as f64) * gold - (eps as f64 / v as f64) * sum_logp);
        }
        loss /= total_weight;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {loss}")));
        }
        let value = Tensor::scalar(loss as f32);
        let rg = self.needs(&[logits]);
        Ok(self.push(
            value,
            Op::CrossEntropyLs {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                eps,
                loss_f64: loss,
            },
            rg,
        ))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).data().iter().map(|&v| v as f64).sum();
        let rg = self.needs(&[a]);
        self.push(Tensor::scalar(s as f32), Op::Sum { a, sum_f64: s }, rg)
    }

    /// The f64 value of a scalar node, bypassing the f32 storage rounding
    /// for ops that accumulate in f64 (loss and sum reductions).
    pub fn scalar_f64(&self, id: NodeId) -> Result<f64> {
        let node = &self.nodes[id.0];
        if !node.value.is_scalar() {
            return Err(Error::invalid_argument(format!(
                "scalar_f64 on tensor of shape {:?}",
                node.value.shape()
            )));
        }
        Ok(match &node.op {
            Op::CrossEntropyLs { loss_f64, .. } => *loss_f64,
            Op::Sum { sum_f64, .. } => *sum_f64,
            _ => node.value.data()[0] as f64,
        })
    }

    /// Column means over rows: `[n,d] -> [1,d]`.
    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let (r, c) = self.value(a).rows_cols();
        if r == 0 {
            return Err(Error::invalid_argument("mean_rows over zero rows"));
        }
        let ad = self.value(a).data();
        let mut out = vec![0.0f32; c];
        for row in ad.chunks(c) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= r as f32;
        }
        let value = Tensor::new(vec![1, c], out)?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::MeanRows { a }, rg))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (r, c) = self.value(a).rows_cols();
        if start + len > c {
            return Err(Error::invalid_argument(format!(
                "slice_cols {start}..{} out of {c} columns",
                start + len
            )));
        }
        let ad = self.value(a).data();
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&ad[i * c + start..i * c + start + len]);
        }
        let value = Tensor::new(vec![r, len], out)?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::SliceCols { a, start, len }, rg))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::invalid_argument("concat_cols with no parts"));
        }
        let r = self.value(parts[0]).rows_cols().0;
        if let Some(&p) = parts.iter().find(|&&p| self.value(p).rows_cols().0 != r) {
            return Err(Error::ShapeMismatch {
                op: "concat_cols",
                lhs: self.value(parts[0]).shape().to_vec(),
                rhs: self.value(p).shape().to_vec(),
            });
        }
        let total_c: usize = parts.iter().map(|&p| self.value(p).rows_cols().1).sum();
        let mut out = Vec::with_capacity(r * total_c);
        for i in 0..r {
            for &p in parts {
                let (_, c) = self.value(p).rows_cols();
                out.extend_from_slice(&self.value(p).data()[i * c..(i + 1) * c]);
            }
        }
        let value = Tensor::new(vec![r, total_c], out)?;
        let rg = self.needs(parts);
        Ok(self.push(value, Op::ConcatCols { parts: parts.to_vec() }, rg))
    }

    /// Backward pass from a scalar loss: populates a gradient for every
    /// grad-requiring node reachable from it.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::invalid_argument(format!(
                "backward from non-scalar loss of shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                grads[idx] = None;
                continue;
            }
            let Some(grad) = grads[idx].take() else { continue };
            self.propagate(idx, &grad, &mut grads)?;
            grads[idx] = Some(grad);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Add { a, b } => {
                self.accumulate(grads, *a, g.clone());
                let (ar, ac) = self.value(*a).rows_cols();
                let (br, _) = self.value(*b).rows_cols();
                if br == ar {
                    self.accumulate(grads, *b, g.clone());
                } else {
                    // broadcast row: sum the gradient over rows
                    let mut db = vec![0.0f32; ac];
                    for row in g.data().chunks(ac) {
                        for (o, &v) in db.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    let shape = self.value(*b).shape().to_vec();
                    self.accumulate(grads, *b, Tensor::new(shape, db)?);
                }
            }
            Op::Mul { a, b } => {
                let mut da = g.clone();
                for (o, &v) in da.data_mut().iter_mut().zip(self.value(*b).data()) {
                    *o *= v;
                }
                let mut db = g.clone();
                for (o, &v) in db.data_mut().iter_mut().zip(self.value(*a).data()) {
                    *o *= v;
                }
                self.accumulate(grads, *a, da);
                self.accumulate(grads, *b, db);
            }
            Op::Matmul { a, b } => {
                let (ar, ac) = self.value(*a).rows_cols();
                let (_, bc) = self.value(*b).rows_cols();
                // dA = G * B^T
                let mut da = vec![0.0f32; ar * ac];
                matmul_nt(g.data(), ar, bc, self.value(*b).data(), ac, &mut da);
                // dB = A^T * G
                let mut db = vec![0.0f32; ac * bc];
                matmul_tn(self.value(*a).data(), ar, ac, g.data(), bc, &mut db);
                self.accumulate(grads, *a, Tensor::new(vec![ar, ac], da)?);
                self.accumulate(grads, *b, Tensor::new(vec![ac, bc], db)?);
            }
            Op::Transpose { a } => {
                let (r, c) = self.value(*a).rows_cols();
                let gd = g.data();
                let mut da = vec![0.0f32; r * c];
                for i in 0..c {
                    for j in 0..r {
                        da[j * c + i] = gd[i * r + j];
                    }
                }
                self.accumulate(grads, *a, Tensor::new(vec![r, c], da)?);
            }
            Op::Scale { a, c } => {
                let mut da = g.clone();
                for o in da.data_mut() {
                    *o *= c;
                }
                self.accumulate(grads, *a, da);
            }
            Op::Relu { a } => {
                let mut da = g.clone();
                for (o, &x) in da.data_mut().iter_mut().zip(self.value(*a).data()) {
                    if x <= 0.0 {
                        *o = 0.0;
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::Softmax { a } => {
                let (_, c) = self.value(*a).rows_cols();
                let y = self.nodes[idx].value.data();
                let gd = g.data();
                let mut da = vec![0.0f32; y.len()];
                for (row, (yrow, grow)) in
                    da.chunks_mut(c).zip(y.chunks(c).zip(gd.chunks(c)))
                {
                    let dot: f32 = yrow.iter().zip(grow).map(|(&yv, &gv)| yv * gv).sum();
                    for j in 0..c {
                        row[j] = yrow[j] * (grow[j] - dot);
                    }
                }
                let shape = self.value(*a).shape().to_vec();
                self.accumulate(grads, *a, Tensor::new(shape, da)?);
            }
            Op::LayerNorm { x, gain, bias } => {
                let (r, c) = self.value(*x).rows_cols();
                let xd = self.value(*x).data();
                let gaind = self.value(*gain).data();
                let gd = g.data();
                let mut dx = vec![0.0f32; r * c];
                let mut dgain = vec![0.0f32; c];
                let mut dbias = vec![0.0f32; c];
                for i in 0..r {
                    let row = &xd[i * c..(i + 1) * c];
                    let grow = &gd[i * c..(i + 1) * c];
                    let (mean, inv_std) = row_norm_stats(row);
                    let mut sum_dxh = 0.0f32;
                    let mut sum_dxh_xh = 0.0f32;
                    for j in 0..c {
                        let xh = (row[j] - mean) * inv_std;
                        let dxh = grow[j] * gaind[j];
                        dgain[j] += grow[j] * xh;
                        dbias[j] += grow[j];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh;
                    }
                    let inv_c = 1.0 / c as f32;
                    for j in 0..c {
                        let xh = (row[j] - mean) * inv_std;
                        let dxh = grow[j] * gaind[j];
                        dx[i * c + j] =
                            inv_std * (dxh - inv_c * sum_dxh - xh * inv_c * sum_dxh_xh);
                    }
                }
                self.accumulate(grads, *x, Tensor::new(vec![r, c], dx)?);
                let gshape = self.value(*gain).shape().to_vec();
                let bshape = self.value(*bias).shape().to_vec();
                self.accumulate(grads, *gain, Tensor::new(gshape, dgain)?);
                self.accumulate(grads, *bias, Tensor::new(bshape, dbias)?);
            }
            Op::EmbeddingLookup { table, ids } => {
                let (v, d) = self.value(*table).rows_cols();
                let gd = g.data();
                let mut dt = vec![0.0f32; v * d];
                for (i, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        dt[id * d + j] += gd[i * d + j];
                    }
                }
                self.accumulate(grads, *table, Tensor::new(vec![v, d], dt)?);
            }
            Op::CrossEntropyLs { logits, targets, weights, eps, .. } => {
                let (r, v) = self.value(*logits).rows_cols();
                let ld = self.value(*logits).data();
                let upstream = g.data()[0];
                let total_weight: f32 = weights.iter().sum();
                let mut dl = vec![0.0f32; r * v];
                for i in 0..r {
                    let w = weights[i];
                    if w == 0.0 {
                        continue;
                    }
                    let row = &ld[i * v..(i + 1) * v];
                    let scale = upstream * w / total_weight;
                    let out = &mut dl[i * v..(i + 1) * v];
                    out.copy_from_slice(row);
                    softmax_row(out);
                    let uniform = eps / v as f32;
                    for o in out.iter_mut() {
                        *o -= uniform;
                    }
                    out[targets[i]] -= 1.0 - eps;
                    for o in out.iter_mut() {
                        *o *= scale;
                    }
                }
                self.accumulate(grads, *logits, Tensor::new(vec![r, v], dl)?);
            }
            Op::Sum { a, .. } => {
                let shape = self.value(*a).shape().to_vec();
                let da = Tensor::full(&shape, g.data()[0]);
                self.accumulate(grads, *a, da);
            }
            Op::MeanRows { a } => {
                let (r, c) = self.value(*a).rows_cols();
                let gd = g.data();
                let inv = 1.0 / r as f32;
                let mut da = vec![0.0f32; r * c];
                for row in da.chunks_mut(c) {
                    for (o, &v) in row.iter_mut().zip(gd) {
                        *o = v * inv;
                    }
                }
                self.accumulate(grads, *a, Tensor::new(vec![r, c], da)?);
            }
            Op::SliceCols { a, start, len } => {
                let (r, c) = self.value(*a).rows_cols();
                let gd = g.data();
                let mut da = vec![0.0f32; r * c];
                for i in 0..r {
                    da[i * c + start..i * c + start + len]
                        .copy_from_slice(&gd[i * len..(i + 1) * len]);
                }
                self.accumulate(grads, *a, Tensor::new(vec![r, c], da)?);
            }
            Op::ConcatCols { parts } => {
                let r = self.value(parts[0]).rows_cols().0;
                let total_c: usize = parts.iter().map(|&p| self.value(p).rows_cols().1).sum();
                let gd = g.data();
                let mut offset = 0;
                for &p in parts {
                    let (_, c) = self.value(p).rows_cols();
                    let mut dp = Vec::with_capacity(r * c);
                    for i in 0..r {
                        dp.extend_from_slice(&gd[i * total_c + offset..i * total_c + offset + c]);
                    }
                    let shape = self.value(p).shape().to_vec();
                    self.accumulate(grads, p, Tensor::new(shape, dp)?);
                    offset += c;
                }
            }
        }
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], id: NodeId, contribution: Tensor) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(existing) => {
                for (o, &v) in existing.data_mut().iter_mut().zip(contribution.data()) {
                    *o += v;
                }
            }
            slot => *slot = Some(contribution),
        }
    }
}

fn softmax_row(row: &mut [f32]) {
    let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn log_sum_exp(row: &[f32]) -> f64 {
    let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let sum: f64 = row.iter().map(|&v| (v as f64 - max).exp()).sum();
    max + sum.ln()
}

fn row_norm_stats(row: &[f32]) -> (f32, f32) {
    let n = row.len() as f32;
    let mean = row.iter().sum::<f32>() / n;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f32>() / n;
    (mean, 1.0 / (var + LAYERNORM_EPS).sqrt())
}

/// out[ar x bc] += a[ar x ac] * b[ac x bc]
fn matmul_nn(a: &[f32], ar: usize, ac: usize, b: &[f32], bc: usize, out: &mut [f32]) {
    for i in 0..ar {
        let arow = &a[i * ac..(i + 1) * ac];
        let orow = &mut out[i * bc..(i + 1) * bc];
        for (k, &av) in arow.iter().enumerate() {
            let brow = &b[k * bc..(k + 1) * bc];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// out[ar x br] += a[ar x ac] * b[br x ac]^T
fn matmul_nt(a: &[f32], ar: usize, ac: usize, b: &[f32], br: usize, out: &mut [f32]) {
    for i in 0..ar {
        let arow = &a[i * ac..(i + 1) * ac];
        let orow = &mut out[i * br..(i + 1) * br];
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = &b[j * ac..(j + 1) * ac];
            let mut acc = 0.0f32;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *o += acc;
        }
    }
}

/// out[ac x bc] += a[ar x ac]^T * b[ar x bc]
fn matmul_tn(a: &[f32], ar: usize, ac: usize, b: &[f32], bc: usize, out: &mut [f32]) {
    for i in 0..ar {
        let arow = &a[i * ac..(i + 1) * ac];
        let brow = &b[i * bc..(i + 1) * bc];
        for (k, &av) in arow.iter().enumerate() {
            let orow = &mut out[k * bc..(k + 1) * bc];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2], &[0.0, 0.0]));
        let y = tape.softmax(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[3, 4], &[1.0, -2.0, 0.5, 3.0, 9.0, 9.0, 9.0, 9.0, -5.0, 0.0, 5.0, 10.0]));
        let y = tape.softmax(x).unwrap();
        for row in tape.value(y).data().chunks(4) {
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6, "row sum {s}");
        }
    }

    #[test]
    fn matmul_matches_hand_computation() {
        // [[1,2,3],[4,5,6]] x [[7,8],[9,10],[11,12]] = [[58,64],[139,154]]
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let b = tape.constant(t(&[3, 2], &[7.0, 8.0, 9.0, 10.0, 11.0, 12.0]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn matmul_shape_mismatch_reports_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2, 2], &[1.0, -2.0, 3.0, 0.5]));
        let loss = tape.sum(x);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn grad_of_square_is_two_x() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1.0, 2.0]));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn label_smoothing_zero_equals_plain_cross_entropy() {
        let mut tape = Tape::new();
        let logits = tape.constant(t(&[1, 3], &[2.0, 1.0, -1.0]));
        let loss = tape.cross_entropy_ls(logits, &[0], &[1.0], 0.0).unwrap();
        // -log softmax(2,1,-1)[0]
        let e: f64 = (2f64).exp() + (1f64).exp() + (-1f64).exp();
        let expected = -((2f64).exp() / e).ln();
        assert!((tape.value(loss).item().unwrap() as f64 - expected).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_masked_rows_do_not_contribute() {
        let mut tape = Tape::new();
        let logits = tape.leaf(t(&[2, 3], &[2.0, 1.0, -1.0, 5.0, 0.0, 0.0]));
        let masked = tape.cross_entropy_ls(logits, &[0, 1], &[1.0, 0.0], 0.1).unwrap();
        let mut tape2 = Tape::new();
        let logits2 = tape2.leaf(t(&[1, 3], &[2.0, 1.0, -1.0]));
        let single = tape2.cross_entropy_ls(logits2, &[0], &[1.0], 0.1).unwrap();
        assert_eq!(
            tape.value(masked).item().unwrap(),
            tape2.value(single).item().unwrap()
        );
        let grads = tape.backward(masked).unwrap();
        let g = grads.get(logits).unwrap();
        assert_eq!(&g.data()[3..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn embedding_lookup_gathers_and_scatters() {
        let mut tape = Tape::new();
        let table = tape.leaf(t(&[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let rows = tape.embedding_lookup(table, &[2, 0, 2]).unwrap();
        assert_eq!(tape.value(rows).data(), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
        let loss = tape.sum(rows);
        let grads = tape.backward(loss).unwrap();
        // row 2 gathered twice, row 0 once, row 1 never
        assert_eq!(grads.get(table).unwrap().data(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn slice_concat_round_trip() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2, 4], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]));
        let a = tape.slice_cols(x, 0, 2).unwrap();
        let b = tape.slice_cols(x, 2, 2).unwrap();
        let back = tape.concat_cols(&[a, b]).unwrap();
        assert_eq!(tape.value(back).data(), tape.value(x).data());
        let loss = tape.sum(back);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0; 8]);
    }

    #[test]
    fn add_broadcasts_bias_row() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2, 3], &[0.0; 6]));
        let b = tape.leaf(t(&[3], &[1.0, 2.0, 3.0]));
        let y = tape.add(x, b).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(b).unwrap().data(), &[2.0, 2.0, 2.0]);
    }
}
