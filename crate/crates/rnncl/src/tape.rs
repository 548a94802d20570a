//! Reverse-mode automatic differentiation over a Wengert tape.
//!
//! A `Tape` is an append-only arena of nodes; building an op computes its
//! value immediately (eager forward) and records what is needed for the
//! sweep back. Because an op can only refer to already-recorded nodes, the
//! graph is acyclic by construction and tape order is already a topological
//! order — `backward` is a single reverse scan. A tape lives for one
//! minibatch and is dropped afterwards; nothing is retained across steps.
//!
//! Several loss-shaped ops (`bce_with_logits`, `xent_with_logits`,
//! `weighted_sq_diff`, `orth_penalty`) are fused: they take their constant
//! operands (targets, weights) by value and produce a scalar. This keeps
//! them numerically stable in one place and the graphs small.

use crate::error::{Error, Result};
use crate::mat::{gemm_nn_raw, gemm_nt_raw, gemm_tn_raw, Mat};

/// Handle to a tape node. Only meaningful for the tape that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    MulElem(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Matmul(Var, Var),
    /// `A + b 1^T`: add a column vector to every column of `A`.
    AddColBroadcast(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Sum(Var),
    SumSq(Var),
    /// Row `i` multiplied by `scale[i]`; the gating primitive for masking.
    ScaleRows(Var, Vec<f64>),
    ConcatRows(Var, Var),
    SliceRows(Var, usize),
    Reshape(Var),
    Transpose(Var),
    /// Sum over entries of `w * (softplus(z) - y*z)`, the weighted
    /// binary cross-entropy between targets `y` and logits `z`.
    BceWithLogits { z: Var, target: Vec<f64>, weight: Vec<f64> },
    /// Per-column softmax cross-entropy of a `C x B` logit block against
    /// integer labels, all scaled by one weight.
    XentWithLogits { z: Var, labels: Vec<usize>, weight: f64 },
    /// `sum_i w_i (a_i - c_i)^2` against constant center and weights; the
    /// quadratic-penalty primitive shared by the consolidation methods.
    WeightedSqDiff { a: Var, center: Vec<f64>, weight: Vec<f64> },
    /// `||W^T W - I||_F^2` for square `W`. The Gram residual is cached at
    /// build time for the backward sweep.
    OrthPenalty { w: Var, gram_minus_i: Vec<f64> },
}

struct Node {
    op: Op,
    value: Mat,
}

/// Append-only computation record. All building methods validate shapes and
/// return `Err` rather than panic on mismatch.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

// ── scalar helpers (shared with eval paths elsewhere) ────────────────────

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow for large `|x|`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
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

    /// The forward value of a node.
    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        let m = &self.nodes[v.0].value;
        if m.len() != 1 {
            return Err(Error::Shape(format!("scalar() on {}x{} node", m.rows, m.cols)));
        }
        Ok(m.data[0])
    }

    fn push(&mut self, op: Op, value: Mat) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Record an input node. Leaves are the only nodes gradients are read
    /// from; constants are simply leaves whose gradient is never requested.
    pub fn leaf(&mut self, value: Mat) -> Var {
        self.push(Op::Leaf, value)
    }

    fn binary_same_shape(&mut self, a: Var, b: Var, name: &str) -> Result<(usize, usize)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::Shape(format!("{}: {:?} vs {:?}", name, sa, sb)));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape(a, b, "add")?;
        let value = {
            let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
            let mut m = va.clone();
            m.add_assign(vb);
            m
        };
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape(a, b, "sub")?;
        let value = {
            let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
            let data = va.data.iter().zip(&vb.data).map(|(x, y)| x - y).collect();
            Mat { rows: va.rows, cols: va.cols, data }
        };
        Ok(self.push(Op::Sub(a, b), value))
    }

    pub fn mul_elem(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape(a, b, "mul_elem")?;
        let value = {
            let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
            let data = va.data.iter().zip(&vb.data).map(|(x, y)| x * y).collect();
            Mat { rows: va.rows, cols: va.cols, data }
        };
        Ok(self.push(Op::MulElem(a, b), value))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.nodes[a.0].value.map(|x| c * x);
        self.push(Op::Scale(a, c), value)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let value = self.nodes[a.0].value.map(|x| x + c);
        self.push(Op::AddConst(a), value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, ka) = self.shape(a);
        let (kb, n) = self.shape(b);
        if ka != kb {
            return Err(Error::Shape(format!("matmul: {}x{} times {}x{}", m, ka, kb, n)));
        }
        let mut value = Mat::zeros(m, n);
        gemm_nn_raw(
            1.0,
            &self.nodes[a.0].value.data,
            m,
            ka,
            &self.nodes[b.0].value.data,
            n,
            &mut value.data,
        );
        Ok(self.push(Op::Matmul(a, b), value))
    }

    /// `A + b` with the column vector `b` added to every column of `A`.
    pub fn add_col_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.shape(a);
        let (mb, nb) = self.shape(b);
        if mb != m || nb != 1 {
            return Err(Error::Shape(format!(
                "add_col_broadcast: {}x{} plus {}x{}",
                m, n, mb, nb
            )));
        }
        let value = {
            let va = &self.nodes[a.0].value;
            let vb = &self.nodes[b.0].value;
            let mut out = va.clone();
            for i in 0..m {
                let bi = vb.data[i];
                for x in out.row_mut(i) {
                    *x += bi;
                }
            }
            out
        };
        Ok(self.push(Op::AddColBroadcast(a, b), value))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.map(f64::tanh);
        self.push(Op::Tanh(a), value)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.map(sigmoid);
        self.push(Op::Sigmoid(a), value)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.map(f64::exp);
        self.push(Op::Exp(a), value)
    }

    /// Sum of all entries, as a `1 x 1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.nodes[a.0].value.data.iter().sum();
        self.push(Op::Sum(a), Mat { rows: 1, cols: 1, data: vec![s] })
    }

    /// Sum of squared entries, as a `1 x 1` node.
    pub fn sum_sq(&mut self, a: Var) -> Var {
        let s: f64 = self.nodes[a.0].value.data.iter().map(|x| x * x).sum();
        self.push(Op::SumSq(a), Mat { rows: 1, cols: 1, data: vec![s] })
    }

    /// Multiply row `i` by `scale[i]` (constant gates).
    pub fn scale_rows(&mut self, a: Var, scale: &[f64]) -> Result<Var> {
        let (m, _n) = self.shape(a);
        if scale.len() != m {
            return Err(Error::Shape(format!("scale_rows: {} gates for {} rows", scale.len(), m)));
        }
        let value = {
            let va = &self.nodes[a.0].value;
            let mut out = va.clone();
            for i in 0..m {
                let s = scale[i];
                for x in out.row_mut(i) {
                    *x *= s;
                }
            }
            out
        };
        Ok(self.push(Op::ScaleRows(a, scale.to_vec()), value))
    }

    /// Stack `a` on top of `b` (column counts must match).
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ca != cb {
            return Err(Error::Shape(format!("concat_rows: {} vs {} columns", ca, cb)));
        }
        let value = {
            let mut data = Vec::with_capacity((ra + rb) * ca);
            data.extend_from_slice(&self.nodes[a.0].value.data);
            data.extend_from_slice(&self.nodes[b.0].value.data);
            Mat { rows: ra + rb, cols: ca, data }
        };
        Ok(self.push(Op::ConcatRows(a, b), value))
    }

    /// Rows `start .. start + len` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.shape(a);
        if start + len > m {
            return Err(Error::Shape(format!(
                "slice_rows: rows {}..{} of {}x{}",
                start,
                start + len,
                m,
                n
            )));
        }
        let value = {
            let va = &self.nodes[a.0].value;
            Mat { rows: len, cols: n, data: va.data[start * n..(start + len) * n].to_vec() }
        };
        Ok(self.push(Op::SliceRows(a, start), value))
    }

    /// Reinterpret the row-major data with a new shape of equal length.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let (m, n) = self.shape(a);
        if m * n != rows * cols {
            return Err(Error::Shape(format!("reshape {}x{} to {}x{}", m, n, rows, cols)));
        }
        let value = Mat { rows, cols, data: self.nodes[a.0].value.data.clone() };
        Ok(self.push(Op::Reshape(a), value))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.transpose();
        self.push(Op::Transpose(a), value)
    }

    /// Weighted binary cross-entropy between constant targets and logits,
    /// summed over all entries: `sum w * (softplus(z) - y*z)`. Targets may
    /// be soft (in `[0,1]`); positions with weight 0 contribute nothing to
    /// value or gradient, which is how ignored timesteps are excluded
    /// without shifting the loss by a constant.
    pub fn bce_with_logits(&mut self, z: Var, target: &Mat, weight: &Mat) -> Result<Var> {
        let s = self.shape(z);
        if target.shape() != s || weight.shape() != s {
            return Err(Error::Shape(format!(
                "bce_with_logits: logits {:?}, target {:?}, weight {:?}",
                s,
                target.shape(),
                weight.shape()
            )));
        }
        let vz = &self.nodes[z.0].value;
        let mut total = 0.0;
        for ((&zi, &yi), &wi) in vz.data.iter().zip(&target.data).zip(&weight.data) {
            if wi != 0.0 {
                total += wi * (softplus(zi) - yi * zi);
            }
        }
        Ok(self.push(
            Op::BceWithLogits { z, target: target.data.clone(), weight: weight.data.clone() },
            Mat { rows: 1, cols: 1, data: vec![total] },
        ))
    }

    /// Softmax cross-entropy of a `C x B` logit block: column `b` is scored
    /// against `labels[b]`, every column scaled by `weight`. Stable via
    /// log-sum-exp shifting.
    pub fn xent_with_logits(&mut self, z: Var, labels: &[usize], weight: f64) -> Result<Var> {
        let (c, b) = self.shape(z);
        if labels.len() != b {
            return Err(Error::Shape(format!("xent: {} labels for {} columns", labels.len(), b)));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Invalid(format!("xent: label {} out of range 0..{}", bad, c)));
        }
        let vz = &self.nodes[z.0].value;
        let mut total = 0.0;
        for (col, &label) in labels.iter().enumerate().map(|(j, l)| (j, l)) {
            let mut maxv = f64::NEG_INFINITY;
            for i in 0..c {
                maxv = maxv.max(vz.at(i, col));
            }
            let mut lse = 0.0;
            for i in 0..c {
                lse += (vz.at(i, col) - maxv).exp();
            }
            total += weight * (maxv + lse.ln() - vz.at(label, col));
        }
        Ok(self.push(
            Op::XentWithLogits { z, labels: labels.to_vec(), weight },
            Mat { rows: 1, cols: 1, data: vec![total] },
        ))
    }

    /// `sum_i w_i (a_i - c_i)^2` with constant center and weights.
    pub fn weighted_sq_diff(&mut self, a: Var, center: &[f64], weight: &[f64]) -> Result<Var> {
        let (m, n) = self.shape(a);
        if center.len() != m * n || weight.len() != m * n {
            return Err(Error::Shape(format!(
                "weighted_sq_diff: node {}x{}, center {}, weight {}",
                m,
                n,
                center.len(),
                weight.len()
            )));
        }
        let va = &self.nodes[a.0].value;
        let mut total = 0.0;
        for ((&ai, &ci), &wi) in va.data.iter().zip(center).zip(weight) {
            let d = ai - ci;
            total += wi * d * d;
        }
        Ok(self.push(
            Op::WeightedSqDiff { a, center: center.to_vec(), weight: weight.to_vec() },
            Mat { rows: 1, cols: 1, data: vec![total] },
        ))
    }

    /// Orthogonality penalty `||W^T W - I||_F^2` for square `W`.
    pub fn orth_penalty(&mut self, w: Var) -> Result<Var> {
        let (m, n) = self.shape(w);
        if m != n {
            return Err(Error::Shape(format!("orth_penalty: {}x{} is not square", m, n)));
        }
        let vw = &self.nodes[w.0].value;
        let mut gram = vec![0.0; n * n];
        gemm_tn_raw(1.0, &vw.data, n, n, &vw.data, n, &mut gram);
        for i in 0..n {
            gram[i * n + i] -= 1.0;
        }
        let total: f64 = gram.iter().map(|x| x * x).sum();
        Ok(self.push(
            Op::OrthPenalty { w, gram_minus_i: gram },
            Mat { rows: 1, cols: 1, data: vec![total] },
        ))
    }

    /// Reverse sweep from a scalar root. Gradients accumulate additively
    /// wherever subgraphs are shared. May be called repeatedly on the same
    /// tape (e.g. once from a task-only loss node and once from the full
    /// loss); each call starts from fresh buffers.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = &self.nodes[root.0].value;
        if rv.len() != 1 {
            return Err(Error::Shape(format!(
                "backward from non-scalar {}x{} node",
                rv.rows, rv.cols
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[root.0] = Some(vec![1.0]);

        for id in (0..=root.0).rev() {
            if grads[id].is_none() {
                continue;
            }
            // Parents always precede children on the tape, so splitting at
            // `id` lets us read this node's gradient while writing parents'.
            let (before, rest) = grads.split_at_mut(id);
            let g = rest[0].as_ref().expect("checked above");
            let node = &self.nodes[id];
            let value = &node.value;

            fn acc(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
                slot.get_or_insert_with(|| vec![0.0; len])
            }
            let parent_len = |p: &Var| self.nodes[p.0].value.len();

            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    let ga = acc(&mut before[a.0], parent_len(a));
                    for (x, gi) in ga.iter_mut().zip(g) {
                        *x += gi;
                    }
                    let gb = acc(&mut before[b.0], parent_len(b));
                    for (x, gi) in gb.iter_mut().zip(g) {
                        *x += gi;
                    }
                }
                Op::Sub(a, b) => {
                    let ga = acc(&mut before[a.0], parent_len(a));
                    for (x, gi) in ga.iter_mut().zip(g) {
                        *x += gi;
                    }
                    let gb = acc(&mut before[b.0], parent_len(b));
                    for (x, gi) in gb.iter_mut().zip(g) {
                        *x -= gi;
                    }
                }
                Op::MulElem(a, b) => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    {
                        let ga = acc(&mut before[a.0], parent_len(a));
                        for ((x, gi), bi) in ga.iter_mut().zip(g).zip(&vb.data) {
                            *x += gi * bi;
                        }
                    }
                    let gb = acc(&mut before[b.0], parent_len(b));
                    for ((x, gi), ai) in gb.iter_mut().zip(g).zip(&va.data) {
                        *x += gi * ai;
                    }
                }
                Op::Scale(a, c) => {
                    let ga = acc(&mut before[a.0], parent_len(a));
                    for (x, gi) in ga.iter_mut().zip(g) {
                        *x += c * gi;
                    }
                }
                Op::AddConst(a) => {
                    let ga = acc(&mut before[a.0], parent_len(a));
                    for (x, gi) in ga.iter_mut().zip(g) {
                        *x += gi;
                    }
                }
                Op::Matmul(a, b) => {
                    let (m, k) = self.nodes[a.0].value.shape();
                    let n = self.nodes[b.0].value.cols;
                    // dA += G B^T
                    {
                        let vb = &self.nodes[b.0].value;
                        let ga = acc(&mut before[a.0], m * k);
                        gemm_nt_raw(1.0, g, m, n, &vb.data, k, ga);
                    }
                    // dB += A^T G
                    let va = &self.nodes[a.0].value;
                    let gb = acc(&mut before[b.0], k * n);
                    gemm_tn_raw(1.0, &va.data, m, k, g, n, gb);
                }
                Op::AddColBroadcast(a, b) => {
                    let (m, n) = value.shape();
                    {
                        let ga = acc(&mut before[a.0], m * n);
                        for (x, gi) in ga.iter_mut().zip(g) {
                            *x += gi;
                        }
                    }
                    let gb = acc(&mut before[b.0], m);
                    for i in 0..m {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += g[i * n + j];
                        }
                        gb[i] += s;
                    }
                }
                Op::Tanh(a) => {
                    let ga = acc(&mut before[a.0], parent_len(a));
                    for ((x, gi), yi) in ga.iter_mut().zip(g).zip(&value.data) {
                        *x += gi * (1.0 - yi * yi);
                    }
                }
                Op::Sigmoid(a) => {
                    let ga = acc(&mut before[a.0], parent_len(a));
                    for ((x, gi), yi) in ga.iter_mut().zip(g).zip(&value.data) {
                        *x += gi * yi * (1.0 - yi);
                    }
                }
                Op::Exp(a) => {
                    let ga = acc(&mut before[a.0], parent_len(a));
                    for ((x, gi), yi) in ga.iter_mut().zip(g).zip(&value.data) {
                        *x += gi * yi;
                    }
                }
                Op::Sum(a) => {
                    let g0 = g[0];
                    let ga = acc(&mut before[a.0], parent_len(a));
                    for x in ga.iter_mut() {
                        *x += g0;
                    }
                }
                Op::SumSq(a) => {
                    let g0 = g[0];
                    let va = &self.nodes[a.0].value;
                    let ga = acc(&mut before[a.0], parent_len(a));
                    for (x, ai) in ga.iter_mut().zip(&va.data) {
                        *x += 2.0 * g0 * ai;
                    }
                }
                Op::ScaleRows(a, scale) => {
                    let (m, n) = value.shape();
                    let ga = acc(&mut before[a.0], m * n);
                    for i in 0..m {
                        let s = scale[i];
                        for j in 0..n {
                            ga[i * n + j] += s * g[i * n + j];
                        }
                    }
                }
                Op::ConcatRows(a, b) => {
                    let la = parent_len(a);
                    {
                        let ga = acc(&mut before[a.0], la);
                        for (x, gi) in ga.iter_mut().zip(&g[..la]) {
                            *x += gi;
                        }
                    }
                    let lb = parent_len(b);
                    let gb = acc(&mut before[b.0], lb);
                    for (x, gi) in gb.iter_mut().zip(&g[la..la + lb]) {
                        *x += gi;
                    }
                }
                Op::SliceRows(a, start) => {
                    let n = value.cols;
                    let ga = acc(&mut before[a.0], parent_len(a));
                    let off = start * n;
                    for (x, gi) in ga[off..off + g.len()].iter_mut().zip(g) {
                        *x += gi;
                    }
                }
                Op::Reshape(a) => {
                    let ga = acc(&mut before[a.0], parent_len(a));
                    for (x, gi) in ga.iter_mut().zip(g) {
                        *x += gi;
                    }
                }
                Op::Transpose(a) => {
                    // value is m x n here, the parent is n x m.
                    let (m, n) = (value.rows, value.cols);
                    let ga = acc(&mut before[a.0], parent_len(a));
                    for i in 0..m {
                        for j in 0..n {
                            ga[j * m + i] += g[i * n + j];
                        }
                    }
                }
                Op::BceWithLogits { z, target, weight } => {
                    let g0 = g[0];
                    let vz = &self.nodes[z.0].value;
                    let gz = acc(&mut before[z.0], vz.len());
                    for (((x, &zi), &yi), &wi) in
                        gz.iter_mut().zip(&vz.data).zip(target).zip(weight)
                    {
                        if wi != 0.0 {
                            *x += g0 * wi * (sigmoid(zi) - yi);
                        }
                    }
                }
                Op::XentWithLogits { z, labels, weight } => {
                    let g0 = g[0] * *weight;
                    let vz = &self.nodes[z.0].value;
                    let (c, _b) = vz.shape();
                    let gz = acc(&mut before[z.0], vz.len());
                    for (col, &label) in labels.iter().enumerate() {
                        let mut maxv = f64::NEG_INFINITY;
                        for i in 0..c {
                            maxv = maxv.max(vz.at(i, col));
                        }
                        let mut denom = 0.0;
                        for i in 0..c {
                            denom += (vz.at(i, col) - maxv).exp();
                        }
                        for i in 0..c {
                            let p = (vz.at(i, col) - maxv).exp() / denom;
                            let y = if i == label { 1.0 } else { 0.0 };
                            gz[i * vz.cols + col] += g0 * (p - y);
                        }
                    }
                }
                Op::WeightedSqDiff { a, center, weight } => {
                    let g0 = g[0];
                    let va = &self.nodes[a.0].value;
                    let ga = acc(&mut before[a.0], va.len());
                    for (((x, &ai), &ci), &wi) in ga.iter_mut().zip(&va.data).zip(center).zip(weight)
                    {
                        *x += g0 * 2.0 * wi * (ai - ci);
                    }
                }
                Op::OrthPenalty { w, gram_minus_i } => {
                    // d/dW ||W^T W - I||^2 = 4 W (W^T W - I)
                    let g0 = g[0];
                    let vw = &self.nodes[w.0].value;
                    let n = vw.rows;
                    let gw = acc(&mut before[w.0], n * n);
                    gemm_nn_raw(4.0 * g0, &vw.data, n, n, gram_minus_i, n, gw);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Result of a backward sweep: one gradient buffer per reached node.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`, if `v` was reached by the
    /// sweep (unreached means the gradient is identically zero).
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient as an owned vector, zeros if unreached.
    pub fn wrt_or_zeros(&self, v: Var, len: usize) -> Vec<f64> {
        match self.wrt(v) {
            Some(g) => g.to_vec(),
            None => vec![0.0; len],
        }
    }
}
