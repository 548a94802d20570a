//! Chunked task-conditioned hypernetwork: a small MLP that emits the main
//! network's entire parameter vector in fixed-size chunks.
//!
//! Each chunk is the MLP applied to `concat(task_embedding, chunk_embedding)`;
//! all chunks share the MLP weights and the chunk embeddings, so the whole
//! main network is compressed into one parameter set plus one small embedding
//! per task. Continual learning then reduces to keeping the *generated*
//! vectors for old tasks fixed — a quadratic pull of today's outputs toward
//! the outputs of a frozen copy taken at the last task boundary.
//!
//! The compression premise (hypernet no larger than what it generates) is
//! asserted at construction rather than trusted.

use crate::error::{Error, Result};
use crate::mat::{gemm_nn_raw, Mat};
use crate::params::{Layout, ParamVector, ViewSpec};
use crate::rng::normal;
use crate::tape::{sigmoid, Tape, Var};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct HnetConfig {
    /// Generated entries per chunk.
    pub chunk_out: usize,
    pub task_emb_dim: usize,
    pub chunk_emb_dim: usize,
    /// Hidden layer widths of the generator MLP (sigmoid activations).
    pub hidden: Vec<usize>,
    /// Init SD for task and chunk embeddings.
    pub emb_std: f64,
    /// Extra shrink on the output layer init so generated weights start at
    /// the scale of an ordinary fan-in init instead of O(1).
    pub out_scale: f64,
    /// Regularizer strength β.
    pub beta: f64,
}

impl Default for HnetConfig {
    fn default() -> Self {
        // chunk_out 500 keeps the compression ratio under 1 for the
        // desk-scale recurrent nets this crate trains; anything much larger
        // makes the generator outweigh what it generates and the
        // constructor's assertion would (rightly) refuse it.
        HnetConfig {
            chunk_out: 500,
            task_emb_dim: 16,
            chunk_emb_dim: 16,
            hidden: vec![32, 32],
            emb_std: 1.0,
            out_scale: 0.1,
            beta: 1.0,
        }
    }
}

/// Frozen copy taken at a task boundary: the full parameter vector and the
/// generated outputs for every task learned so far. The cached outputs are
/// what the regularizer compares against; caching them is exact because the
/// copy never changes within a task.
#[derive(Debug, Clone)]
pub struct HnetCheckpoint {
    pub params: ParamVector,
    pub targets: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Hypernet {
    pub cfg: HnetConfig,
    /// Length of the generated vector |ψ|.
    pub target_len: usize,
    pub n_chunks: usize,
    pub k_tasks: usize,
    pub params: ParamVector,
    pub checkpoint: Option<HnetCheckpoint>,
}

impl Hypernet {
    /// Layer widths of the generator including input and output.
    fn dims(cfg: &HnetConfig) -> Vec<usize> {
        let mut d = vec![cfg.task_emb_dim + cfg.chunk_emb_dim];
        d.extend_from_slice(&cfg.hidden);
        d.push(cfg.chunk_out);
        d
    }

    fn build_layout(cfg: &HnetConfig, n_chunks: usize, k_tasks: usize) -> Layout {
        let dims = Self::dims(cfg);
        let mut v = Vec::new();
        for l in 0..dims.len() - 1 {
            v.push(ViewSpec { name: format!("mlp_w_{}", l), rows: dims[l + 1], cols: dims[l] });
            v.push(ViewSpec { name: format!("mlp_b_{}", l), rows: dims[l + 1], cols: 1 });
        }
        v.push(ViewSpec { name: "chunk_emb".into(), rows: cfg.chunk_emb_dim, cols: n_chunks });
        let shared = v.len();
        for k in 0..k_tasks {
            v.push(ViewSpec { name: format!("task_emb_{}", k), rows: cfg.task_emb_dim, cols: 1 });
        }
        Layout::new(v, shared).expect("hypernet layout is consistent")
    }

    /// Build and initialize. Fails if the generator plus embeddings would
    /// hold more parameters than the vector it generates.
    pub fn new(cfg: HnetConfig, target_len: usize, k_tasks: usize, rng: &mut impl Rng) -> Result<Self> {
        Self::build(cfg, target_len, k_tasks, rng, true)
    }

    /// Like `new`, with the compression assertion optional — toy-sized
    /// generators for diagnostics are allowed to outweigh their target.
    pub fn build(
        cfg: HnetConfig,
        target_len: usize,
        k_tasks: usize,
        rng: &mut impl Rng,
        enforce_compression: bool,
    ) -> Result<Self> {
        if cfg.chunk_out == 0 || cfg.task_emb_dim == 0 || cfg.chunk_emb_dim == 0 {
            return Err(Error::Config("hypernet dims must be positive".into()));
        }
        if target_len == 0 || k_tasks == 0 {
            return Err(Error::Config("hypernet needs a target and at least one task".into()));
        }
        let n_chunks = target_len.div_ceil(cfg.chunk_out);
        let layout = Self::build_layout(&cfg, n_chunks, k_tasks);
        let own = layout.total_len();
        let ratio = own as f64 / target_len as f64;
        if enforce_compression && ratio > 1.0 {
            return Err(Error::Config(format!(
                "hypernet holds {} parameters to generate {} (ratio {:.2} > 1); \
                 shrink chunk_out or the generator",
                own, target_len, ratio
            )));
        }
        let mut params = ParamVector::zeros(layout.clone());
        let dims = Self::dims(&cfg);
        let n_layers = dims.len() - 1;
        for (idx, spec) in layout.views() {
            let name = spec.name.as_str();
            let m = if name.starts_with("mlp_w_") {
                let l: usize = name["mlp_w_".len()..].parse().expect("layer index");
                let mut s = 1.0 / (spec.cols as f64).sqrt();
                if l == n_layers - 1 {
                    s *= cfg.out_scale;
                }
                Mat::from_fn(spec.rows, spec.cols, |_, _| s * normal(rng))
            } else if name.starts_with("mlp_b_") {
                Mat::zeros(spec.rows, spec.cols)
            } else {
                // chunk_emb and task_emb_k.
                Mat::from_fn(spec.rows, spec.cols, |_, _| cfg.emb_std * normal(rng))
            };
            params.set_view(idx, &m)?;
        }
        Ok(Hypernet { cfg, target_len, n_chunks, k_tasks, params, checkpoint: None })
    }

    pub fn compression_ratio(&self) -> f64 {
        self.params.layout.total_len() as f64 / self.target_len as f64
    }

    fn idx(&self, name: &str) -> usize {
        self.params.layout.index_of(name).expect("hypernet view exists")
    }

    /// Generate ψ on the tape as a `target_len x 1` node. `leaves` must be
    /// index-aligned with this hypernet's layout (see `model::leaves_from`).
    pub fn generate_on_tape(&self, tape: &mut Tape, leaves: &[Var], task_id: usize) -> Result<Var> {
        if task_id >= self.k_tasks {
            return Err(Error::Invalid(format!(
                "task {} out of range for {} embeddings",
                task_id, self.k_tasks
            )));
        }
        if leaves.len() != self.params.layout.num_views() {
            return Err(Error::Shape("generate_on_tape: leaves do not match layout".into()));
        }
        let e = leaves[self.idx(&format!("task_emb_{}", task_id))];
        let c = leaves[self.idx("chunk_emb")];
        // Broadcast the task embedding across chunk columns, stack on the
        // chunk embeddings, and push the whole batch through the MLP at once.
        let zeros = tape.leaf(Mat::zeros(self.cfg.task_emb_dim, self.n_chunks));
        let ebc = tape.add_col_broadcast(zeros, e)?;
        let mut z = tape.concat_rows(ebc, c)?;
        let n_layers = Self::dims(&self.cfg).len() - 1;
        for l in 0..n_layers {
            let w = leaves[self.idx(&format!("mlp_w_{}", l))];
            let b = leaves[self.idx(&format!("mlp_b_{}", l))];
            let wz = tape.matmul(w, z)?;
            z = tape.add_col_broadcast(wz, b)?;
            if l + 1 < n_layers {
                z = tape.sigmoid(z);
            }
        }
        // Column i is chunk i; transpose so chunks are contiguous in
        // row-major order, flatten, and drop the tail past |ψ|.
        let tr = tape.transpose(z);
        let flat = tape.reshape(tr, self.n_chunks * self.cfg.chunk_out, 1)?;
        tape.slice_rows(flat, 0, self.target_len)
    }

    /// Slice a generated ψ node into per-view nodes for the main network's
    /// layout, ready for `model::forward_tape`.
    pub fn main_view_vars(tape: &mut Tape, psi: Var, main: &Layout) -> Result<Vec<Var>> {
        if tape.shape(psi) != (main.total_len(), 1) {
            return Err(Error::Shape(format!(
                "psi is {:?}, main layout wants {} entries",
                tape.shape(psi),
                main.total_len()
            )));
        }
        let mut views = Vec::with_capacity(main.num_views());
        for (i, spec) in main.views() {
            let s = tape.slice_rows(psi, main.offset(i), main.view_len(i))?;
            views.push(tape.reshape(s, spec.rows, spec.cols)?);
        }
        Ok(views)
    }

    /// Plain (tape-free) generation, bitwise identical to the tape path.
    pub fn generate_eval(&self, task_id: usize) -> Result<Vec<f64>> {
        self.generate_eval_from(&self.params, task_id)
    }

    fn generate_eval_from(&self, params: &ParamVector, task_id: usize) -> Result<Vec<f64>> {
        if task_id >= self.k_tasks {
            return Err(Error::Invalid(format!(
                "task {} out of range for {} embeddings",
                task_id, self.k_tasks
            )));
        }
        let layout = &params.layout;
        let e = params.view(self.idx(&format!("task_emb_{}", task_id)));
        let c = params.view(self.idx("chunk_emb"));
        let in_dim = self.cfg.task_emb_dim + self.cfg.chunk_emb_dim;
        let mut z = Mat::zeros(in_dim, self.n_chunks);
        for i in 0..self.cfg.task_emb_dim {
            for j in 0..self.n_chunks {
                *z.at_mut(i, j) = e[i];
            }
        }
        for i in 0..self.cfg.chunk_emb_dim {
            for j in 0..self.n_chunks {
                *z.at_mut(self.cfg.task_emb_dim + i, j) = c[i * self.n_chunks + j];
            }
        }
        let dims = Self::dims(&self.cfg);
        let n_layers = dims.len() - 1;
        for l in 0..n_layers {
            let wi = self.idx(&format!("mlp_w_{}", l));
            let bi = self.idx(&format!("mlp_b_{}", l));
            let w = params.view(wi);
            let b = params.view(bi);
            let spec = layout.spec(wi);
            let mut nz = Mat::zeros(spec.rows, self.n_chunks);
            gemm_nn_raw(1.0, w, spec.rows, spec.cols, &z.data, self.n_chunks, &mut nz.data);
            for i in 0..spec.rows {
                let bias = b[i];
                for v in nz.row_mut(i) {
                    *v += bias;
                }
            }
            if l + 1 < n_layers {
                for v in nz.data.iter_mut() {
                    *v = sigmoid(*v);
                }
            }
            z = nz;
        }
        let mut psi = Vec::with_capacity(self.target_len);
        'outer: for chunk in 0..self.n_chunks {
            for j in 0..self.cfg.chunk_out {
                if psi.len() == self.target_len {
                    break 'outer;
                }
                psi.push(z.at(j, chunk));
            }
        }
        Ok(psi)
    }

    /// Freeze the current state at a task boundary: copy the parameters and
    /// cache the generated vectors for the `n_tasks_done` tasks learned so
    /// far.
    pub fn take_checkpoint(&mut self, n_tasks_done: usize) -> Result<()> {
        if n_tasks_done > self.k_tasks {
            return Err(Error::Invalid(format!(
                "checkpoint of {} tasks with only {} embeddings",
                n_tasks_done, self.k_tasks
            )));
        }
        let mut targets = Vec::with_capacity(n_tasks_done);
        for k in 0..n_tasks_done {
            targets.push(self.generate_eval(k)?);
        }
        self.checkpoint = Some(HnetCheckpoint { params: self.params.clone(), targets });
        Ok(())
    }

    /// The output-stability regularizer while learning task `current`:
    /// `(β/|S|) Σ_{k∈S} ‖h(e_k, θ) − ψ̃_k‖²` over previous tasks `S`
    /// (all of `0..current`, or the given subset). Zero for the first task.
    pub fn regularizer_on_tape(
        &self,
        tape: &mut Tape,
        leaves: &[Var],
        current: usize,
        subset: Option<&[usize]>,
    ) -> Result<Var> {
        if current == 0 {
            return Ok(tape.leaf(Mat::zeros(1, 1)));
        }
        let ck = self
            .checkpoint
            .as_ref()
            .ok_or_else(|| Error::Invalid("regularizer before any checkpoint".into()))?;
        let all: Vec<usize> = (0..current).collect();
        let set: &[usize] = subset.unwrap_or(&all);
        if set.is_empty() {
            return Err(Error::Invalid("empty task subset for regularizer".into()));
        }
        for &k in set {
            if k >= current || k >= ck.targets.len() {
                return Err(Error::Invalid(format!(
                    "regularizer subset task {} not in checkpoint (< {})",
                    k, current
                )));
            }
        }
        let mut total: Option<Var> = None;
        for &k in set {
            let psi_k = self.generate_on_tape(tape, leaves, k)?;
            let target = tape.leaf(Mat {
                rows: self.target_len,
                cols: 1,
                data: ck.targets[k].clone(),
            });
            let d = tape.sub(psi_k, target)?;
            let sq = tape.sum_sq(d);
            total = Some(match total {
                None => sq,
                Some(acc) => tape.add(acc, sq)?,
            });
        }
        Ok(tape.scale(total.expect("non-empty subset"), self.cfg.beta / set.len() as f64))
    }

    /// Views that should receive gradient while learning `current`: the
    /// shared generator plus embeddings for tasks seen so far. Later tasks'
    /// embeddings exist but are untouched.
    pub fn trainable_mask(&self, current: usize) -> Vec<bool> {
        let layout = &self.params.layout;
        let mut mask = vec![true; layout.total_len()];
        for i in 0..layout.num_views() {
            let name = &layout.spec(i).name;
            let frozen = match name.strip_prefix("task_emb_") {
                None => false,
                Some(k) => k.parse::<usize>().map(|k| k > current).unwrap_or(true),
            };
            if frozen {
                let off = layout.offset(i);
                for m in mask.iter_mut().skip(off).take(layout.view_len(i)) {
                    *m = false;
                }
            }
        }
        mask
    }
}
