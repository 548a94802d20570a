//! The sequential-task training engine: one configuration in, one
//! accuracy matrix out. All batching, method dispatch, consolidation
//! hooks, and divergence handling live here; everything is driven by the
//! single config seed through named RNG sub-streams, so a run is a pure
//! function of its configuration.

use serde::{Deserialize, Serialize};

use crate::cl::coreset::{distill_loss_on_tape, Coreset};
use crate::cl::ewc::{empirical_fisher, EwcState};
use crate::cl::mask::MaskSet;
use crate::cl::replay::{
    prior_match_on_tape, recon_loss_on_tape, reparameterize, ReplayConfig, ReplayState,
};
use crate::cl::si::SiState;
use crate::data::{gen_batch, make_task_suite, test_set, Sample, TaskSpec};
use crate::error::{Error, Result};
use crate::hnet::{HnetConfig, Hypernet};
use crate::mat::Mat;
use crate::model::{
    assemble_inputs, assemble_targets, eval_bit_counts, forward_tape, leaves_from, seq_bce_loss,
    ForwardOpts, RnnArch,
};
use crate::optim::{adam_peek_delta, adam_step, clip_global_norm, AdamConfig, AdamState};
use crate::params::{Layout, ParamVector};
use crate::rng::substream;
use crate::tape::{Gradients, Tape, Var};

use super::config::{ExperimentConfig, MethodConfig};

/// Fraction threshold for calling a recalled bit correct.
pub const EVAL_THRESHOLD: f64 = 0.5;
/// Samples behind each per-boundary Fisher estimate (capped by
/// `eval_samples` so small test configs stay cheap).
pub const FISHER_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed { task: usize, iter: usize, what: String },
}

/// Everything a finished (or failed) run reports. `acc` row `k` holds
/// `A[k][j]` for `j = k..K-1`: the accuracy of task `k`'s fixed test set
/// after each subsequent task — upper-triangular by construction. The
/// wall clock is measured but excluded from serialization so identical
/// config+seed pairs serialize to identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub variant: String,
    pub k_tasks: usize,
    pub p: usize,
    pub i: usize,
    pub r: usize,
    pub seed: u64,
    pub config_hash: String,
    pub status: RunStatus,
    pub acc: Vec<Vec<f64>>,
    pub consolidations: usize,
    #[serde(skip)]
    pub wall_s: f64,
}

impl RunRecord {
    pub fn a(&self, k: usize, j: usize) -> Result<f64> {
        if k >= self.acc.len() || j < k || j - k >= self.acc[k].len() {
            return Err(Error::Invalid(format!("A[{}][{}] not recorded", k, j)));
        }
        Ok(self.acc[k][j - k])
    }

    pub fn is_ok(&self) -> bool {
        matches!(self.status, RunStatus::Ok)
    }
}

/// `(during, final)`: mean over tasks of the accuracy right after each
/// task's own training, and after the last task.
pub fn during_final_metrics(record: &RunRecord) -> Result<(f64, f64)> {
    if !record.is_ok() {
        return Err(Error::Invalid("metrics of a failed run".into()));
    }
    let k_tasks = record.acc.len();
    if k_tasks == 0 {
        return Err(Error::Invalid("metrics of an empty run".into()));
    }
    let mut during = 0.0;
    let mut fin = 0.0;
    for (k, row) in record.acc.iter().enumerate() {
        if row.len() != k_tasks - k {
            return Err(Error::Shape(format!("accuracy row {} has {} entries", k, row.len())));
        }
        during += row[0];
        fin += row[row.len() - 1];
    }
    Ok((during / k_tasks as f64, fin / k_tasks as f64))
}

/// The trained state a run leaves behind, for analyses that need more
/// than the accuracy matrix (Fisher statistics, hidden-state geometry,
/// head similarity).
pub struct TrainedModel {
    pub arch: RnnArch,
    pub params: ParamVector,
    pub hnet: Option<Hypernet>,
    pub masks: Option<MaskSet>,
    /// Accumulated diagonal Fisher when the method maintains one.
    pub fisher: Option<Vec<f64>>,
    /// Generative-replay state (frozen decoder included) when trained.
    pub replay: Option<ReplayState>,
    pub suite: Vec<TaskSpec>,
    pub test_sets: Vec<Vec<Sample>>,
    pub task_onehot: bool,
}

impl TrainedModel {
    /// Effective main-network parameters when evaluating task `k` — the
    /// shared vector, or the hypernetwork's generated weights.
    pub fn params_for_task(&self, k: usize) -> Result<ParamVector> {
        match &self.hnet {
            Some(h) => Ok(ParamVector { layout: self.arch.layout(), data: h.generate_eval(k)? }),
            None => Ok(self.params.clone()),
        }
    }

    pub fn head_index(&self, k: usize) -> usize {
        if self.hnet.is_some() {
            0
        } else {
            k
        }
    }

    pub fn onehot(&self, k: usize) -> Option<(usize, usize)> {
        self.task_onehot.then_some((k, self.suite.len()))
    }

    /// The output-head matrix in effect for task `k`.
    pub fn head_for_task(&self, k: usize) -> Result<Mat> {
        let params = self.params_for_task(k)?;
        let name = format!("head_w_{}", self.head_index(k));
        let idx = params
            .layout
            .index_of(&name)
            .ok_or_else(|| Error::Invalid(format!("no view {:?}", name)))?;
        Ok(params.view_mat(idx))
    }

    pub fn eval_accuracy(&self, k: usize) -> Result<f64> {
        let params = self.params_for_task(k)?;
        let mask = match &self.masks {
            Some(m) => Some(m.mask(k)?),
            None => None,
        };
        let opts = ForwardOpts { task_id: self.head_index(k), mask };
        let (c, t) =
            eval_bit_counts(&self.arch, &params, &self.test_sets[k], opts, self.onehot(k), EVAL_THRESHOLD)?;
        Ok(c as f64 / t as f64)
    }
}

pub struct TrainedOutcome {
    pub record: RunRecord,
    pub model: TrainedModel,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    run_experiment_full(cfg).map(|o| o.record)
}

pub fn run_experiment_full(cfg: &ExperimentConfig) -> Result<TrainedOutcome> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let mut engine = Engine::new(cfg)?;
    let (status, acc) = match engine.run() {
        Ok(acc) => (RunStatus::Ok, acc),
        // A diverged run is a *reported* outcome, not an engine error; its
        // partial accuracies are dropped so they cannot leak into reports.
        Err(Error::Diverged { iter, what }) => {
            let task = engine.current_task;
            (RunStatus::Failed { task, iter, what }, Vec::new())
        }
        Err(e) => return Err(e),
    };
    let record = RunRecord {
        method: cfg.method.name().to_string(),
        variant: cfg.variant.name().to_string(),
        k_tasks: cfg.k_tasks,
        p: cfg.p,
        i: cfg.i,
        r: cfg.r,
        seed: cfg.seed,
        config_hash: cfg.config_hash(),
        status,
        acc,
        consolidations: engine.consolidations,
        wall_s: start.elapsed().as_secs_f64(),
    };
    Ok(TrainedOutcome { record, model: engine.into_model() })
}

// ── engine ───────────────────────────────────────────────────────────────

struct Engine<'c> {
    cfg: &'c ExperimentConfig,
    arch: RnnArch,
    layout: Layout,
    suite: Vec<TaskSpec>,
    test_sets: Vec<Vec<Sample>>,
    params: ParamVector,
    adam_cfg: AdamConfig,
    hnet: Option<Hypernet>,
    ewc: Option<EwcState>,
    si: Option<SiState>,
    masks: Option<MaskSet>,
    coreset: Option<Coreset>,
    replay: Option<ReplayState>,
    /// Decoder optimizer (replay only), rebuilt at each task boundary in
    /// step with the main one.
    dec_adam: Option<AdamState>,
    consolidations: usize,
    current_task: usize,
}

impl<'c> Engine<'c> {
    fn new(cfg: &'c ExperimentConfig) -> Result<Self> {
        let copy_cfg = cfg.copy_config()?;
        let suite = make_task_suite(copy_cfg, cfg.k_tasks, cfg.seed)?;
        let test_sets: Vec<Vec<Sample>> =
            suite.iter().map(|s| test_set(s, cfg.seed, cfg.eval_samples)).collect();

        let is_hnet = matches!(cfg.method, MethodConfig::Hnet(_));
        let replay_nz = match &cfg.method {
            MethodConfig::Replay(r) => r.n_z,
            _ => 0,
        };
        let arch = RnnArch {
            kind: cfg.kind,
            n_in: cfg.f_in + if cfg.task_input { cfg.k_tasks } else { 0 },
            n_h: cfg.n_h,
            f_out: copy_cfg.f_out(),
            n_heads: if is_hnet { 1 } else { cfg.k_tasks },
            n_z: replay_nz,
        };
        arch.validate()?;
        let layout = arch.layout();

        let mut init_rng = substream(cfg.seed, "init", 0);
        let params = arch.init_params(cfg.orth_init, &mut init_rng)?;

        let mut engine = Engine {
            cfg,
            arch,
            layout,
            suite,
            test_sets,
            params,
            adam_cfg: AdamConfig::with_lr(cfg.lr),
            hnet: None,
            ewc: None,
            si: None,
            masks: None,
            coreset: None,
            replay: None,
            dec_adam: None,
            consolidations: 0,
            current_task: 0,
        };

        match &cfg.method {
            MethodConfig::Ewc { lambda } => {
                engine.ewc = Some(EwcState::new(engine.layout.shared_len(), *lambda));
            }
            MethodConfig::Si(si) => {
                engine.si = Some(SiState::new(&engine.params, si.lambda, si.eps, si.squared));
            }
            MethodConfig::Masking { fraction } => {
                engine.masks = Some(MaskSet::generate(cfg.n_h, *fraction, cfg.k_tasks, cfg.seed)?);
            }
            MethodConfig::MaskingSi { fraction, si } => {
                engine.masks = Some(MaskSet::generate(cfg.n_h, *fraction, cfg.k_tasks, cfg.seed)?);
                engine.si = Some(SiState::new(&engine.params, si.lambda, si.eps, si.squared));
            }
            MethodConfig::Hnet(h) => {
                let hcfg = HnetConfig {
                    chunk_out: h.chunk_out,
                    task_emb_dim: h.task_emb_dim,
                    chunk_emb_dim: h.chunk_emb_dim,
                    hidden: h.hidden.clone(),
                    emb_std: h.emb_std,
                    out_scale: h.out_scale,
                    beta: h.beta,
                };
                let mut rng = substream(cfg.seed, "init", 1);
                engine.hnet =
                    Some(Hypernet::new(hcfg, engine.layout.total_len(), cfg.k_tasks, &mut rng)?);
            }
            MethodConfig::Coreset { n_store, lambda_distill } => {
                engine.coreset = Some(Coreset::new(*n_store, *lambda_distill)?);
            }
            MethodConfig::Replay(r) => {
                let rcfg = ReplayConfig {
                    n_z: r.n_z,
                    dec_n_h: r.dec_n_h,
                    lambda_rec: r.lambda_rec,
                    lambda_pm: r.lambda_pm,
                    lambda_distill: r.lambda_distill,
                    likelihood: r.likelihood,
                    sample_bits: r.sample_bits,
                };
                let mut rng = substream(cfg.seed, "init", 2);
                engine.replay =
                    Some(ReplayState::new(rcfg, cfg.f_in, cfg.k_tasks, cfg.orth_init, &mut rng)?);
            }
            MethodConfig::Finetune | MethodConfig::Scratch | MethodConfig::Multitask => {}
        }
        Ok(engine)
    }

    fn into_model(self) -> TrainedModel {
        TrainedModel {
            arch: self.arch,
            params: self.params,
            hnet: self.hnet,
            masks: self.masks,
            fisher: self.ewc.map(|e| e.fisher),
            replay: self.replay,
            suite: self.suite,
            test_sets: self.test_sets,
            task_onehot: self.cfg.task_input,
        }
    }

    fn onehot(&self, task: usize) -> Option<(usize, usize)> {
        self.cfg.task_input.then_some((task, self.cfg.k_tasks))
    }

    fn head(&self, task: usize) -> usize {
        if self.hnet.is_some() {
            0
        } else {
            task
        }
    }

    fn run(&mut self) -> Result<Vec<Vec<f64>>> {
        match self.cfg.method {
            MethodConfig::Scratch => self.run_scratch(),
            MethodConfig::Multitask => self.run_multitask(),
            _ => self.run_sequential(),
        }
    }

    // ── protocols ────────────────────────────────────────────────────────

    fn run_sequential(&mut self) -> Result<Vec<Vec<f64>>> {
        let k_tasks = self.cfg.k_tasks;
        let mut rows: Vec<Vec<f64>> = vec![Vec::new(); k_tasks];
        for task in 0..k_tasks {
            self.current_task = task;
            // Optimizer state starts fresh at each task boundary so a new
            // task cannot ride stale moments into protected parameters.
            let mut adam = AdamState::new(self.param_len());
            if let Some(r) = &self.replay {
                self.dec_adam = Some(AdamState::new(r.decoder.len()));
            }
            let mut data_rng = substream(self.cfg.seed, "data", task as u64);
            let mut aux_rng = substream(self.cfg.seed, "replay", task as u64);
            for iter in 0..self.cfg.iters {
                let batch = gen_batch(&self.suite[task], &mut data_rng, self.cfg.batch);
                self.train_iter(task, iter, &batch, &mut adam, &mut aux_rng)?;
            }
            for k in 0..=task {
                rows[k].push(self.eval_task(k)?);
            }
            if task + 1 < k_tasks {
                self.consolidate(task)?;
            }
        }
        Ok(rows)
    }

    /// Independent model per task; nothing can be forgotten, so each row
    /// repeats its own during-accuracy.
    fn run_scratch(&mut self) -> Result<Vec<Vec<f64>>> {
        let k_tasks = self.cfg.k_tasks;
        let mut rows: Vec<Vec<f64>> = vec![Vec::new(); k_tasks];
        for task in 0..k_tasks {
            self.current_task = task;
            let mut rng = substream(self.cfg.seed, "init", task as u64);
            self.params = self.arch.init_params(self.cfg.orth_init, &mut rng)?;
            let mut adam = AdamState::new(self.param_len());
            let mut data_rng = substream(self.cfg.seed, "data", task as u64);
            let mut aux_rng = substream(self.cfg.seed, "replay", task as u64);
            for iter in 0..self.cfg.iters {
                let batch = gen_batch(&self.suite[task], &mut data_rng, self.cfg.batch);
                self.train_iter(task, iter, &batch, &mut adam, &mut aux_rng)?;
            }
            let acc = self.eval_task(task)?;
            rows[task] = vec![acc; k_tasks - task];
        }
        Ok(rows)
    }

    /// One model trained jointly: every minibatch mixes all tasks with
    /// per-task counts differing by at most one, for `iters × K` steps
    /// (the same per-task gradient budget as the sequential protocols).
    fn run_multitask(&mut self) -> Result<Vec<Vec<f64>>> {
        let k_tasks = self.cfg.k_tasks;
        let b = self.cfg.batch;
        let base = b / k_tasks;
        let extra = b % k_tasks;
        let counts: Vec<usize> =
            (0..k_tasks).map(|k| base + usize::from(k < extra)).collect();
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::Config(format!(
                "batch {} cannot cover {} tasks jointly",
                b, k_tasks
            )));
        }
        let mut adam = AdamState::new(self.param_len());
        let mut data_rngs: Vec<_> =
            (0..k_tasks).map(|k| substream(self.cfg.seed, "data", k as u64)).collect();
        let total_iters = self.cfg.iters * k_tasks;
        for iter in 0..total_iters {
            let mut tape = Tape::new();
            let leaves = leaves_from(&mut tape, &self.params);
            let mut total: Option<Var> = None;
            for task in 0..k_tasks {
                let batch = gen_batch(&self.suite[task], &mut data_rngs[task], counts[task]);
                let xs = assemble_inputs(&batch, self.onehot(task))?;
                let (ys, ws) = assemble_targets(&batch)?;
                let opts = ForwardOpts { task_id: task, mask: None };
                let run = forward_tape(&mut tape, &self.arch, &leaves, &xs, opts)?;
                let loss = seq_bce_loss(&mut tape, &run.logits, &ys, &ws)?;
                let weighted = tape.scale(loss, counts[task] as f64 / b as f64);
                total = Some(match total {
                    None => weighted,
                    Some(t) => tape.add(t, weighted)?,
                });
            }
            let mut total = total.expect("k_tasks >= 1");
            total = self.add_orth_penalty(&mut tape, &leaves, total)?;
            self.check_finite(&tape, total, iter)?;
            let grads = tape.backward(total)?;
            let mut g = grads_to_vec(&grads, &leaves, &self.layout);
            clip_global_norm(&mut [&mut g], self.cfg.clip);
            let trainable = self.trainable_mask_all_heads();
            adam_step(&mut self.params, &g, &mut adam, &self.adam_cfg, Some(&trainable))?;
        }
        let mut rows: Vec<Vec<f64>> = vec![Vec::new(); k_tasks];
        for k in 0..k_tasks {
            let acc = self.eval_task(k)?;
            rows[k] = vec![acc; k_tasks - k];
        }
        Ok(rows)
    }

    // ── single training step ─────────────────────────────────────────────

    fn train_iter(
        &mut self,
        task: usize,
        iter: usize,
        batch: &[Sample],
        adam: &mut AdamState,
        aux_rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<()> {
        if self.hnet.is_some() {
            self.train_iter_hnet(task, iter, batch, adam, aux_rng)
        } else if self.replay.is_some() {
            self.train_iter_replay(task, iter, batch, adam, aux_rng)
        } else {
            self.train_iter_standard(task, iter, batch, adam, aux_rng)
        }
    }

    fn train_iter_standard(
        &mut self,
        task: usize,
        iter: usize,
        batch: &[Sample],
        adam: &mut AdamState,
        aux_rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<()> {
        let mut tape = Tape::new();
        let leaves = leaves_from(&mut tape, &self.params);
        let xs = assemble_inputs(batch, self.onehot(task))?;
        let (ys, ws) = assemble_targets(batch)?;
        let mask = match &self.masks {
            Some(m) => Some(m.mask(task)?),
            None => None,
        };
        let opts = ForwardOpts { task_id: task, mask };
        let run = forward_tape(&mut tape, &self.arch, &leaves, &xs, opts)?;
        let task_loss = seq_bce_loss(&mut tape, &run.logits, &ys, &ws)?;

        let mut total = self.add_orth_penalty(&mut tape, &leaves, task_loss)?;
        if let Some(ewc) = &self.ewc {
            let pen = ewc.penalty_on_tape(&mut tape, &leaves, &self.layout)?;
            total = tape.add(total, pen)?;
        }
        if let Some(si) = &self.si {
            let pen = si.penalty_on_tape(&mut tape, &leaves, &self.layout)?;
            total = tape.add(total, pen)?;
        }
        if task > 0 {
            if let Some(cs) = &self.coreset {
                // Replay minibatch of the current batch size, split across
                // previous tasks, drawn with replacement.
                let counts = split_counts(self.cfg.batch, task);
                let b_tot: usize = counts.iter().sum();
                for (k, &b_k) in counts.iter().enumerate() {
                    if b_k == 0 {
                        continue;
                    }
                    let samples = cs.replay_batch(k, b_k, aux_rng)?;
                    let k_opts = ForwardOpts { task_id: k, mask: None };
                    let (soft, ws_k) = cs.soft_targets(&self.arch, &samples, k_opts, self.onehot(k))?;
                    let xs_k = assemble_inputs(&samples, self.onehot(k))?;
                    let run_k = forward_tape(&mut tape, &self.arch, &leaves, &xs_k, k_opts)?;
                    let lambda = cs.lambda_distill * b_k as f64 / b_tot as f64;
                    let d = distill_loss_on_tape(&mut tape, &run_k.logits, &soft, &ws_k, lambda)?;
                    total = tape.add(total, d)?;
                }
            }
        }

        self.check_finite(&tape, total, iter)?;
        let trainable = self.trainable_mask(task);
        if self.si.is_some() {
            // Path-integral bookkeeping wants the hypothetical step driven
            // by the task loss alone, before any penalty steers it.
            let task_grads = tape.backward(task_loss)?;
            let mut g_task = grads_to_vec(&task_grads, &leaves, &self.layout);
            clip_global_norm(&mut [&mut g_task], self.cfg.clip);
            let delta = adam_peek_delta(adam, &self.adam_cfg, &g_task, self.layout.shared_len());
            let grads = tape.backward(total)?;
            let mut g = grads_to_vec(&grads, &leaves, &self.layout);
            clip_global_norm(&mut [&mut g], self.cfg.clip);
            self.si.as_mut().expect("checked").track_step(&g_task, &delta)?;
            adam_step(&mut self.params, &g, adam, &self.adam_cfg, Some(&trainable))?;
        } else {
            let grads = tape.backward(total)?;
            let mut g = grads_to_vec(&grads, &leaves, &self.layout);
            clip_global_norm(&mut [&mut g], self.cfg.clip);
            adam_step(&mut self.params, &g, adam, &self.adam_cfg, Some(&trainable))?;
        }
        Ok(())
    }

    fn train_iter_hnet(
        &mut self,
        task: usize,
        iter: usize,
        batch: &[Sample],
        adam: &mut AdamState,
        aux_rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<()> {
        let hnet = self.hnet.as_ref().expect("hnet method");
        let mut tape = Tape::new();
        let hleaves = leaves_from(&mut tape, &hnet.params);
        let psi = hnet.generate_on_tape(&mut tape, &hleaves, task)?;
        let views = Hypernet::main_view_vars(&mut tape, psi, &self.layout)?;

        let xs = assemble_inputs(batch, self.onehot(task))?;
        let (ys, ws) = assemble_targets(batch)?;
        let opts = ForwardOpts { task_id: 0, mask: None };
        let run = forward_tape(&mut tape, &self.arch, &views, &xs, opts)?;
        let task_loss = seq_bce_loss(&mut tape, &run.logits, &ys, &ws)?;
        let mut total = self.add_orth_penalty(&mut tape, &views, task_loss)?;

        let subset = match &self.cfg.method {
            MethodConfig::Hnet(h) if h.c_subset > 0 && task > h.c_subset => {
                use rand::seq::SliceRandom;
                let mut prev: Vec<usize> = (0..task).collect();
                prev.shuffle(aux_rng);
                prev.truncate(h.c_subset);
                prev.sort_unstable();
                Some(prev)
            }
            _ => None,
        };
        let reg = hnet.regularizer_on_tape(&mut tape, &hleaves, task, subset.as_deref())?;
        total = tape.add(total, reg)?;

        self.check_finite(&tape, total, iter)?;
        let grads = tape.backward(total)?;
        let mut g = grads_to_vec(&grads, &hleaves, &hnet.params.layout);
        clip_global_norm(&mut [&mut g], self.cfg.clip);
        let trainable = hnet.trainable_mask(task);
        let hnet = self.hnet.as_mut().expect("hnet method");
        adam_step(&mut hnet.params, &g, adam, &self.adam_cfg, Some(&trainable))?;
        Ok(())
    }

    fn train_iter_replay(
        &mut self,
        task: usize,
        iter: usize,
        batch: &[Sample],
        adam: &mut AdamState,
        aux_rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<()> {
        let replay = self.replay.as_ref().expect("replay method");
        let rcfg = replay.cfg;
        let mut tape = Tape::new();
        let leaves = leaves_from(&mut tape, &self.params);
        let dec_leaves = leaves_from(&mut tape, &replay.decoder);

        // Current task's batch plus hallucinated batches for every
        // previous task, together the B ∪ B̃ the VAE terms run over.
        let mut groups: Vec<(usize, Vec<Sample>, bool)> = vec![(task, batch.to_vec(), false)];
        if task > 0 {
            let counts = replay.replay_counts(task, self.cfg.batch);
            for (k, &c) in counts.iter().enumerate() {
                if c > 0 {
                    groups.push((k, replay.replay_group(&self.suite[k], c, aux_rng)?, true));
                }
            }
        }
        let b_tot: usize = groups.iter().map(|(_, s, _)| s.len()).sum();
        let b_replay: usize = groups.iter().filter(|(_, _, r)| *r).map(|(_, s, _)| s.len()).sum();

        let mut total: Option<Var> = None;
        let add = |tape: &mut Tape, acc: &mut Option<Var>, v: Var| -> Result<()> {
            *acc = Some(match acc.take() {
                None => v,
                Some(t) => tape.add(t, v)?,
            });
            Ok(())
        };

        for (k, samples, is_replay) in &groups {
            let k = *k;
            let b_g = samples.len();
            let xs = assemble_inputs(samples, self.onehot(k))?;
            let opts = ForwardOpts { task_id: k, mask: None };
            let run = forward_tape(&mut tape, &self.arch, &leaves, &xs, opts)?;

            if !is_replay {
                let (ys, ws) = assemble_targets(samples)?;
                let l = seq_bce_loss(&mut tape, &run.logits, &ys, &ws)?;
                add(&mut tape, &mut total, l)?;
            } else {
                // Distill the frozen model's soft recall beliefs on its own
                // hallucinations, weighted by this group's share of B̃.
                let frozen = replay
                    .frozen_main
                    .as_ref()
                    .ok_or_else(|| Error::Invalid("replay group without a frozen model".into()))?;
                let frozen_run = crate::model::forward_eval(&self.arch, frozen, &xs, opts)?;
                let soft: Vec<Mat> =
                    frozen_run.logits.iter().map(|z| z.map(crate::tape::sigmoid)).collect();
                let ws: Vec<Mat> = {
                    let (_, ws) = assemble_targets(samples)?;
                    ws
                };
                let lambda = rcfg.lambda_distill * b_g as f64 / b_replay.max(1) as f64;
                let d = distill_loss_on_tape(&mut tape, &run.logits, &soft, &ws, lambda)?;
                add(&mut tape, &mut total, d)?;
            }

            // Reconstruction + prior-match on every group; per-group means
            // weighted by b_g/b_tot reproduce the union-batch mean exactly.
            let share = b_g as f64 / b_tot as f64;
            let raw_xs = assemble_inputs(samples, None)?;
            let onehot_rows = {
                let mut m = Mat::zeros(self.cfg.k_tasks, b_g);
                for c in 0..b_g {
                    *m.at_mut(k, c) = 1.0;
                }
                m
            };
            let mut dec_ins = Vec::with_capacity(raw_xs.len());
            for t in 0..raw_xs.len() {
                let eps = Mat::from_fn(rcfg.n_z, b_g, |_, _| crate::rng::normal(aux_rng));
                let z = reparameterize(&mut tape, run.mu[t], run.logvar[t], &eps)?;
                let oh = tape.leaf(onehot_rows.clone());
                dec_ins.push(tape.concat_rows(z, oh)?);
            }
            let dec_out = replay.decoder_forward_on_tape(&mut tape, &dec_leaves, &dec_ins)?;
            let rec = recon_loss_on_tape(&mut tape, &dec_out, &raw_xs, rcfg.likelihood)?;
            let rec = tape.scale(rec, rcfg.lambda_rec * share);
            add(&mut tape, &mut total, rec)?;
            let pm = prior_match_on_tape(&mut tape, &run.mu, &run.logvar)?;
            let pm = tape.scale(pm, rcfg.lambda_pm * share);
            add(&mut tape, &mut total, pm)?;
        }

        let mut total = total.expect("at least the current batch");
        total = self.add_orth_penalty(&mut tape, &leaves, total)?;
        self.check_finite(&tape, total, iter)?;

        let grads = tape.backward(total)?;
        let mut g_main = grads_to_vec(&grads, &leaves, &self.layout);
        let replay = self.replay.as_mut().expect("replay method");
        let mut g_dec = grads_to_vec(&grads, &dec_leaves, &replay.decoder.layout);
        clip_global_norm(&mut [&mut g_main, &mut g_dec], self.cfg.clip);

        let trainable = trainable_mask_for(&self.layout, self.arch.n_heads, 0..=task);
        adam_step(&mut self.params, &g_main, adam, &self.adam_cfg, Some(&trainable))?;
        let dec_adam = self
            .dec_adam
            .as_mut()
            .ok_or_else(|| Error::Invalid("decoder optimizer missing".into()))?;
        adam_step(&mut replay.decoder, &g_dec, dec_adam, &self.adam_cfg, None)?;
        Ok(())
    }

    // ── shared pieces ────────────────────────────────────────────────────

    fn param_len(&self) -> usize {
        match &self.hnet {
            Some(h) => h.params.len(),
            None => self.params.len(),
        }
    }

    fn add_orth_penalty(&self, tape: &mut Tape, views: &[Var], loss: Var) -> Result<Var> {
        if self.cfg.orth_reg == 0.0 {
            return Ok(loss);
        }
        let mut total = loss;
        for name in self.arch.recurrent_square_views() {
            let idx = self
                .layout
                .index_of(name)
                .ok_or_else(|| Error::Invalid(format!("no view {:?}", name)))?;
            let pen = tape.orth_penalty(views[idx])?;
            let scaled = tape.scale(pen, self.cfg.orth_reg);
            total = tape.add(total, scaled)?;
        }
        Ok(total)
    }

    fn check_finite(&self, tape: &Tape, loss: Var, iter: usize) -> Result<()> {
        let v = tape.scalar(loss)?;
        if !v.is_finite() {
            return Err(Error::Diverged { iter, what: format!("loss = {}", v) });
        }
        Ok(())
    }

    fn trainable_mask(&self, task: usize) -> Vec<bool> {
        match &self.cfg.method {
            MethodConfig::Coreset { .. } | MethodConfig::Replay(_) => {
                trainable_mask_for(&self.layout, self.arch.n_heads, 0..=task)
            }
            _ => trainable_mask_for(&self.layout, self.arch.n_heads, task..=task),
        }
    }

    fn trainable_mask_all_heads(&self) -> Vec<bool> {
        trainable_mask_for(&self.layout, self.arch.n_heads, 0..=self.arch.n_heads - 1)
    }

    fn eval_task(&self, k: usize) -> Result<f64> {
        let params_store;
        let params = match &self.hnet {
            Some(h) => {
                params_store = ParamVector { layout: self.arch.layout(), data: h.generate_eval(k)? };
                &params_store
            }
            None => &self.params,
        };
        let mask = match &self.masks {
            Some(m) => Some(m.mask(k)?),
            None => None,
        };
        let opts = ForwardOpts { task_id: self.head(k), mask };
        let (c, t) =
            eval_bit_counts(&self.arch, params, &self.test_sets[k], opts, self.onehot(k), EVAL_THRESHOLD)?;
        Ok(c as f64 / t as f64)
    }

    /// The method's once-per-boundary consolidation step, after task
    /// `task` finished training and was evaluated.
    fn consolidate(&mut self, task: usize) -> Result<()> {
        self.consolidations += 1;
        match &self.cfg.method {
            MethodConfig::Ewc { .. } => {
                let n = FISHER_SAMPLES.min(self.cfg.eval_samples).max(1);
                let mut rng = substream(self.cfg.seed, "fisher", task as u64);
                let samples = gen_batch(&self.suite[task], &mut rng, n);
                let opts = ForwardOpts { task_id: task, mask: None };
                let f = empirical_fisher(&self.arch, &self.params, &samples, opts, self.onehot(task))?;
                self.ewc.as_mut().expect("ewc method").consolidate(&f, &self.params)?;
            }
            MethodConfig::Si(_) | MethodConfig::MaskingSi { .. } => {
                self.si.as_mut().expect("si state").consolidate(&self.params)?;
            }
            MethodConfig::Hnet(_) => {
                self.hnet.as_mut().expect("hnet method").take_checkpoint(task + 1)?;
            }
            MethodConfig::Coreset { .. } => {
                let cs = self.coreset.as_mut().expect("coreset method");
                cs.store_task(&self.suite[task], self.cfg.seed)?;
                cs.refresh_provider(&self.params);
            }
            MethodConfig::Replay(_) => {
                let params = self.params.clone();
                self.replay.as_mut().expect("replay method").checkpoint(&params);
            }
            MethodConfig::Masking { .. } | MethodConfig::Finetune => {}
            MethodConfig::Scratch | MethodConfig::Multitask => {
                unreachable!("baselines do not run the sequential loop")
            }
        }
        Ok(())
    }
}

/// Split `total` across `parts` with counts differing by at most one,
/// earlier parts taking the remainder.
fn split_counts(total: usize, parts: usize) -> Vec<usize> {
    let base = total / parts;
    let extra = total % parts;
    (0..parts).map(|k| base + usize::from(k < extra)).collect()
}

/// Gather per-view gradients into one flat vector over the layout; views
/// the loss never touched stay zero.
fn grads_to_vec(grads: &Gradients, leaves: &[Var], layout: &Layout) -> Vec<f64> {
    let mut g = vec![0.0; layout.total_len()];
    for idx in 0..layout.num_views() {
        if let Some(s) = grads.wrt(leaves[idx]) {
            let off = layout.offset(idx);
            g[off..off + s.len()].copy_from_slice(s);
        }
    }
    g
}

/// Shared prefix plus the heads in `heads` are trainable.
fn trainable_mask_for(
    layout: &Layout,
    n_heads: usize,
    heads: std::ops::RangeInclusive<usize>,
) -> Vec<bool> {
    let mut mask = vec![false; layout.total_len()];
    for m in mask.iter_mut().take(layout.shared_len()) {
        *m = true;
    }
    for k in heads.clone() {
        if k >= n_heads {
            continue;
        }
        for name in [format!("head_w_{}", k), format!("head_b_{}", k)] {
            if let Some(idx) = layout.index_of(&name) {
                let off = layout.offset(idx);
                for m in mask.iter_mut().skip(off).take(layout.view_len(idx)) {
                    *m = true;
                }
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cl::replay::Likelihood;
    use crate::data::Variant;
    use crate::harness::config::{HnetHypers, ReplayHypers, SiHypers};
    use crate::model::RnnKind;

    fn tiny(method: MethodConfig) -> ExperimentConfig {
        ExperimentConfig {
            seed: 7,
            k_tasks: 2,
            variant: Variant::Permuted,
            p: 3,
            i: 3,
            r: 1,
            f_in: 6,
            kind: RnnKind::Vanilla,
            n_h: 10,
            task_input: false,
            lr: 1e-3,
            batch: 4,
            iters: 6,
            clip: Some(100.0),
            orth_init: true,
            orth_reg: 1.0,
            eval_samples: 16,
            method,
        }
    }

    fn tiny_methods() -> Vec<MethodConfig> {
        vec![
            MethodConfig::Finetune,
            MethodConfig::Scratch,
            MethodConfig::Multitask,
            MethodConfig::Ewc { lambda: 10.0 },
            MethodConfig::Si(SiHypers { lambda: 1.0, eps: 1e-3, squared: false }),
            MethodConfig::Masking { fraction: 0.5 },
            MethodConfig::MaskingSi {
                fraction: 0.5,
                si: SiHypers { lambda: 1.0, eps: 1e-3, squared: false },
            },
            MethodConfig::Hnet(HnetHypers {
                beta: 1.0,
                emb_std: 1.0,
                chunk_out: 40,
                task_emb_dim: 2,
                chunk_emb_dim: 2,
                hidden: vec![4],
                out_scale: 0.1,
                c_subset: 0,
            }),
            MethodConfig::Coreset { n_store: 8, lambda_distill: 1.0 },
            MethodConfig::Replay(ReplayHypers {
                n_z: 4,
                dec_n_h: 8,
                lambda_rec: 1.0,
                lambda_pm: 1.0,
                lambda_distill: 1.0,
                likelihood: Likelihood::Bernoulli,
                sample_bits: true,
            }),
        ]
    }

    #[test]
    fn during_final_arithmetic_matches_worked_example() {
        let record = RunRecord {
            method: "finetune".into(),
            variant: "permuted".into(),
            k_tasks: 2,
            p: 3,
            i: 3,
            r: 1,
            seed: 7,
            config_hash: "0".repeat(16),
            status: RunStatus::Ok,
            acc: vec![vec![0.9, 0.8], vec![1.0]],
            consolidations: 1,
            wall_s: 0.0,
        };
        let (during, fin) = during_final_metrics(&record).unwrap();
        assert!((during - 0.95).abs() < 1e-15);
        assert!((fin - 0.90).abs() < 1e-15);
        assert_eq!(record.a(0, 1).unwrap(), 0.8);
        assert!(record.a(1, 0).is_err());
    }

    #[test]
    fn single_task_run_has_equal_during_and_final() {
        let mut cfg = tiny(MethodConfig::Finetune);
        cfg.k_tasks = 1;
        let record = run_experiment(&cfg).unwrap();
        assert_eq!(record.acc.len(), 1);
        assert_eq!(record.acc[0].len(), 1);
        assert_eq!(record.consolidations, 0);
        let (during, fin) = during_final_metrics(&record).unwrap();
        assert_eq!(during, fin);
    }

    #[test]
    fn every_method_completes_a_tiny_sequence() {
        for method in tiny_methods() {
            let cfg = tiny(method);
            let name = cfg.method.name();
            let record = run_experiment(&cfg)
                .unwrap_or_else(|e| panic!("{} failed to run: {}", name, e));
            assert!(record.is_ok(), "{} diverged: {:?}", name, record.status);
            assert_eq!(record.acc.len(), 2, "{}", name);
            assert_eq!(record.acc[0].len(), 2, "{}", name);
            assert_eq!(record.acc[1].len(), 1, "{}", name);
            let boundaries = match record.method.as_str() {
                "scratch" | "multitask" => 0,
                _ => 1,
            };
            assert_eq!(record.consolidations, boundaries, "{}", name);
            for row in &record.acc {
                for &a in row {
                    assert!((0.0..=1.0).contains(&a), "{}: accuracy {} out of range", name, a);
                }
            }
        }
    }

    #[test]
    fn repeated_runs_serialize_to_identical_bytes() {
        let cfg = tiny(MethodConfig::Ewc { lambda: 10.0 });
        let mut a = run_experiment(&cfg).unwrap();
        let mut b = run_experiment(&cfg).unwrap();
        // Only the wall clock may differ between identical runs.
        a.wall_s = 0.0;
        b.wall_s = 0.0;
        assert_eq!(a, b);
        let ja = serde_json::to_string_pretty(&a).unwrap();
        let jb = serde_json::to_string_pretty(&b).unwrap();
        assert_eq!(ja.into_bytes(), jb.into_bytes());
    }

    #[test]
    fn divergence_is_reported_not_propagated() {
        let mut cfg = tiny(MethodConfig::Replay(ReplayHypers {
            n_z: 4,
            dec_n_h: 8,
            lambda_rec: 1.0,
            lambda_pm: 1.0,
            lambda_distill: 1.0,
            likelihood: Likelihood::Bernoulli,
            sample_bits: true,
        }));
        cfg.lr = 1e3;
        cfg.clip = None;
        cfg.iters = 20;
        let record = run_experiment(&cfg).unwrap();
        match record.status {
            RunStatus::Failed { iter, .. } => assert!(iter < 20 * 2),
            RunStatus::Ok => panic!("expected the run to diverge"),
        }
        assert!(record.acc.is_empty());
        assert!(during_final_metrics(&record).is_err());
    }

    #[test]
    fn scratch_restarts_produce_a_full_matrix() {
        let record = run_experiment(&tiny(MethodConfig::Scratch)).unwrap();
        assert!(record.is_ok());
        assert_eq!(record.acc[0].len(), 2);
    }

    #[test]
    fn split_counts_differ_by_at_most_one() {
        assert_eq!(split_counts(10, 3), vec![4, 3, 3]);
        assert_eq!(split_counts(9, 3), vec![3, 3, 3]);
        assert_eq!(split_counts(2, 3), vec![1, 1, 0]);
        let counts = split_counts(64, 5);
        assert_eq!(counts.iter().sum::<usize>(), 64);
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1);
    }

    #[test]
    fn trainable_mask_covers_shared_prefix_and_chosen_heads() {
        let arch = RnnArch {
            kind: RnnKind::Vanilla,
            n_in: 6,
            n_h: 10,
            f_out: 5,
            n_heads: 3,
            n_z: 0,
        };
        let layout = arch.layout();
        let mask = trainable_mask_for(&layout, 3, 1..=1);
        for i in 0..layout.shared_len() {
            assert!(mask[i]);
        }
        for (k, expect) in [(0, false), (1, true), (2, false)] {
            let idx = layout.index_of(&format!("head_w_{}", k)).unwrap();
            let off = layout.offset(idx);
            assert_eq!(mask[off], expect, "head {}", k);
        }
        let all = trainable_mask_for(&layout, 3, 0..=2);
        assert!(all.iter().all(|&b| b));
    }
}
