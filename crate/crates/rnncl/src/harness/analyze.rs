//! Analysis drivers behind `analyze {pca|fisher|subspace|theory}`: each
//! trains (or constructs) what it needs from an experiment config and
//! returns a serializable summary.

use serde::{Deserialize, Serialize};

use crate::analysis::{fisher_stats, head_subspace_similarity, pca_intrinsic_dim};
use crate::cl::ewc::empirical_fisher;
use crate::data::gen_batch;
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::model::{assemble_inputs, forward_eval};
use crate::rng::substream;
use crate::theory::{build_queue_copy_rnn, interference_experiment};

use super::config::ExperimentConfig;
use super::experiment::{run_experiment_full, TrainedModel, FISHER_SAMPLES};

/// Default cumulative-variance threshold for intrinsic dimensionality.
pub const PCA_THRESHOLD: f64 = 0.75;
/// Default singular-value cutoff for head subspace bases.
pub const HEAD_RANK_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaReport {
    pub threshold: f64,
    /// Intrinsic dimensionality of the hidden state at every timestep of
    /// the first task's test set.
    pub dims_per_step: Vec<usize>,
    /// The timestep the stop bit occupies, and the dimensionality there.
    pub stop_step: usize,
    pub dim_at_stop: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FisherAnalysis {
    pub view: String,
    pub mean: f64,
    pub max: f64,
    pub histogram: Vec<(f64, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubspaceReport {
    /// Pairwise head similarity `‖U_k U_lᵀ‖_F`, K x K.
    pub sim: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoryReport {
    pub feasible: bool,
    pub orthogonal_capacity: usize,
    pub max_retention_error: f64,
    pub max_pairwise_overlap: f64,
    /// Exact-construction sanity check: hand-built queue accuracy.
    pub queue_bit_accuracy: f64,
}

fn trained(cfg: &ExperimentConfig) -> Result<TrainedModel> {
    let out = run_experiment_full(cfg)?;
    if !out.record.is_ok() {
        return Err(Error::Invalid(format!("training failed: {:?}", out.record.status)));
    }
    Ok(out.model)
}

/// Hidden states of task `task`'s test set, one `B x n_h` observation
/// matrix per timestep.
pub fn hidden_states_per_step(model: &TrainedModel, task: usize) -> Result<Vec<Mat>> {
    let params = model.params_for_task(task)?;
    let mask = match &model.masks {
        Some(m) => Some(m.mask(task)?),
        None => None,
    };
    let opts = crate::model::ForwardOpts { task_id: model.head_index(task), mask };
    let xs = assemble_inputs(&model.test_sets[task], model.onehot(task))?;
    let run = forward_eval(&model.arch, &params, &xs, opts)?;
    // hidden[t] is n_h x B; observations must be rows.
    Ok(run.hidden.iter().map(|h| h.transpose()).collect())
}

pub fn analyze_pca(cfg: &ExperimentConfig, threshold: f64) -> Result<PcaReport> {
    let model = trained(cfg)?;
    let states = hidden_states_per_step(&model, 0)?;
    let dims_per_step = states
        .iter()
        .map(|h| pca_intrinsic_dim(h, threshold))
        .collect::<Result<Vec<_>>>()?;
    let stop_step = model.suite[0].cfg.i;
    Ok(PcaReport { threshold, dims_per_step: dims_per_step.clone(), stop_step, dim_at_stop: dims_per_step[stop_step] })
}

/// Diagonal-Fisher statistics of one named view after training. When the
/// run accumulated a Fisher of its own (online EWC) that one is reported;
/// otherwise a fresh estimate is taken on the first task.
pub fn analyze_fisher(cfg: &ExperimentConfig, view: &str) -> Result<FisherAnalysis> {
    let model = trained(cfg)?;
    let fisher = match &model.fisher {
        Some(f) if f.iter().any(|&v| v > 0.0) => f.clone(),
        _ => fresh_fisher(&model, 0, cfg)?,
    };
    let stats = fisher_stats(&fisher, &model.arch.layout(), view, 20)?;
    Ok(FisherAnalysis { view: view.to_string(), mean: stats.mean, max: stats.max, histogram: stats.histogram })
}

pub fn fresh_fisher(model: &TrainedModel, task: usize, cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    let n = FISHER_SAMPLES.min(cfg.eval_samples).max(1);
    let mut rng = substream(cfg.seed, "fisher", 9000 + task as u64);
    let samples = gen_batch(&model.suite[task], &mut rng, n);
    let params = model.params_for_task(task)?;
    let mask = match &model.masks {
        Some(m) => Some(m.mask(task)?),
        None => None,
    };
    let opts = crate::model::ForwardOpts { task_id: model.head_index(task), mask };
    empirical_fisher(&model.arch, &params, &samples, opts, model.onehot(task))
}

pub fn analyze_subspace(cfg: &ExperimentConfig, rank_threshold: f64) -> Result<SubspaceReport> {
    let model = trained(cfg)?;
    let k = cfg.k_tasks;
    let heads: Vec<Mat> = (0..k).map(|t| model.head_for_task(t)).collect::<Result<Vec<_>>>()?;
    let mut sim = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in 0..k {
            sim[a][b] = head_subspace_similarity(&heads[a], &heads[b], rank_threshold)?;
        }
    }
    Ok(SubspaceReport { sim })
}

/// No training: the linear-capacity construction at this config's
/// geometry, plus the exact queue network on the same pattern length.
pub fn analyze_theory(cfg: &ExperimentConfig) -> Result<TheoryReport> {
    let dims = vec![cfg.p; cfg.k_tasks];
    let rep = interference_experiment(&dims, cfg.n_h, cfg.seed)?;
    let queue = build_queue_copy_rnn(cfg.p, cfg.f_in - 1)?;
    let queue_bit_accuracy = queue.bit_accuracy(100, cfg.seed)?;
    Ok(TheoryReport {
        feasible: rep.feasible,
        orthogonal_capacity: rep.orthogonal_capacity,
        max_retention_error: rep.retention_errors.iter().cloned().fold(0.0, f64::max),
        max_pairwise_overlap: rep.max_pairwise_overlap,
        queue_bit_accuracy,
    })
}
