//! Coreset replay with distillation: keep `N` input sequences per finished
//! task, and while training later tasks, pull the model's outputs on those
//! inputs toward the *soft* predictions of a frozen checkpoint taken at the
//! last boundary. Targets are recomputed lazily from the frozen provider
//! for every replay minibatch; the stored inputs themselves never change.

use crate::data::{Sample, TaskSpec};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::model::{assemble_inputs, assemble_targets, forward_eval, seq_bce_loss, ForwardOpts, RnnArch};
use crate::params::ParamVector;
use crate::rng::substream;
use crate::tape::{sigmoid, Tape, Var};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct Coreset {
    /// Stored inputs per past task (index = task id; empty if not stored).
    pub stored: Vec<Vec<Sample>>,
    /// Frozen soft-target provider, refreshed at each task boundary.
    pub provider: Option<ParamVector>,
    pub lambda_distill: f64,
    pub n_store: usize,
}

impl Coreset {
    pub fn new(n_store: usize, lambda_distill: f64) -> Result<Self> {
        if n_store == 0 {
            return Err(Error::Config("coreset of zero samples".into()));
        }
        Ok(Coreset { stored: Vec::new(), provider: None, lambda_distill, n_store })
    }

    /// Draw and store `n_store` fresh samples of the finished task,
    /// deterministic per `(master_seed, task_id)`.
    pub fn store_task(&mut self, spec: &TaskSpec, master_seed: u64) -> Result<()> {
        let mut rng = substream(master_seed, "coreset", spec.task_id as u64);
        let samples = crate::data::gen_batch(spec, &mut rng, self.n_store);
        while self.stored.len() <= spec.task_id {
            self.stored.push(Vec::new());
        }
        if !self.stored[spec.task_id].is_empty() {
            return Err(Error::Invalid(format!("task {} already stored", spec.task_id)));
        }
        self.stored[spec.task_id] = samples;
        Ok(())
    }

    /// Refresh the frozen provider to the given parameters (a deep copy).
    pub fn refresh_provider(&mut self, params: &ParamVector) {
        self.provider = Some(params.clone());
    }

    /// A with-replacement minibatch of stored inputs for one past task.
    pub fn replay_batch(&self, task: usize, b: usize, rng: &mut impl Rng) -> Result<Vec<Sample>> {
        let pool = self
            .stored
            .get(task)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| Error::Invalid(format!("no coreset stored for task {}", task)))?;
        Ok((0..b).map(|_| pool[rng.gen_range(0..pool.len())].clone()).collect())
    }

    /// Soft targets `σ(ẑ)` from the frozen provider for the given replay
    /// samples, along with their recall-window weights.
    pub fn soft_targets(
        &self,
        arch: &RnnArch,
        samples: &[Sample],
        opts: ForwardOpts,
        task_onehot: Option<(usize, usize)>,
    ) -> Result<(Vec<Mat>, Vec<Mat>)> {
        let provider = self
            .provider
            .as_ref()
            .ok_or_else(|| Error::Invalid("no soft-target provider checkpointed".into()))?;
        let xs = assemble_inputs(samples, task_onehot)?;
        let run = forward_eval(arch, provider, &xs, opts)?;
        let (_, ws) = assemble_targets(samples)?;
        let soft = run.logits.iter().map(|z| z.map(sigmoid)).collect();
        Ok((soft, ws))
    }
}

/// `λ_distill ·` recall-weighted BCE of current logits against soft
/// targets, mean over the replay minibatch.
pub fn distill_loss_on_tape(
    tape: &mut Tape,
    logits: &[Var],
    soft: &[Mat],
    ws: &[Mat],
    lambda: f64,
) -> Result<Var> {
    let base = seq_bce_loss(tape, logits, soft, ws)?;
    Ok(tape.scale(base, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_task_suite, CopyConfig, Variant};
    use crate::model::{forward_tape, leaves_from, RnnKind};
    use crate::rng::substream;

    fn setup() -> (RnnArch, ParamVector, TaskSpec) {
        let cfg = CopyConfig { variant: Variant::Basic, p: 2, i: 2, f_in: 4, r: 0 };
        let suite = make_task_suite(cfg, 1, 11).unwrap();
        let arch = RnnArch { kind: RnnKind::Vanilla, n_in: 4, n_h: 6, f_out: 3, n_heads: 1, n_z: 0 };
        let mut rng = substream(11, "init", 0);
        let params = arch.init_params(true, &mut rng).unwrap();
        (arch, params, suite.into_iter().next().unwrap())
    }

    #[test]
    fn same_seed_stores_same_subset() {
        let (_, _, spec) = setup();
        let mut a = Coreset::new(5, 1.0).unwrap();
        let mut b = Coreset::new(5, 1.0).unwrap();
        a.store_task(&spec, 77).unwrap();
        b.store_task(&spec, 77).unwrap();
        for (sa, sb) in a.stored[0].iter().zip(&b.stored[0]) {
            assert_eq!(sa.x.data, sb.x.data);
        }
        // Double-store is a bug, not an overwrite.
        assert!(a.store_task(&spec, 77).is_err());
    }

    #[test]
    fn distill_gradient_is_exactly_zero_at_the_provider() {
        // Current params identical to the provider: σ(z) equals the target
        // bit for bit, so every gradient vanishes exactly.
        let (arch, params, spec) = setup();
        let mut cs = Coreset::new(6, 1.0).unwrap();
        cs.store_task(&spec, 3).unwrap();
        cs.refresh_provider(&params);
        let mut rng = substream(4, "replay", 0);
        let batch = cs.replay_batch(0, 4, &mut rng).unwrap();
        let (soft, ws) = cs.soft_targets(&arch, &batch, ForwardOpts::default(), None).unwrap();

        let xs = assemble_inputs(&batch, None).unwrap();
        let mut tape = Tape::new();
        let views = leaves_from(&mut tape, &params);
        let run = forward_tape(&mut tape, &arch, &views, &xs, ForwardOpts::default()).unwrap();
        let loss = distill_loss_on_tape(&mut tape, &run.logits, &soft, &ws, 1.0).unwrap();
        let grads = tape.backward(loss).unwrap();
        for &v in &views {
            if let Some(g) = grads.wrt(v) {
                assert!(g.iter().all(|&x| x == 0.0), "nonzero distill grad at provider");
            }
        }
    }

    #[test]
    fn uniform_soft_target_closed_form() {
        // Target 0.5 against logit 0 → ln 2 per weighted position.
        let mut tape = Tape::new();
        let z = tape.leaf(Mat::zeros(2, 3)); // 2 features, batch 3
        let soft = vec![Mat::filled(2, 3, 0.5)];
        let w = vec![Mat::filled(2, 3, 1.0)];
        let loss = distill_loss_on_tape(&mut tape, &[z], &soft, &w, 1.0).unwrap();
        // 2 positions per sample, mean over batch: 2 ln 2.
        assert!((tape.scalar(loss).unwrap() - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let zero = distill_loss_on_tape(&mut tape, &[z], &soft, &w, 0.0).unwrap();
        assert_eq!(tape.scalar(zero).unwrap(), 0.0);
    }

    #[test]
    fn provider_is_a_snapshot() {
        let (_, mut params, spec) = setup();
        let mut cs = Coreset::new(3, 1.0).unwrap();
        cs.store_task(&spec, 5).unwrap();
        cs.refresh_provider(&params);
        let before = cs.provider.as_ref().unwrap().data.clone();
        params.data[0] += 1.0; // "training" moves on
        assert_eq!(cs.provider.as_ref().unwrap().data, before);
    }

    #[test]
    fn replay_without_storage_is_an_error() {
        let cs = Coreset::new(3, 1.0).unwrap();
        let mut rng = substream(1, "replay", 0);
        assert!(cs.replay_batch(0, 2, &mut rng).is_err());
    }
}
