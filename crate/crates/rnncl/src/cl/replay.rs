//! Generative replay through a sequential VAE. The main network doubles as
//! the encoder — its latent readout emits a per-timestep posterior
//! `N(μ_t, diag σ_t²)` — while a separate recurrent decoder maps
//! `(z_t, task one-hot)` back to input-feature likelihoods.
//!
//! At a task boundary both the main network and the decoder are frozen;
//! during the next task those copies hallucinate sequences of the old tasks
//! (`z_t ~ N(0, I)` through the frozen decoder), which join the real batch
//! for reconstruction and prior-matching, and carry distillation targets
//! from the frozen main network.

use crate::data::{recall_weights, Sample, TaskSpec};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::model::{forward_eval, ForwardOpts, RnnArch, RnnKind};
use crate::params::ParamVector;
use crate::rng::normal;
use crate::tape::{sigmoid, Tape, Var};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Likelihood {
    Bernoulli,
    Gaussian { tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayConfig {
    /// Latent dimension per timestep.
    pub n_z: usize,
    /// Decoder hidden width.
    pub dec_n_h: usize,
    pub lambda_rec: f64,
    pub lambda_pm: f64,
    pub lambda_distill: f64,
    pub likelihood: Likelihood,
    /// Replay emission: sample Bernoulli bits (true) or threshold at 0.5.
    pub sample_bits: bool,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            n_z: 8,
            dec_n_h: 64,
            lambda_rec: 1.0,
            lambda_pm: 1.0,
            lambda_distill: 1.0,
            likelihood: Likelihood::Bernoulli,
            sample_bits: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayState {
    pub cfg: ReplayConfig,
    pub dec_arch: RnnArch,
    pub decoder: ParamVector,
    /// Frozen copies from the last boundary; replay and distillation read
    /// only these.
    pub frozen_main: Option<ParamVector>,
    pub frozen_decoder: Option<ParamVector>,
    pub k_tasks: usize,
}

impl ReplayState {
    pub fn new(
        cfg: ReplayConfig,
        f_in: usize,
        k_tasks: usize,
        orth_init: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if cfg.n_z == 0 || cfg.dec_n_h == 0 {
            return Err(Error::Config("replay needs positive n_z and decoder width".into()));
        }
        let dec_arch = RnnArch {
            kind: RnnKind::Vanilla,
            n_in: cfg.n_z + k_tasks,
            n_h: cfg.dec_n_h,
            f_out: f_in,
            n_heads: 1,
            n_z: 0,
        };
        let decoder = dec_arch.init_params(orth_init, rng)?;
        Ok(ReplayState { cfg, dec_arch, decoder, frozen_main: None, frozen_decoder: None, k_tasks })
    }

    /// Task boundary: freeze deep copies of the current main network and
    /// decoder for the next task's replay.
    pub fn checkpoint(&mut self, main: &ParamVector) {
        self.frozen_main = Some(main.clone());
        self.frozen_decoder = Some(self.decoder.clone());
    }

    /// Decoder input for one timestep: latent stacked on the task one-hot.
    fn decoder_input(&self, z_col: &[f64], task: usize, out: &mut Mat, col: usize) {
        for (i, &v) in z_col.iter().enumerate() {
            *out.at_mut(i, col) = v;
        }
        *out.at_mut(self.cfg.n_z + task, col) = 1.0;
    }

    /// Hallucinate `count` sequences of the given task shape from the
    /// frozen decoder. Content comes out however the decoder makes it —
    /// stop bits and all; nothing is repaired. Targets are left zero; the
    /// loss weights are the task's usual recall window.
    pub fn replay_group(
        &self,
        spec: &TaskSpec,
        count: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<Sample>> {
        let dec = self
            .frozen_decoder
            .as_ref()
            .ok_or_else(|| Error::Invalid("replay before any checkpoint".into()))?;
        if count == 0 {
            return Ok(Vec::new());
        }
        let t_len = spec.cfg.t_len();
        let f_in = spec.cfg.f_in;
        if self.dec_arch.f_out != f_in {
            return Err(Error::Shape(format!(
                "decoder emits {} features, task has {}",
                self.dec_arch.f_out, f_in
            )));
        }
        // Latents for every step and sequence up front, then one batched
        // decoder pass.
        let mut xs = Vec::with_capacity(t_len);
        for _ in 0..t_len {
            let mut m = Mat::zeros(self.dec_arch.n_in, count);
            for c in 0..count {
                let z: Vec<f64> = (0..self.cfg.n_z).map(|_| normal(rng)).collect();
                self.decoder_input(&z, spec.task_id, &mut m, c);
            }
            xs.push(m);
        }
        let run = forward_eval(&self.dec_arch, dec, &xs, ForwardOpts::default())?;
        let w = recall_weights(&spec.cfg);
        let mut out = Vec::with_capacity(count);
        for c in 0..count {
            let mut x = Mat::zeros(t_len, f_in);
            for (t, logit) in run.logits.iter().enumerate() {
                for f in 0..f_in {
                    let raw = logit.at(f, c);
                    let v = match self.cfg.likelihood {
                        Likelihood::Gaussian { .. } => raw,
                        Likelihood::Bernoulli => {
                            let p = sigmoid(raw);
                            let bit = if self.cfg.sample_bits {
                                rng.gen::<f64>() < p
                            } else {
                                p >= 0.5
                            };
                            if bit {
                                1.0
                            } else {
                                0.0
                            }
                        }
                    };
                    *x.at_mut(t, f) = v;
                }
            }
            out.push(Sample {
                x,
                y: Mat::zeros(t_len, spec.cfg.f_out()),
                w: w.clone(),
            });
        }
        Ok(out)
    }

    /// Split a replay batch of `b_total` across tasks `0..current`, counts
    /// differing by at most one (earlier tasks get the remainder).
    pub fn replay_counts(&self, current: usize, b_total: usize) -> Vec<usize> {
        if current == 0 {
            return Vec::new();
        }
        let base = b_total / current;
        let extra = b_total % current;
        (0..current).map(|k| base + usize::from(k < extra)).collect()
    }

    /// Unroll the decoder on tape-node inputs (training path); inputs must
    /// already be `(n_z + K) x B` nodes per step.
    pub fn decoder_forward_on_tape(
        &self,
        tape: &mut Tape,
        dec_views: &[Var],
        xs: &[Var],
    ) -> Result<Vec<Var>> {
        let run = crate::model::forward_tape_vars(
            tape,
            &self.dec_arch,
            dec_views,
            xs,
            ForwardOpts::default(),
        )?;
        Ok(run.logits)
    }
}

// ── loss pieces ──────────────────────────────────────────────────────────

/// `z = μ + exp(lv/2) ⊙ ε` with fixed noise ε (the single MC sample).
pub fn reparameterize(tape: &mut Tape, mu: Var, logvar: Var, eps: &Mat) -> Result<Var> {
    if tape.shape(mu) != eps.shape() || tape.shape(logvar) != eps.shape() {
        return Err(Error::Shape(format!(
            "reparameterize: mu {:?}, logvar {:?}, eps {:?}",
            tape.shape(mu),
            tape.shape(logvar),
            eps.shape()
        )));
    }
    let half = tape.scale(logvar, 0.5);
    let sd = tape.exp(half);
    let e = tape.leaf(eps.clone());
    let noise = tape.mul_elem(sd, e)?;
    tape.add(mu, noise)
}

/// `Σ_t KL(N(μ_t, diag σ_t²) ‖ N(0, I))`, mean over the batch:
/// `(1/2B)(Σ μ² + Σ e^lv − Σ lv − d·T·B)`. Always ≥ 0.
pub fn prior_match_on_tape(tape: &mut Tape, mu: &[Var], logvar: &[Var]) -> Result<Var> {
    if mu.len() != logvar.len() || mu.is_empty() {
        return Err(Error::Shape(format!(
            "prior match over {} mu / {} logvar steps",
            mu.len(),
            logvar.len()
        )));
    }
    let (d, b) = tape.shape(mu[0]);
    let mut acc: Option<Var> = None;
    for (&m, &lv) in mu.iter().zip(logvar) {
        if tape.shape(m) != (d, b) || tape.shape(lv) != (d, b) {
            return Err(Error::Shape("prior match: mixed latent shapes".into()));
        }
        let msq = tape.sum_sq(m);
        let ev = tape.exp(lv);
        let sev = tape.sum(ev);
        let slv = tape.sum(lv);
        let a = tape.add(msq, sev)?;
        let term = tape.sub(a, slv)?;
        acc = Some(match acc {
            None => term,
            Some(p) => tape.add(p, term)?,
        });
    }
    let t_steps = mu.len();
    let shifted = tape.add_const(acc.expect("non-empty"), -((d * t_steps * b) as f64));
    Ok(tape.scale(shifted, 0.5 / b as f64))
}

/// Reconstruction loss of decoder outputs against the true inputs over all
/// timesteps and features, mean over the batch. Bernoulli decodes logits;
/// Gaussian treats outputs as means with precision τ.
pub fn recon_loss_on_tape(
    tape: &mut Tape,
    dec_out: &[Var],
    x: &[Mat],
    likelihood: Likelihood,
) -> Result<Var> {
    if dec_out.len() != x.len() || dec_out.is_empty() {
        return Err(Error::Shape(format!(
            "recon loss over {} output / {} input steps",
            dec_out.len(),
            x.len()
        )));
    }
    let (f, b) = tape.shape(dec_out[0]);
    let mut acc: Option<Var> = None;
    for (&o, xt) in dec_out.iter().zip(x) {
        if xt.shape() != (f, b) {
            return Err(Error::Shape(format!(
                "recon loss: input step {:?} vs output {:?}",
                xt.shape(),
                (f, b)
            )));
        }
        let term = match likelihood {
            Likelihood::Bernoulli => {
                let ones = Mat::filled(f, b, 1.0);
                tape.bce_with_logits(o, xt, &ones)?
            }
            Likelihood::Gaussian { .. } => {
                let target = tape.leaf(xt.clone());
                let d = tape.sub(o, target)?;
                tape.sum_sq(d)
            }
        };
        acc = Some(match acc {
            None => term,
            Some(p) => tape.add(p, term)?,
        });
    }
    let total = acc.expect("non-empty");
    let scale = match likelihood {
        Likelihood::Bernoulli => 1.0 / b as f64,
        Likelihood::Gaussian { tau } => tau / (2.0 * b as f64),
    };
    Ok(tape.scale(total, scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_task_suite, CopyConfig, Variant};
    use crate::rng::substream;

    fn spec() -> TaskSpec {
        let cfg = CopyConfig { variant: Variant::Basic, p: 2, i: 2, f_in: 4, r: 0 };
        make_task_suite(cfg, 2, 5).unwrap().into_iter().next().unwrap()
    }

    fn state(seed: u64) -> ReplayState {
        let mut rng = substream(seed, "init", 1);
        ReplayState::new(ReplayConfig { dec_n_h: 8, ..Default::default() }, 4, 2, true, &mut rng)
            .unwrap()
    }

    #[test]
    fn prior_match_closed_forms() {
        // Standard normal posterior: exactly zero.
        let mut tape = Tape::new();
        let mu = tape.leaf(Mat::zeros(3, 2));
        let lv = tape.leaf(Mat::zeros(3, 2));
        let pm = prior_match_on_tape(&mut tape, &[mu], &[lv]).unwrap();
        assert!(tape.scalar(pm).unwrap().abs() < 1e-15);

        // μ = 1, σ = 1, one dim, one step, one sample → 1/2.
        let mut tape = Tape::new();
        let mu = tape.leaf(Mat::filled(1, 1, 1.0));
        let lv = tape.leaf(Mat::zeros(1, 1));
        let pm = prior_match_on_tape(&mut tape, &[mu], &[lv]).unwrap();
        assert!((tape.scalar(pm).unwrap() - 0.5).abs() < 1e-15);

        // Linear in T for repeated posteriors.
        let mut tape = Tape::new();
        let mu = tape.leaf(Mat::filled(1, 1, 1.0));
        let lv = tape.leaf(Mat::zeros(1, 1));
        let pm3 = prior_match_on_tape(&mut tape, &[mu, mu, mu], &[lv, lv, lv]).unwrap();
        assert!((tape.scalar(pm3).unwrap() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn recon_loss_closed_forms() {
        // Gaussian with outputs equal to inputs: zero.
        let mut tape = Tape::new();
        let x = Mat::from_vec(2, 1, vec![0.3, -0.7]).unwrap();
        let o = tape.leaf(x.clone());
        let r = recon_loss_on_tape(&mut tape, &[o], &[x.clone()], Likelihood::Gaussian { tau: 2.0 })
            .unwrap();
        assert_eq!(tape.scalar(r).unwrap(), 0.0);

        // Bernoulli, one bit, logit 0: ln 2.
        let mut tape = Tape::new();
        let o = tape.leaf(Mat::zeros(1, 1));
        let x = Mat::filled(1, 1, 1.0);
        let r = recon_loss_on_tape(&mut tape, &[o], &[x], Likelihood::Bernoulli).unwrap();
        assert!((tape.scalar(r).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);

        // Doubling τ doubles the Gaussian loss.
        let mut tape = Tape::new();
        let o = tape.leaf(Mat::zeros(1, 1));
        let x = Mat::filled(1, 1, 2.0);
        let r1 = recon_loss_on_tape(&mut tape, &[o], &[x.clone()], Likelihood::Gaussian { tau: 1.0 })
            .unwrap();
        let r2 =
            recon_loss_on_tape(&mut tape, &[o], &[x], Likelihood::Gaussian { tau: 2.0 }).unwrap();
        assert!((2.0 * tape.scalar(r1).unwrap() - tape.scalar(r2).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn reparameterized_gradient_matches_finite_differences() {
        // Fixed noise, objective ‖z‖²; checked wrt both μ and log-variance.
        let eps = Mat::from_vec(2, 1, vec![0.5, -1.25]).unwrap();
        let base = vec![0.3, -0.4, 0.2, -0.1]; // [mu; logvar]
        let eval = |p: &[f64]| -> crate::error::Result<f64> {
            let mut t = Tape::new();
            let mu = t.leaf(Mat::from_vec(2, 1, p[..2].to_vec()).unwrap());
            let lv = t.leaf(Mat::from_vec(2, 1, p[2..].to_vec()).unwrap());
            let z = reparameterize(&mut t, mu, lv, &eps)?;
            let obj = t.sum_sq(z);
            t.scalar(obj)
        };
        let mut t = Tape::new();
        let mu = t.leaf(Mat::from_vec(2, 1, base[..2].to_vec()).unwrap());
        let lv = t.leaf(Mat::from_vec(2, 1, base[2..].to_vec()).unwrap());
        let z = reparameterize(&mut t, mu, lv, &eps).unwrap();
        let obj = t.sum_sq(z);
        let g = t.backward(obj).unwrap();
        let mut analytic = g.wrt_or_zeros(mu, 2);
        analytic.extend(g.wrt_or_zeros(lv, 2));
        let score = crate::fdcheck::finite_diff_check(eval, &base, 1e-6, &analytic).unwrap();
        assert!(score < 1e-7, "fd score {}", score);
    }

    #[test]
    fn replay_is_deterministic_and_shaped() {
        let mut st = state(3);
        st.checkpoint(&st.decoder.clone()); // any params; only decoder matters
        let s = spec();
        let a = st.replay_group(&s, 3, &mut substream(9, "replay", 0)).unwrap();
        let b = st.replay_group(&s, 3, &mut substream(9, "replay", 0)).unwrap();
        assert_eq!(a.len(), 3);
        for (sa, sb) in a.iter().zip(&b) {
            assert_eq!(sa.x.shape(), (s.cfg.t_len(), s.cfg.f_in));
            assert_eq!(sa.x.data, sb.x.data);
            // Bernoulli replay emits bits.
            assert!(sa.x.data.iter().all(|&v| v == 0.0 || v == 1.0));
            // Weights are the task's recall window.
            assert_eq!(sa.w.data, recall_weights(&s.cfg).data);
        }
    }

    #[test]
    fn zero_decoder_gaussian_replays_zeros() {
        let mut st = state(4);
        st.cfg.likelihood = Likelihood::Gaussian { tau: 1.0 };
        st.decoder = ParamVector::zeros(st.dec_arch.layout());
        st.checkpoint(&st.decoder.clone());
        let s = spec();
        let out = st.replay_group(&s, 2, &mut substream(1, "replay", 0)).unwrap();
        for smp in out {
            assert!(smp.x.data.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn replay_before_checkpoint_is_an_error() {
        let st = state(5);
        assert!(st.replay_group(&spec(), 2, &mut substream(1, "replay", 0)).is_err());
    }

    #[test]
    fn replay_counts_split_evenly() {
        let st = state(6);
        assert_eq!(st.replay_counts(0, 64), Vec::<usize>::new());
        assert_eq!(st.replay_counts(1, 64), vec![64]);
        assert_eq!(st.replay_counts(3, 64), vec![22, 21, 21]);
        let c = st.replay_counts(3, 64);
        assert_eq!(c.iter().sum::<usize>(), 64);
        assert!(c.iter().max().unwrap() - c.iter().min().unwrap() <= 1);
    }
}
