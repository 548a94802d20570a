//! Online EWC: after each task, accumulate a diagonal empirical Fisher
//! estimate of how much each shared weight mattered, anchor the weights,
//! and charge later tasks `λ Σ F_ii (ψ_i − ψ̃_i)²` for moving them.

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::model::{assemble_inputs, assemble_targets, forward_tape, leaves_from, seq_bce_loss, ForwardOpts, RnnArch};
use crate::params::{Layout, ParamVector};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone)]
pub struct EwcState {
    /// Accumulated diagonal Fisher `Σ_k F^{(k)}` over the shared prefix.
    pub fisher: Vec<f64>,
    /// Anchor ψ̃: shared prefix at the last consolidation.
    pub anchor: Vec<f64>,
    pub lambda: f64,
    /// False until the first consolidation; the penalty is zero before.
    pub consolidated: bool,
}

impl EwcState {
    pub fn new(shared_len: usize, lambda: f64) -> Self {
        EwcState {
            fisher: vec![0.0; shared_len],
            anchor: vec![0.0; shared_len],
            lambda,
            consolidated: false,
        }
    }

    /// Add a task's Fisher estimate and move the anchor to the current
    /// parameters.
    pub fn consolidate(&mut self, fisher_task: &[f64], params: &ParamVector) -> Result<()> {
        if fisher_task.len() != self.fisher.len() {
            return Err(Error::Shape(format!(
                "fisher of {} into state of {}",
                fisher_task.len(),
                self.fisher.len()
            )));
        }
        if fisher_task.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::NonFinite("fisher entries must be finite and >= 0".into()));
        }
        for (f, &a) in self.fisher.iter_mut().zip(fisher_task) {
            *f += a;
        }
        let shared = self.anchor.len();
        self.anchor.copy_from_slice(&params.data[..shared]);
        self.consolidated = true;
        Ok(())
    }

    /// `λ Σ F_ii (ψ_i − ψ̃_i)²` as a tape node (zero before the first
    /// consolidation).
    pub fn penalty_on_tape(&self, tape: &mut Tape, views: &[Var], layout: &Layout) -> Result<Var> {
        if !self.consolidated {
            return Ok(tape.leaf(crate::mat::Mat::zeros(1, 1)));
        }
        super::quadratic_penalty(tape, views, layout, &self.anchor, &self.fisher, self.lambda)
    }

    /// Plain evaluation of the penalty (for logging).
    pub fn penalty_value(&self, params: &ParamVector) -> f64 {
        if !self.consolidated {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..self.anchor.len() {
            let d = params.data[i] - self.anchor[i];
            acc += self.fisher[i] * d * d;
        }
        self.lambda * acc
    }
}

/// Diagonal empirical Fisher of the shared prefix: mean over samples of the
/// squared per-sample NLL gradient, labels taken from the data (not the
/// model). The per-sample NLL is the recall-weighted BCE of that sample.
pub fn empirical_fisher(
    arch: &RnnArch,
    params: &ParamVector,
    samples: &[Sample],
    opts: ForwardOpts,
    task_onehot: Option<(usize, usize)>,
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Invalid("empirical_fisher over zero samples".into()));
    }
    let layout = &params.layout;
    let shared = layout.shared_len();
    let mut fisher = vec![0.0; shared];
    for s in samples {
        let one = std::slice::from_ref(s);
        let xs = assemble_inputs(one, task_onehot)?;
        let (ys, ws) = assemble_targets(one)?;
        let mut tape = Tape::new();
        let views = leaves_from(&mut tape, params);
        let run = forward_tape(&mut tape, arch, &views, &xs, opts)?;
        let nll = seq_bce_loss(&mut tape, &run.logits, &ys, &ws)?;
        let grads = tape.backward(nll)?;
        for i in 0..layout.shared_view_count() {
            let off = layout.offset(i);
            if let Some(g) = grads.wrt(views[i]) {
                for (j, &gj) in g.iter().enumerate() {
                    fisher[off + j] += gj * gj;
                }
            }
        }
    }
    let n = samples.len() as f64;
    for f in fisher.iter_mut() {
        *f /= n;
    }
    Ok(fisher)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::Mat;
    use crate::model::RnnKind;
    use crate::rng::substream;
    use crate::tape::sigmoid;

    fn unit_arch() -> RnnArch {
        RnnArch { kind: RnnKind::Vanilla, n_in: 1, n_h: 1, f_out: 1, n_heads: 1, n_z: 0 }
    }

    fn one_step_sample(x: f64, y: f64) -> Sample {
        Sample {
            x: Mat::from_vec(1, 1, vec![x]).unwrap(),
            y: Mat::from_vec(1, 1, vec![y]).unwrap(),
            w: Mat::from_vec(1, 1, vec![1.0]).unwrap(),
        }
    }

    #[test]
    fn zero_head_means_zero_shared_fisher() {
        // With head weights zero, no NLL gradient reaches the shared
        // prefix, so F vanishes there even though the head bias gradient
        // does not.
        let arch = unit_arch();
        let params = ParamVector::zeros(arch.layout());
        let samples = vec![one_step_sample(1.0, 1.0), one_step_sample(0.0, 0.0)];
        let f = empirical_fisher(&arch, &params, &samples, ForwardOpts::default(), None).unwrap();
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_bernoulli_fisher_matches_hand_oracle() {
        // One unit end to end: h = tanh(w_xh x + b_h), lo = w_ro h + b_ro,
        // z = head_w lo + head_b, F = (σ(z) − y)² (∂z/∂ψ)².
        let arch = unit_arch();
        let mut params = ParamVector::zeros(arch.layout());
        let set = |p: &mut ParamVector, name: &str, v: f64| {
            let i = p.layout.index_of(name).unwrap();
            p.view_mut(i)[0] = v;
        };
        let (w_xh, b_h, w_ro, b_ro, head_w, head_b) = (0.7, 0.1, 1.2, -0.3, 0.9, 0.2);
        set(&mut params, "w_xh", w_xh);
        set(&mut params, "b_h", b_h);
        set(&mut params, "w_ro", w_ro);
        set(&mut params, "b_ro", b_ro);
        set(&mut params, "head_w_0", head_w);
        set(&mut params, "head_b_0", head_b);

        let (x, y) = (0.8, 1.0);
        let f = empirical_fisher(
            &arch,
            &params,
            &[one_step_sample(x, y)],
            ForwardOpts::default(),
            None,
        )
        .unwrap();

        let h = (w_xh * x + b_h).tanh();
        let z = head_w * (w_ro * h + b_ro) + head_b;
        let g_z = sigmoid(z) - y;
        let dz_dwxh = head_w * w_ro * (1.0 - h * h) * x;
        let dz_dwro = head_w * h;
        let layout = params.layout.clone();
        let fi = |name: &str| f[layout.offset(layout.index_of(name).unwrap())];
        assert!((fi("w_xh") - (g_z * dz_dwxh).powi(2)).abs() < 1e-10);
        assert!((fi("w_ro") - (g_z * dz_dwro).powi(2)).abs() < 1e-10);
        // w_hh multiplies h_{-1} = 0, so no information flows through it.
        assert_eq!(fi("w_hh"), 0.0);
    }

    #[test]
    fn accumulating_same_task_twice_doubles_fisher() {
        let arch = unit_arch();
        let mut rng = substream(5, "init", 0);
        let params = arch.init_params(false, &mut rng).unwrap();
        let samples = vec![one_step_sample(0.3, 1.0), one_step_sample(-0.5, 0.0)];
        let f = empirical_fisher(&arch, &params, &samples, ForwardOpts::default(), None).unwrap();
        let mut st = EwcState::new(params.layout.shared_len(), 1.0);
        st.consolidate(&f, &params).unwrap();
        st.consolidate(&f, &params).unwrap();
        for (acc, single) in st.fisher.iter().zip(&f) {
            assert!((acc - 2.0 * single).abs() < 1e-15);
        }
    }

    #[test]
    fn penalty_closed_forms() {
        let arch = unit_arch();
        let params = ParamVector::zeros(arch.layout());
        let shared = params.layout.shared_len();

        // Before consolidation: zero.
        let st = EwcState::new(shared, 3.0);
        assert_eq!(st.penalty_value(&params), 0.0);

        // At the anchor: zero. F ≡ 0: zero.
        let mut st = EwcState::new(shared, 1.0);
        st.consolidate(&vec![0.0; shared], &params).unwrap();
        assert_eq!(st.penalty_value(&params), 0.0);

        // One entry: F = 2, Δ = 0.5, λ = 1 → 1·2·0.25 = 0.5.
        let mut st = EwcState::new(shared, 1.0);
        let mut fisher = vec![0.0; shared];
        fisher[0] = 2.0;
        st.consolidate(&fisher, &params).unwrap();
        let mut moved = params.clone();
        moved.data[0] = 0.5;
        assert!((st.penalty_value(&moved) - 0.5).abs() < 1e-15);

        // Tape and plain evaluation agree.
        let mut tape = Tape::new();
        let views = leaves_from(&mut tape, &moved);
        let p = st.penalty_on_tape(&mut tape, &views, &moved.layout).unwrap();
        assert_eq!(tape.scalar(p).unwrap(), st.penalty_value(&moved));
    }

    #[test]
    fn negative_fisher_rejected() {
        let mut st = EwcState::new(3, 1.0);
        let params = ParamVector::zeros(unit_arch().layout());
        assert!(st.consolidate(&[0.0, -1.0, 0.0], &params).is_err());
    }
}
