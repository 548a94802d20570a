//! Continual-learning protections, one submodule per family:
//!
//! * [`ewc`] — quadratic consolidation weighted by accumulated empirical
//!   Fisher information,
//! * [`si`] — the same quadratic form weighted by a path-integral
//!   importance tracked online during training,
//! * [`mask`] — per-task random binary gating of the hidden state,
//! * [`coreset`] — stored input sequences replayed with distillation
//!   targets from a frozen checkpoint,
//! * [`replay`] — generative replay through a sequential VAE whose encoder
//!   is the main network itself.
//!
//! The trivial baselines (fine-tuning, from-scratch, multitask) need no
//! state and live in the harness. Everything here operates on the shared
//! parameter prefix only: task heads are frozen at boundaries and excluded
//! from penalties and optimizer updates there instead.

pub mod coreset;
pub mod ewc;
pub mod mask;
pub mod replay;
pub mod si;

use crate::error::{Error, Result};
use crate::params::Layout;
use crate::tape::{Tape, Var};

/// `λ Σ_i w_i (ψ_i − a_i)²` over the shared view prefix, built view by
/// view on the tape. The workhorse behind both consolidation penalties.
pub(crate) fn quadratic_penalty(
    tape: &mut Tape,
    views: &[Var],
    layout: &Layout,
    anchor: &[f64],
    weights: &[f64],
    lambda: f64,
) -> Result<Var> {
    let shared = layout.shared_len();
    if anchor.len() != shared || weights.len() != shared {
        return Err(Error::Shape(format!(
            "penalty over shared prefix of {}, got anchor {} / weights {}",
            shared,
            anchor.len(),
            weights.len()
        )));
    }
    let mut total: Option<Var> = None;
    for i in 0..layout.shared_view_count() {
        let off = layout.offset(i);
        let len = layout.view_len(i);
        let term = tape.weighted_sq_diff(views[i], &anchor[off..off + len], &weights[off..off + len])?;
        total = Some(match total {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    let total = total.ok_or_else(|| Error::Invalid("layout has no shared views".into()))?;
    Ok(tape.scale(total, lambda))
}
