//! Synaptic Intelligence: estimate per-weight importance online as minus
//! the path integral of (parameter update × task-loss gradient), then
//! charge later tasks a quadratic penalty weighted by the accumulated
//! importance.
//!
//! The tracked update Δψ(s) is the Adam step that the task loss *alone*
//! would take — peeked from the optimizer without being applied — so the
//! importance estimate is not polluted by the penalty's own gradient.
//!
//! Consolidation divides by the total per-parameter displacement plus a
//! damping ε. The default divides by the raw displacement exactly as the
//! update rule is usually printed for this lab's family of experiments;
//! `squared_denom` switches to the original squared-displacement form,
//! which in exchange guarantees Ω never decreases.

use crate::error::{Error, Result};
use crate::params::{Layout, ParamVector};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone)]
pub struct SiState {
    /// Running within-task importance ω̃ (can be negative until clamped).
    pub omega_run: Vec<f64>,
    /// Consolidated importance Ω.
    pub omega: Vec<f64>,
    /// Anchor ψ̃: shared prefix at the previous task's end.
    pub anchor: Vec<f64>,
    /// Shared prefix at the current task's start (consolidation reference).
    pub task_start: Vec<f64>,
    pub lambda: f64,
    pub eps: f64,
    pub squared_denom: bool,
    pub consolidated: bool,
}

impl SiState {
    pub fn new(params: &ParamVector, lambda: f64, eps: f64, squared_denom: bool) -> Self {
        let shared = params.layout.shared_len();
        let start = params.data[..shared].to_vec();
        SiState {
            omega_run: vec![0.0; shared],
            omega: vec![0.0; shared],
            anchor: start.clone(),
            task_start: start,
            lambda,
            eps,
            squared_denom,
            consolidated: false,
        }
    }

    /// One optimizer step's contribution: `ω̃_i ← ω̃_i − Δψ_i · g_i` with
    /// `g` the task-loss gradient and `Δψ` the (peeked) task-only update.
    pub fn track_step(&mut self, grad_task: &[f64], delta: &[f64]) -> Result<()> {
        if grad_task.len() < self.omega_run.len() || delta.len() < self.omega_run.len() {
            return Err(Error::Shape(format!(
                "track_step over shared prefix {}, got grad {} / delta {}",
                self.omega_run.len(),
                grad_task.len(),
                delta.len()
            )));
        }
        for (i, w) in self.omega_run.iter_mut().enumerate() {
            *w -= delta[i] * grad_task[i];
        }
        Ok(())
    }

    /// Task boundary: clamp negative ω̃ to zero, fold into Ω against the
    /// task's total displacement, reset the running estimate, and move both
    /// anchors to the current parameters.
    pub fn consolidate(&mut self, params: &ParamVector) -> Result<()> {
        let shared = self.omega_run.len();
        if params.layout.shared_len() != shared {
            return Err(Error::Shape("consolidate: layout changed under SI state".into()));
        }
        for i in 0..shared {
            let contrib = self.omega_run[i].max(0.0);
            let d = params.data[i] - self.task_start[i];
            let denom = if self.squared_denom { d * d + self.eps } else { d + self.eps };
            self.omega[i] += contrib / denom;
            self.omega_run[i] = 0.0;
        }
        self.task_start.copy_from_slice(&params.data[..shared]);
        self.anchor.copy_from_slice(&params.data[..shared]);
        self.consolidated = true;
        Ok(())
    }

    /// `λ Σ Ω_i (ψ_i − ψ̃_i)²` as a tape node (zero before the first
    /// consolidation).
    pub fn penalty_on_tape(&self, tape: &mut Tape, views: &[Var], layout: &Layout) -> Result<Var> {
        if !self.consolidated {
            return Ok(tape.leaf(crate::mat::Mat::zeros(1, 1)));
        }
        super::quadratic_penalty(tape, views, layout, &self.anchor, &self.omega, self.lambda)
    }

    pub fn penalty_value(&self, params: &ParamVector) -> f64 {
        if !self.consolidated {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..self.anchor.len() {
            let d = params.data[i] - self.anchor[i];
            acc += self.omega[i] * d * d;
        }
        self.lambda * acc
    }
}
