//! Adam with optional per-entry freezing, plus global-norm gradient
//! clipping. One `AdamState` covers one flat parameter vector; training
//! loops construct a fresh state per task so a finished task's momentum
//! can never leak movement into parameters whose gradients have gone to
//! zero (frozen heads, masked-out units).

use crate::error::{Error, Result};
use crate::params::ParamVector;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Default::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates and the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }
}

/// One Adam update in place. Entries where `trainable` is `false` are left
/// completely untouched — value, `m`, and `v` alike. A non-finite gradient
/// entry aborts before anything is modified, naming the view it fell in.
pub fn adam_step(
    params: &mut ParamVector,
    grad: &[f64],
    state: &mut AdamState,
    cfg: &AdamConfig,
    trainable: Option<&[bool]>,
) -> Result<()> {
    let n = params.len();
    if grad.len() != n || state.m.len() != n {
        return Err(Error::Shape(format!(
            "adam_step: {} params, {} grads, {} state",
            n,
            grad.len(),
            state.m.len()
        )));
    }
    if let Some(mask) = trainable {
        if mask.len() != n {
            return Err(Error::Shape(format!("adam_step: {} trainable flags for {} params", mask.len(), n)));
        }
    }
    if let Some(bad) = grad.iter().position(|g| !g.is_finite()) {
        let view = params
            .layout
            .view_of_index(bad)
            .map(|v| v.name.clone())
            .unwrap_or_else(|| "<out of layout>".into());
        return Err(Error::NonFinite(format!("gradient for view {:?} (flat index {})", view, bad)));
    }

    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for i in 0..n {
        if let Some(mask) = trainable {
            if !mask[i] {
                continue;
            }
        }
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params.data[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// The update Adam *would* take for `grad` over the first `upto` entries,
/// without touching the real state. Used by the path-integral importance
/// tracker, which needs the hypothetical task-loss-only step each
/// iteration.
pub fn adam_peek_delta(state: &AdamState, cfg: &AdamConfig, grad: &[f64], upto: usize) -> Vec<f64> {
    let t = state.t + 1;
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    let mut delta = Vec::with_capacity(upto);
    for i in 0..upto {
        let g = grad[i];
        let m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        delta.push(-cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps));
    }
    delta
}

/// Scale a set of gradient buffers so their joint Euclidean norm is at most
/// `max_norm` (`None` disables clipping). Returns the pre-clip norm.
pub fn clip_global_norm(parts: &mut [&mut [f64]], max_norm: Option<f64>) -> f64 {
    let sq: f64 = parts.iter().map(|p| p.iter().map(|x| x * x).sum::<f64>()).sum();
    let norm = sq.sqrt();
    if let Some(maxn) = max_norm {
        if norm > maxn && norm > 0.0 {
            let s = maxn / norm;
            for p in parts.iter_mut() {
                for x in p.iter_mut() {
                    *x *= s;
                }
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Layout, ViewSpec};

    fn single_param() -> ParamVector {
        let layout =
            Layout::new(vec![ViewSpec { name: "w".into(), rows: 1, cols: 1 }], 1).unwrap();
        ParamVector::zeros(layout)
    }

    #[test]
    fn first_step_matches_closed_form() {
        // Fresh state, g = 1, lr = 1e-3: bias-corrected m_hat = v_hat = 1,
        // so the step is -lr / (1 + eps).
        let mut p = single_param();
        let mut st = AdamState::new(1);
        let cfg = AdamConfig::default();
        adam_step(&mut p, &[1.0], &mut st, &cfg, None).unwrap();
        let expect = -1e-3 / (1.0 + 1e-8);
        assert!((p.data[0] - expect).abs() < 1e-18);
        assert!((p.data[0] + 9.9999999e-4).abs() < 1e-12);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn zero_gradient_with_fresh_state_moves_nothing() {
        let mut p = single_param();
        p.data[0] = 0.7;
        let mut st = AdamState::new(1);
        for _ in 0..5 {
            adam_step(&mut p, &[0.0], &mut st, &AdamConfig::default(), None).unwrap();
        }
        assert_eq!(p.data[0], 0.7);
    }

    #[test]
    fn frozen_entries_are_untouched_including_moments() {
        let layout = Layout::new(
            vec![
                ViewSpec { name: "shared".into(), rows: 1, cols: 2 },
                ViewSpec { name: "head_0".into(), rows: 1, cols: 1 },
            ],
            1,
        )
        .unwrap();
        let mut p = ParamVector::zeros(layout);
        p.data = vec![1.0, 2.0, 3.0];
        let mut st = AdamState::new(3);
        let trainable = vec![true, true, false];
        adam_step(&mut p, &[0.5, -0.5, 9.0], &mut st, &AdamConfig::default(), Some(&trainable))
            .unwrap();
        assert_ne!(p.data[0], 1.0);
        assert_ne!(p.data[1], 2.0);
        assert_eq!(p.data[2], 3.0);
        assert_eq!(st.m[2], 0.0);
        assert_eq!(st.v[2], 0.0);
    }

    #[test]
    fn non_finite_gradient_names_the_view() {
        let mut p = single_param();
        let mut st = AdamState::new(1);
        let err = adam_step(&mut p, &[f64::NAN], &mut st, &AdamConfig::default(), None)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("\"w\""), "message was: {}", msg);
        // Nothing moved.
        assert_eq!(p.data[0], 0.0);
        assert_eq!(st.t, 0);
    }

    #[test]
    fn peek_delta_matches_step_and_leaves_state_alone() {
        let mut p = single_param();
        p.data[0] = 0.25;
        let mut st = AdamState::new(1);
        let cfg = AdamConfig::with_lr(0.01);
        // Warm the state with a couple of real steps.
        adam_step(&mut p, &[0.3], &mut st, &cfg, None).unwrap();
        adam_step(&mut p, &[-0.1], &mut st, &cfg, None).unwrap();
        let snapshot = st.clone();
        let before = p.data[0];
        let delta = adam_peek_delta(&st, &cfg, &[0.2], 1);
        assert_eq!(st.m, snapshot.m);
        assert_eq!(st.v, snapshot.v);
        assert_eq!(st.t, snapshot.t);
        // Taking the real step now must land exactly where peek predicted.
        adam_step(&mut p, &[0.2], &mut st, &cfg, None).unwrap();
        assert!((p.data[0] - (before + delta[0])).abs() < 1e-18);
    }

    #[test]
    fn clip_oracle_and_idempotence() {
        let mut g = vec![3.0, 4.0];
        let norm = clip_global_norm(&mut [&mut g], Some(1.0));
        assert!((norm - 5.0).abs() < 1e-15);
        assert!((g[0] - 0.6).abs() < 1e-15);
        assert!((g[1] - 0.8).abs() < 1e-15);
        // Clipping again changes nothing (norm is now exactly <= 1).
        let again = clip_global_norm(&mut [&mut g], Some(1.0));
        assert!((again - 1.0).abs() < 1e-12);
        assert!((g[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn clip_none_and_below_threshold_are_identity() {
        let mut g = vec![3.0, 4.0];
        clip_global_norm(&mut [&mut g], None);
        assert_eq!(g, vec![3.0, 4.0]);
        clip_global_norm(&mut [&mut g], Some(100.0));
        assert_eq!(g, vec![3.0, 4.0]);
    }

    #[test]
    fn clip_spans_multiple_parts() {
        let mut a = vec![3.0];
        let mut b = vec![4.0];
        let norm = clip_global_norm(&mut [&mut a, &mut b], Some(2.5));
        assert!((norm - 5.0).abs() < 1e-15);
        assert!((a[0] - 1.5).abs() < 1e-15);
        assert!((b[0] - 2.0).abs() < 1e-15);
    }
}
