//! Bias-corrected Adam, applied in place to named parameter buffers.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Moments {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

/// Optimizer state for one parameter set: per-name moment buffers plus the
/// shared step counter used for bias correction.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub step: u64,
    pub slots: BTreeMap<String, Moments>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One named parameter with its gradient for an `adam_step` call.
pub struct AdamEntry<'a> {
    pub name: &'a str,
    pub param: &'a mut [f32],
    pub grad: &'a [f32],
}

/// Applies one bias-corrected Adam update to every entry and increments the
/// step counter. Moment buffers are created lazily on first use.
pub fn adam_step(entries: &mut [AdamEntry<'_>], state: &mut AdamState, h: &AdamHyper) -> Result<()> {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - h.beta1.powi(t);
    let bc2 = 1.0 - h.beta2.powi(t);
    for e in entries.iter_mut() {
        if e.grad.len() != e.param.len() {
            return Err(Error::DimMismatch {
                op: "adam_step",
                axis: "numel",
                expected: e.param.len(),
                actual: e.grad.len(),
            });
        }
        let slot = state.slots.entry(e.name.to_string()).or_insert_with(|| Moments {
            m: vec![0.0; e.param.len()],
            v: vec![0.0; e.param.len()],
        });
        if slot.m.len() != e.param.len() {
            return Err(Error::DimMismatch {
                op: "adam_step",
                axis: "numel",
                expected: e.param.len(),
                actual: slot.m.len(),
            });
        }
        for (((p, &g), m), v) in e
            .param
            .iter_mut()
            .zip(e.grad)
            .zip(slot.m.iter_mut())
            .zip(slot.v.iter_mut())
        {
            *m = h.beta1 * *m + (1.0 - h.beta1) * g;
            *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= h.lr * m_hat / (v_hat.sqrt() + h.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_once(param: &mut [f32], grad: &[f32], state: &mut AdamState, h: &AdamHyper) {
        let mut entries = [AdamEntry {
            name: "p",
            param,
            grad,
        }];
        adam_step(&mut entries, state, h).unwrap();
    }

    #[test]
    fn unit_gradient_moves_by_lr_on_fresh_state() {
        // bias correction makes m_hat = v_hat = 1 after the first step,
        // so the update is -lr / (1 + eps)
        let h = AdamHyper::default();
        let mut p = [0.0f32];
        let mut state = AdamState::new();
        step_once(&mut p, &[1.0], &mut state, &h);
        let expected = -h.lr / (1.0 + h.eps);
        assert!((p[0] - expected).abs() < 1e-10, "got {}", p[0]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let h = AdamHyper::default();
        let mut p = [0.7f32, -0.3];
        let mut state = AdamState::new();
        step_once(&mut p, &[0.0, 0.0], &mut state, &h);
        assert_eq!(p, [0.7, -0.3]);
    }

    #[test]
    fn constant_gradient_moves_monotonically_against_its_sign() {
        let h = AdamHyper::default();
        let mut p = [1.0f32];
        let mut state = AdamState::new();
        let mut prev = p[0];
        for _ in 0..2 {
            step_once(&mut p, &[2.5], &mut state, &h);
            assert!(p[0] < prev);
            prev = p[0];
        }
        // closed form for two steps with constant g: both steps give
        // m_hat = g, v_hat = g^2 -> each update is -lr * g/(|g| + eps)
        let per_step = h.lr * 2.5 / (2.5 + h.eps);
        assert!((p[0] - (1.0 - 2.0 * per_step)).abs() < 1e-6);
    }

    #[test]
    fn grad_length_mismatch_is_error() {
        let h = AdamHyper::default();
        let mut p = [0.0f32; 3];
        let mut state = AdamState::new();
        let mut entries = [AdamEntry {
            name: "p",
            param: &mut p,
            grad: &[1.0; 2],
        }];
        assert!(adam_step(&mut entries, &mut state, &h).is_err());
    }
}
