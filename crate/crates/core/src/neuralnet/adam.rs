use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one entry per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Steps taken so far.
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update at step `t` (1-based).
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    t: u64,
    hyper: &AdamHyper,
) -> Result<()> {
    if t == 0 {
        return Err(Error::Config("adam step index starts at 1".into()));
    }
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len()
    {
        return Err(Error::LengthMismatch(params.len(), grads.len()));
    }
    let AdamHyper {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = *hyper;
    let step_size = learning_rate / (1.0 - beta1.powi(t as i32));
    let inv_correction2 = 1.0 / (1.0 - beta2.powi(t as i32));
    let coefficients = [beta1, beta2, step_size, inv_correction2, epsilon];
    #[cfg(target_arch = "x86_64")]
    let finite = if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2, checked above.
        unsafe { update_avx2(params, grads, state, coefficients) }
    } else {
        update(params, grads, state, coefficients)
    };
    #[cfg(not(target_arch = "x86_64"))]
    let finite = update(params, grads, state, coefficients);
    if !finite {
        return Err(Error::NumericalDivergence {
            layer: "adam update".into(),
        });
    }
    state.t = t;
    Ok(())
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn update_avx2(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    coefficients: [f64; 5],
) -> bool {
    update(params, grads, state, coefficients)
}

/// Moment and parameter update; false if any step came out non-finite.
#[inline(always)]
fn update(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    coefficients: [f64; 5],
) -> bool {
    let [beta1, beta2, step_size, inv_correction2, epsilon] = coefficients;
    let mut finite = true;
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let delta = step_size * *m / ((*v * inv_correction2).sqrt() + epsilon);
        finite &= delta.is_finite();
        *p -= delta;
    }
    finite
}
