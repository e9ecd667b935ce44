use std::f64::consts::PI;

use super::params::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("gradient has {got} entries, parameter store has {want}")]
pub struct DimensionMismatch {
    pub want: usize,
    pub got: usize,
}

impl Adam {
    /// One bias-corrected Adam update. Clamps are not applied here.
    pub fn step(&self, params: &mut ParamStore, grads: &[f64], lr: f64) -> Result<(), DimensionMismatch> {
        let n = params.values.len();
        if grads.len() != n || params.adam.m.len() != n || params.adam.v.len() != n {
            return Err(DimensionMismatch { want: n, got: grads.len() });
        }
        let st = &mut params.adam;
        st.t += 1;
        let c1 = 1.0 - self.beta1.powi(st.t as i32);
        let c2 = 1.0 - self.beta2.powi(st.t as i32);
        for i in 0..n {
            let g = grads[i];
            st.m[i] = self.beta1 * st.m[i] + (1.0 - self.beta1) * g;
            st.v[i] = self.beta2 * st.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = st.m[i] / c1;
            let v_hat = st.v[i] / c2;
            params.values[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Cosine decay from `lr0` at step 0 to zero at `total_steps`.
pub fn cosine_lr(step: u64, total_steps: u64, lr0: f64) -> f64 {
    if total_steps == 0 {
        return lr0;
    }
    let frac = step.min(total_steps) as f64 / total_steps as f64;
    lr0 * 0.5 * (1.0 + (PI * frac).cos())
}
