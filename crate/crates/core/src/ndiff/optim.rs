use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndiff::tensor::Tensor;
use crate::scalar::Scalar;

/// Bias-corrected Adam without weight decay.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Tensor<T>]) -> Self {
        let zeros: Vec<Tensor<T>> = params
            .iter()
            .map(|p| Tensor::zeros(p.shape().to_vec()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update. `step` is only used to label a non-finite gradient.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    lr: f64,
    step: usize,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        p.check_same_shape(g)?;
        if !g.is_finite() {
            return Err(Error::NonFinite {
                step,
                what: format!("gradient of parameter tensor {i}"),
            });
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut())
        {
            let gf = gv.as_f64();
            let m_new = b1 * mv.as_f64() + (1.0 - b1) * gf;
            let v_new = b2 * vv.as_f64() + (1.0 - b2) * gf * gf;
            *mv = T::from_f64_lossy(m_new);
            *vv = T::from_f64_lossy(v_new);
            let m_hat = m_new / bc1;
            let v_hat = v_new / bc2;
            let update = lr * m_hat / (v_hat.sqrt() + state.eps);
            *pv = T::from_f64_lossy(pv.as_f64() - update);
        }
    }
    Ok(())
}

/// Power-law decay `lr(t) = lr0 / (1 + t / tau)` with `tau` chosen so that
/// `lr(total_steps) == lr_final`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr0: f64,
    pub lr_final: f64,
    pub total_steps: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            lr0: 3e-4,
            lr_final: 1e-4,
            total_steps: 1,
        }
    }
}

impl LrSchedule {
    pub fn new(lr0: f64, lr_final: f64, total_steps: usize) -> Result<Self> {
        if !(lr0 > 0.0 && lr_final > 0.0 && lr_final <= lr0) || total_steps == 0 {
            return Err(Error::InvalidArgument(format!(
                "learning-rate schedule needs 0 < lr_final <= lr0 and total_steps > 0 \
                 (got lr0={lr0}, lr_final={lr_final}, total_steps={total_steps})"
            )));
        }
        Ok(Self {
            lr0,
            lr_final,
            total_steps,
        })
    }

    pub fn tau(&self) -> f64 {
        self.total_steps as f64 / (self.lr0 / self.lr_final - 1.0)
    }

    /// Learning rate at step `t`, clamped to `[0, total_steps]`.
    pub fn lr_at(&self, t: usize) -> f64 {
        if t == 0 || self.lr0 == self.lr_final {
            return self.lr0;
        }
        if t >= self.total_steps {
            return self.lr_final;
        }
        self.lr0 / (1.0 + t as f64 / self.tau())
    }
}
