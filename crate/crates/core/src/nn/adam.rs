use super::{Matrix, ParamSet};
use crate::error::{Error, Result};

/// Adam optimizer state for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    step: u64,
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl AdamState {
    pub fn new<P: ParamSet>(params: &P, lr: f32) -> Self {
        let zeros: Vec<Matrix> = params
            .tensors()
            .iter()
            .map(|t| Matrix::zeros(t.rows(), t.cols()))
            .collect();
        AdamState {
            first: zeros.clone(),
            second: zeros,
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Moment accumulators, first then second; used for checkpointing.
    pub fn moments(&self) -> (&[Matrix], &[Matrix]) {
        (&self.first, &self.second)
    }

    /// Applies one bias-corrected update. Non-finite gradients reject the
    /// whole update and leave both parameters and state untouched.
    pub fn step<P: ParamSet>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let g = grads.tensors();
        let mut p = params.tensors_mut();
        if g.len() != self.first.len() || p.len() != self.first.len() {
            return Err(Error::dim("adam_step", self.first.len(), g.len()));
        }
        for ((pt, gt), mt) in p.iter().zip(&g).zip(&self.first) {
            pt.check_same_shape(gt, "adam_step")?;
            pt.check_same_shape(mt, "adam_step")?;
        }
        if !g.iter().all(|t| t.is_finite()) {
            return Err(Error::NonFinite("adam_step gradient"));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - (self.beta1 as f64).powi(t);
        let bc2 = 1.0 - (self.beta2 as f64).powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for (((pt, gt), mt), vt) in p
            .iter_mut()
            .zip(&g)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            for (((w, &gr), m), v) in pt
                .data_mut()
                .iter_mut()
                .zip(gt.data())
                .zip(mt.data_mut())
                .zip(vt.data_mut())
            {
                *m = b1 * *m + (1.0 - b1) * gr;
                *v = b2 * *v + (1.0 - b2) * gr * gr;
                let m_hat = *m as f64 / bc1;
                let v_hat = *v as f64 / bc2;
                *w -= (self.lr as f64 * m_hat / (v_hat.sqrt() + self.eps as f64)) as f32;
            }
        }
        Ok(())
    }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<P: ParamSet>(grads: &mut P, max_norm: f32) -> f64 {
    let norm = grads
        .tensors()
        .iter()
        .map(|t| t.squared_norm())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm as f64 && norm > 0.0 {
        let scale = (max_norm as f64 / norm) as f32;
        for t in grads.tensors_mut() {
            t.scale(scale);
        }
    }
    norm
}

/// `target ← (1 − coeff)·target + coeff·online`.
pub fn polyak_update<P: ParamSet>(target: &mut P, online: &P, coeff: f32) -> Result<()> {
    if !(coeff > 0.0 && coeff <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "polyak coefficient {coeff} outside (0, 1]"
        )));
    }
    let src = online.tensors();
    let mut dst = target.tensors_mut();
    if src.len() != dst.len() {
        return Err(Error::dim("polyak_update", dst.len(), src.len()));
    }
    for (d, s) in dst.iter().zip(&src) {
        d.check_same_shape(s, "polyak_update")?;
    }
    for (d, s) in dst.iter_mut().zip(src) {
        for (a, &b) in d.data_mut().iter_mut().zip(s.data()) {
            if coeff == 1.0 {
                *a = b;
            } else {
                *a += coeff * (b - *a);
            }
        }
    }
    Ok(())
}
