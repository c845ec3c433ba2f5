//! Dense neural-network engine: matrices, MLPs with hand-written gradients,
//! Adam, target-network utilities, probability helpers and losses.

mod adam;
pub mod checkpoint;
mod dist;
pub mod gradcheck;
mod loss;
mod matrix;
mod mlp;

pub use adam::{clip_grad_norm, polyak_update, AdamState};
pub use checkpoint::Checkpoint;
pub use dist::{
    categorical_log_probs, gaussian_log_prob, logsumexp_rows, softmax_rows, tanh_gaussian_log_prob,
    GaussianHead, LOG_2PI, TANH_EPS,
};
pub use loss::{expectile_loss, expectile_loss_grad, quantile_huber_loss, quantile_midpoints};
pub use matrix::Matrix;
pub use mlp::{Linear, Mlp, MlpCache, TangentCache};

/// A collection of parameter tensors with a stable order.
///
/// Gradients share the parameter type, so optimizer state, clipping and
/// target updates can walk two sets side by side.
pub trait ParamSet {
    fn tensors(&self) -> Vec<&Matrix>;
    fn tensors_mut(&mut self) -> Vec<&mut Matrix>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data().len()).sum()
    }

    /// `self += alpha * other`, tensor by tensor.
    fn add_scaled(&mut self, alpha: f32, other: &Self) -> crate::Result<()>
    where
        Self: Sized,
    {
        let src = other.tensors();
        let mut dst = self.tensors_mut();
        if src.len() != dst.len() {
            return Err(crate::Error::dim("ParamSet::add_scaled", dst.len(), src.len()));
        }
        for (d, s) in dst.iter_mut().zip(src) {
            d.axpy(alpha, s)?;
        }
        Ok(())
    }
}

impl ParamSet for Matrix {
    fn tensors(&self) -> Vec<&Matrix> {
        vec![self]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![self]
    }
}

impl<T: ParamSet> ParamSet for Vec<T> {
    fn tensors(&self) -> Vec<&Matrix> {
        self.iter().flat_map(|p| p.tensors()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.iter_mut().flat_map(|p| p.tensors_mut()).collect()
    }
}
