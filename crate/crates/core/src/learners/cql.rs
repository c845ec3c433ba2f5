//! Conservative Q-learning with a factored critic over the restricted
//! action space.
//!
//! Each critic maps a state to one value per action bin; the value of a
//! combination is the sum of its bins' values. Two critics with Polyak
//! targets, a max-of-min bootstrap target, and a logsumexp penalty over
//! the restricted combinations.

use rand::Rng;

use super::config::TrainConfig;
use super::policy::{sizes_from, FactoredPolicy};
use crate::data::schema::N_STATE;
use super::train::{Batch, Learner};
use crate::action_space::{gather_q_values_t, scatter_to_bins_t, RestrictedActionSpace};
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, polyak_update, AdamState, Checkpoint, Matrix, Mlp};
use crate::rng::Rng as StreamRng;

#[derive(Clone, Debug, PartialEq)]
pub struct CqlLoss {
    /// Mean squared TD error.
    pub td: f64,
    /// `mean(logsumexp_{A_r} Q - Q(s, a))`, before scaling by alpha.
    pub conservative: f64,
    /// `alpha * conservative + 0.5 * td`.
    pub total: f64,
    pub q_data: f64,
}

/// `r + gamma (1 - done) max_a min(Q1', Q2')(s', a)` over the restricted
/// combinations.
pub fn cql_targets(
    targets: &[Mlp; 2],
    space: &RestrictedActionSpace,
    batch: &Batch,
    gamma: f32,
) -> Result<Vec<f32>> {
    let q1 = gather_q_values_t(&targets[0].predict(&batch.next_states)?.transpose(), space)?;
    let q2 = gather_q_values_t(&targets[1].predict(&batch.next_states)?.transpose(), space)?;
    let best = max_of_min_t(&q1, &q2);
    Ok((0..batch.len())
        .map(|r| batch.rewards[r] + gamma * (1.0 - batch.dones[r]) * best[r])
        .collect())
}

/// Loss and parameter gradient of one critic.
pub fn cql_critic_loss(
    critic: &Mlp,
    space: &RestrictedActionSpace,
    batch: &Batch,
    y: &[f32],
    alpha: f32,
) -> Result<(CqlLoss, Mlp)> {
    if batch.combos.len() != batch.len() {
        return Err(Error::InvalidArgument("CQL batch has no restricted-space indices".into()));
    }
    if let Some(&bad) = batch.combos.iter().find(|&&c| c >= space.len()) {
        return Err(Error::UnknownAction(format!("combination index {bad} outside the restricted space")));
    }
    let (out, cache) = critic.forward(&batch.states)?;
    let mut probs_t = gather_q_values_t(&out.transpose(), space)?;
    let lse = softmax_columns_in_place(&mut probs_t);
    let b = batch.len();
    let inv_b = 1.0 / b as f32;
    let mut q_pred = Vec::with_capacity(b);
    for (r, &c) in batch.combos.iter().enumerate() {
        let q: f32 = space.columns_of(c).iter().map(|&j| out.get(r, j)).sum();
        q_pred.push(q);
    }
    let mut td = 0.0f64;
    let mut cons = 0.0f64;
    for r in 0..b {
        let d = (q_pred[r] - y[r]) as f64;
        td += d * d;
        cons += (lse[r] - q_pred[r]) as f64;
    }
    td /= b as f64;
    cons /= b as f64;
    // d/dout: alpha/B (softmax(Q_all) @ one_hot - onehot(a)) + (q - y)/B onehot(a)
    let mut dout = scatter_to_bins_t(&probs_t, space)?.transpose();
    dout.scale(alpha * inv_b);
    for (r, &c) in batch.combos.iter().enumerate() {
        let coef = (q_pred[r] - y[r]) * inv_b - alpha * inv_b;
        for &j in space.columns_of(c) {
            dout.set(r, j, dout.get(r, j) + coef);
        }
    }
    let (grads, _) = critic.backward(&cache, &dout)?;
    let q_data = q_pred.iter().map(|&q| q as f64).sum::<f64>() / b as f64;
    Ok((
        CqlLoss { td, conservative: cons, total: alpha as f64 * cons + 0.5 * td, q_data },
        grads,
    ))
}

/// Per column of two `combinations x batch` matrices: `max_c min(a, b)`.
pub(crate) fn max_of_min_t(a: &Matrix, b: &Matrix) -> Vec<f32> {
    let mut best = vec![f32::NEG_INFINITY; a.cols()];
    for c in 0..a.rows() {
        for ((m, &x), &y) in best.iter_mut().zip(a.row(c)).zip(b.row(c)) {
            *m = m.max(x.min(y));
        }
    }
    best
}

/// Replaces each column by its softmax and returns the column logsumexps.
fn softmax_columns_in_place(m: &mut Matrix) -> Vec<f32> {
    let cols = m.cols();
    let mut max = vec![f32::NEG_INFINITY; cols];
    for r in 0..m.rows() {
        for (mx, &v) in max.iter_mut().zip(m.row(r)) {
            *mx = mx.max(v);
        }
    }
    let mut sum = vec![0.0f32; cols];
    for r in 0..m.rows() {
        for ((v, s), mx) in m.row_mut(r).iter_mut().zip(sum.iter_mut()).zip(&max) {
            *v = (*v - mx).exp();
            *s += *v;
        }
    }
    let inv: Vec<f32> = sum.iter().map(|s| 1.0 / s).collect();
    for r in 0..m.rows() {
        for (v, i) in m.row_mut(r).iter_mut().zip(&inv) {
            *v *= i;
        }
    }
    max.iter().zip(&sum).map(|(m, s)| m + s.ln()).collect()
}

pub struct FactoredCql {
    pub critics: [Mlp; 2],
    pub targets: [Mlp; 2],
    adam: [AdamState; 2],
    space: RestrictedActionSpace,
    alpha: f32,
    gamma: f32,
    clip: f32,
    polyak: f32,
}

impl FactoredCql {
    pub fn new<R: Rng + ?Sized>(space: &RestrictedActionSpace, cfg: &TrainConfig, rng: &mut R) -> Self {
        Self::with_state_dim(N_STATE, space, cfg, rng)
    }

    pub fn with_state_dim<R: Rng + ?Sized>(
        state_dim: usize,
        space: &RestrictedActionSpace,
        cfg: &TrainConfig,
        rng: &mut R,
    ) -> Self {
        let s = sizes_from(state_dim, &cfg.hidden, space.spec().width());
        let critics = [Mlp::new(&s, rng), Mlp::new(&s, rng)];
        FactoredCql {
            targets: critics.clone(),
            adam: [AdamState::new(&critics[0], cfg.cql_lr), AdamState::new(&critics[1], cfg.cql_lr)],
            critics,
            space: space.clone(),
            alpha: cfg.cql_alpha,
            gamma: cfg.gamma,
            clip: cfg.cql_clip,
            polyak: cfg.polyak,
        }
    }

    pub fn policy(&self) -> FactoredPolicy {
        FactoredPolicy { critics: self.critics.clone(), space: self.space.clone() }
    }

    pub fn step(&mut self, batch: &Batch) -> Result<[CqlLoss; 2]> {
        let y = cql_targets(&self.targets, &self.space, batch, self.gamma)?;
        let mut out = Vec::with_capacity(2);
        for i in 0..2 {
            let (loss, mut grads) = cql_critic_loss(&self.critics[i], &self.space, batch, &y, self.alpha)?;
            if !loss.total.is_finite() {
                return Err(Error::Diverged(format!("FactoredCQL critic {} loss {}", i + 1, loss.total)));
            }
            clip_grad_norm(&mut grads, self.clip);
            self.adam[i].step(&mut self.critics[i], &grads)?;
            out.push(loss);
        }
        for i in 0..2 {
            polyak_update(&mut self.targets[i], &self.critics[i], self.polyak)?;
        }
        Ok([out.remove(0), out.remove(0)])
    }
}

impl Learner for FactoredCql {
    fn loss_names(&self) -> Vec<&'static str> {
        vec!["td_1", "td_2", "conservative_1", "conservative_2", "total", "q_data"]
    }

    fn update(&mut self, batch: &Batch, _rng: &mut StreamRng) -> Result<Option<Vec<f64>>> {
        let [a, b] = self.step(batch)?;
        let total = self.alpha as f64 * (a.conservative + b.conservative) + 0.5 * (a.td + b.td);
        Ok(Some(vec![a.td, b.td, a.conservative, b.conservative, total, 0.5 * (a.q_data + b.q_data)]))
    }

    fn save(&self, ck: &mut Checkpoint) {
        ck.push_mlp("critic1", &self.critics[0]);
        ck.push_mlp("critic2", &self.critics[1]);
    }
}
