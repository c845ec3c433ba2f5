//! Implicit Q-learning over hybrid actions.
//!
//! The value net regresses an upper expectile of the target critics at
//! dataset actions; the critics regress `r + gamma V(s')`; the actor is
//! fitted by advantage-weighted likelihood of dataset actions, where the
//! log-likelihood is the sum of the Gaussian term over settings and the
//! categorical term over modes. The critic is never queried at actions the
//! actor proposes.

use rand::Rng;

use super::config::TrainConfig;
use super::policy::{sizes, sizes_from, HybridPolicy};
use super::train::{critic_input, Batch, Learner};
use crate::data::schema::{Mode, N_CONT, N_STATE};
use crate::error::{Error, Result};
use crate::nn::{
    expectile_loss, expectile_loss_grad, gaussian_log_prob, polyak_update, softmax_rows, AdamState, Checkpoint,
    Matrix, Mlp,
};
use crate::rng::Rng as StreamRng;

/// Upper bound on advantage weights.
pub const EXP_ADV_MAX: f32 = 100.0;

/// `min(exp(beta * adv), EXP_ADV_MAX)`.
pub fn awr_weights(adv: &[f32], beta: f32) -> Vec<f32> {
    adv.iter().map(|&a| (beta * a).exp().min(EXP_ADV_MAX)).collect()
}

/// Expectile regression of `V(s)` towards `q`. Returns the loss, the value
/// net gradient and the advantages `q - V(s)`.
pub fn value_loss(value: &Mlp, states: &Matrix, q: &[f32], tau: f32) -> Result<(f64, Mlp, Vec<f32>)> {
    let (v, cache) = value.forward(states)?;
    let adv: Vec<f32> = q.iter().zip(v.data()).map(|(q, v)| q - v).collect();
    let loss = expectile_loss(&adv, tau);
    let g: Vec<f32> = expectile_loss_grad(&adv, tau).into_iter().map(|g| -g).collect();
    let (grads, _) = value.backward(&cache, &Matrix::from_vec(g.len(), 1, g)?)?;
    Ok((loss, grads, adv))
}

/// `mean((net(x) - y)^2)` and its gradient, for single-output networks.
pub fn mse_loss(net: &Mlp, inputs: &Matrix, y: &[f32]) -> Result<(f64, Mlp)> {
    let (q, cache) = net.forward(inputs)?;
    let n = y.len() as f32;
    let mut loss = 0.0f64;
    let g: Vec<f32> = q
        .data()
        .iter()
        .zip(y)
        .map(|(q, y)| {
            let d = q - y;
            loss += (d as f64) * (d as f64);
            2.0 * d / n
        })
        .collect();
    let (grads, _) = net.backward(&cache, &Matrix::from_vec(g.len(), 1, g)?)?;
    Ok((loss / n as f64, grads))
}

/// `mean(w * -(log N(a_c; tanh(mean), std) + log softmax(logits)[a_d]))`
/// and its gradient.
pub fn actor_loss(
    actor: &HybridPolicy,
    states: &Matrix,
    cont: &Matrix,
    modes: &[usize],
    weights: &[f32],
) -> Result<(f64, HybridPolicy)> {
    if actor.is_state_dependent() {
        return Err(Error::InvalidArgument("IQL actor needs a global log-std".into()));
    }
    let (head, cache) = actor.forward(states)?;
    let b = states.rows();
    let inv_b = 1.0 / b as f32;
    let probs = softmax_rows(&head.logits);
    let width = actor.net.output_dim();
    let mut dout = Matrix::zeros(b, width);
    let mut dlog_std = Matrix::zeros(1, N_CONT);
    let mut loss = 0.0f64;
    for r in 0..b {
        let w = weights[r];
        let mut nll = 0.0f64;
        for k in 0..N_CONT {
            let m = head.mean.get(r, k).tanh();
            let ls = head.log_std.get(r, k);
            let a = cont.get(r, k);
            nll -= gaussian_log_prob(a as f64, m as f64, ls as f64);
            let var = (2.0 * ls).exp();
            let dm = -(a - m) / var;
            dout.set(r, k, w * inv_b * dm * (1.0 - m * m));
            if head.std_free[r * N_CONT + k] {
                let v = dlog_std.get(0, k) + w * inv_b * (1.0 - (a - m) * (a - m) / var);
                dlog_std.set(0, k, v);
            }
        }
        let p = probs.row(r);
        nll -= (p[modes[r]].max(f32::MIN_POSITIVE) as f64).ln();
        for j in 0..Mode::COUNT {
            let ind = (j == modes[r]) as u8 as f32;
            dout.set(r, N_CONT + j, w * inv_b * (p[j] - ind));
        }
        loss += w as f64 * nll;
    }
    let (net_grads, _) = actor.net.backward(&cache, &dout)?;
    Ok((
        loss / b as f64,
        HybridPolicy { net: net_grads, log_std: Some(dlog_std), bounds: actor.bounds },
    ))
}

pub struct HybridIql {
    pub actor: HybridPolicy,
    pub critics: [Mlp; 2],
    pub targets: [Mlp; 2],
    pub value: Mlp,
    adam_actor: AdamState,
    adam_critics: [AdamState; 2],
    adam_value: AdamState,
    gamma: f32,
    beta: f32,
    tau: f32,
    polyak: f32,
    actor_last: bool,
}

impl HybridIql {
    pub fn new<R: Rng + ?Sized>(cfg: &TrainConfig, rng: &mut R) -> Self {
        let actor = HybridPolicy::iql(&cfg.hidden, rng);
        let cs = sizes_from(N_STATE + N_CONT + Mode::COUNT, &cfg.hidden, 1);
        let critics = [Mlp::new(&cs, rng), Mlp::new(&cs, rng)];
        let value = Mlp::new(&sizes(&cfg.hidden, 1), rng);
        HybridIql {
            adam_actor: AdamState::new(&actor, cfg.iql_lr),
            adam_critics: [AdamState::new(&critics[0], cfg.iql_lr), AdamState::new(&critics[1], cfg.iql_lr)],
            adam_value: AdamState::new(&value, cfg.iql_lr),
            targets: critics.clone(),
            actor,
            critics,
            value,
            gamma: cfg.gamma,
            beta: cfg.iql_beta,
            tau: cfg.iql_expectile,
            polyak: cfg.polyak,
            actor_last: cfg.iql_actor_last,
        }
    }
}

impl Learner for HybridIql {
    fn loss_names(&self) -> Vec<&'static str> {
        vec!["value", "critic", "actor", "adv_mean", "weight_max"]
    }

    fn update(&mut self, batch: &Batch, _rng: &mut StreamRng) -> Result<Option<Vec<f64>>> {
        let x = critic_input(&batch.states, &batch.cont, &batch.modes)?;
        let q1 = self.targets[0].predict(&x)?;
        let q2 = self.targets[1].predict(&x)?;
        let q: Vec<f32> = q1.data().iter().zip(q2.data()).map(|(a, b)| a.min(*b)).collect();
        let next_v = self.value.predict(&batch.next_states)?;
        let (v_loss, v_grads, adv) = value_loss(&self.value, &batch.states, &q, self.tau)?;
        if adv.iter().any(|a| !a.is_finite()) || !v_loss.is_finite() {
            return Ok(None);
        }
        self.adam_value.step(&mut self.value, &v_grads)?;
        let y: Vec<f32> = (0..batch.len())
            .map(|r| batch.rewards[r] + self.gamma * (1.0 - batch.dones[r]) * next_v.get(r, 0))
            .collect();
        let w = awr_weights(&adv, self.beta);
        let actor_step = |s: &mut Self| -> Result<f64> {
            let (l, g) = actor_loss(&s.actor, &batch.states, &batch.cont, &batch.modes, &w)?;
            s.adam_actor.step(&mut s.actor, &g)?;
            Ok(l)
        };
        let mut a_loss = 0.0;
        if !self.actor_last {
            a_loss = actor_step(self)?;
        }
        let mut c_loss = 0.0;
        for i in 0..2 {
            let (l, g) = mse_loss(&self.critics[i], &x, &y)?;
            self.adam_critics[i].step(&mut self.critics[i], &g)?;
            c_loss += 0.5 * l;
        }
        if self.actor_last {
            a_loss = actor_step(self)?;
        }
        for i in 0..2 {
            polyak_update(&mut self.targets[i], &self.critics[i], self.polyak)?;
        }
        let adv_mean = adv.iter().map(|&a| a as f64).sum::<f64>() / adv.len() as f64;
        let w_max = w.iter().fold(0.0f32, |m, &v| m.max(v)) as f64;
        Ok(Some(vec![v_loss, c_loss, a_loss, adv_mean, w_max]))
    }

    fn save(&self, ck: &mut Checkpoint) {
        self.actor.push_to(ck);
        ck.push_mlp("critic1", &self.critics[0]);
        ck.push_mlp("critic2", &self.critics[1]);
        ck.push_mlp("value", &self.value);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{assert_grads_close, finite_difference};
    use crate::rng::stream_rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rows: usize, cols: usize, rng: &mut StreamRng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect()).unwrap()
    }

    fn tiny_actor(rng: &mut StreamRng) -> HybridPolicy {
        let mut a = HybridPolicy::iql(&[8, 8], rng);
        a.log_std = Some(Matrix::from_vec(1, 5, vec![-0.3, 0.1, -0.5, 0.2, 0.0]).unwrap());
        a
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let mut rng = stream_rng(11, 1);
        let actor = tiny_actor(&mut rng);
        let s = randn(10, N_STATE, &mut rng);
        let cont = randn(10, N_CONT, &mut rng).map(|v| (0.5 * v).tanh());
        let modes: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let w: Vec<f32> = (0..10).map(|i| 0.5 + i as f32 * 0.3).collect();
        let (_, g) = actor_loss(&actor, &s, &cont, &modes, &w).unwrap();
        let numeric = finite_difference(&actor, 1e-3, |a| actor_loss(a, &s, &cont, &modes, &w).unwrap().0);
        assert_grads_close(&g, &numeric, 1e-3);
    }

    #[test]
    fn value_and_critic_gradients_match_finite_differences() {
        let mut rng = stream_rng(12, 1);
        let value = Mlp::new(&[N_STATE, 8, 8, 1], &mut rng);
        let s = randn(10, N_STATE, &mut rng);
        let q: Vec<f32> = (0..10).map(|i| i as f32 * 0.2 - 1.0).collect();
        let (_, g, _) = value_loss(&value, &s, &q, 0.8).unwrap();
        let numeric = finite_difference(&value, 1e-3, |v| value_loss(v, &s, &q, 0.8).unwrap().0);
        assert_grads_close(&g, &numeric, 1e-3);

        let critic = Mlp::new(&[N_STATE + 7, 8, 8, 1], &mut rng);
        let x = randn(10, N_STATE + 7, &mut rng);
        let (_, g) = mse_loss(&critic, &x, &q).unwrap();
        let numeric = finite_difference(&critic, 1e-3, |c| mse_loss(c, &x, &q).unwrap().0);
        assert_grads_close(&g, &numeric, 1e-3);
    }

    #[test]
    fn symmetric_expectile_is_half_mse() {
        let mut rng = stream_rng(13, 1);
        let value = Mlp::new(&[N_STATE, 8, 1], &mut rng);
        let s = randn(16, N_STATE, &mut rng);
        let q: Vec<f32> = (0..16).map(|i| (i as f32).sin()).collect();
        let (l, g, _) = value_loss(&value, &s, &q, 0.5).unwrap();
        let (m, mut gm) = mse_loss(&value, &s, &q).unwrap();
        assert!((l - 0.5 * m).abs() < 1e-6);
        for t in crate::nn::ParamSet::tensors_mut(&mut gm) {
            t.scale(0.5);
        }
        assert!(crate::nn::gradcheck::max_relative_error(&g, &gm) < 1e-5);
    }

    #[test]
    fn weights_are_capped_and_unit_at_zero_beta() {
        let adv = [-3.0, 0.0, 0.01, 0.5, 10.0];
        let w = awr_weights(&adv, 100.0);
        assert!(w.iter().all(|&x| x <= EXP_ADV_MAX));
        assert_eq!(w[4], EXP_ADV_MAX);
        assert!(awr_weights(&adv, 0.0).iter().all(|&x| x == 1.0));
    }

    #[test]
    fn zero_beta_is_behavior_cloning() {
        let mut rng = stream_rng(14, 1);
        let actor = tiny_actor(&mut rng);
        let s = randn(6, N_STATE, &mut rng);
        let cont = randn(6, N_CONT, &mut rng).map(|v| (0.5 * v).tanh());
        let modes = vec![0, 1, 1, 0, 1, 0];
        let w = awr_weights(&[5.0, -5.0, 0.0, 2.0, 1.0, -1.0], 0.0);
        let (l, _) = actor_loss(&actor, &s, &cont, &modes, &w).unwrap();
        let (head, _) = actor.forward(&s).unwrap();
        let probs = softmax_rows(&head.logits);
        let mut nll = 0.0;
        for r in 0..6 {
            for k in 0..N_CONT {
                let m = head.mean.get(r, k).tanh() as f64;
                let sd = head.log_std.get(r, k) as f64;
                let z = (cont.get(r, k) as f64 - m) / sd.exp();
                nll += 0.5 * z * z + sd + 0.5 * (2.0 * std::f64::consts::PI).ln();
            }
            nll -= (probs.get(r, modes[r]) as f64).ln();
        }
        assert!((l - nll / 6.0).abs() < 1e-4, "{l} vs {}", nll / 6.0);
    }
}
