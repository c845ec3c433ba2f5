//! Ensemble-diversified soft actor-critic over hybrid actions.
//!
//! The actor samples a squashed Gaussian over settings and a categorical
//! over modes; expectations over the mode are taken in closed form by
//! weighting with the mode probabilities. An ensemble of critics is
//! trained towards a soft value target with the ensemble minimum, plus a
//! penalty on the pairwise cosine similarity of the critics' gradients
//! with respect to the continuous action. Two temperatures, one per action
//! part, are tuned towards target entropies.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::TrainConfig;
use super::iql::mse_loss;
use super::policy::{sample_categorical, sizes_from, HybridPolicy, PolicyHead};
use super::train::{critic_input, Batch, Learner};
use crate::data::schema::{Mode, N_CONT, N_STATE};
use crate::error::{Error, Result};
use crate::nn::{polyak_update, softmax_rows, AdamState, Checkpoint, Matrix, Mlp, MlpCache, ParamSet, LOG_2PI, TANH_EPS};
use crate::rng::Rng as StreamRng;

/// Added to probabilities before taking logs.
pub const PROB_EPS: f32 = 1e-8;
/// Added to gradient norms before normalizing.
pub const DIVERSITY_EPS: f32 = 1e-10;
/// Critic losses above this abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Reparameterization noise for one actor call.
#[derive(Clone, Debug)]
pub struct ActorNoise {
    pub eps: Matrix,
    /// Uniform draws for the categorical inverse CDF.
    pub disc_u: Vec<f32>,
}

impl ActorNoise {
    pub fn draw<R: Rng + ?Sized>(rows: usize, rng: &mut R) -> Self {
        let eps = (0..rows * N_CONT).map(|_| StandardNormal.sample(rng)).collect();
        ActorNoise {
            eps: Matrix::from_vec(rows, N_CONT, eps).unwrap(),
            disc_u: (0..rows).map(|_| rng.random()).collect(),
        }
    }
}

pub struct ActorSample {
    pub head: PolicyHead,
    pub cache: MlpCache,
    /// Squashed continuous actions.
    pub action: Matrix,
    /// Log-density of the squashed continuous sample, summed over settings.
    pub log_prob_cont: Vec<f32>,
    pub probs: Matrix,
    /// `log(prob + PROB_EPS)` per mode.
    pub log_prob_disc: Matrix,
    pub disc: Vec<usize>,
}

pub fn sample_actor(actor: &HybridPolicy, states: &Matrix, noise: &ActorNoise) -> Result<ActorSample> {
    if !actor.is_state_dependent() {
        return Err(Error::InvalidArgument("EDAC actor needs a state-dependent log-std".into()));
    }
    let (head, cache) = actor.forward(states)?;
    let b = states.rows();
    let mut action = Matrix::zeros(b, N_CONT);
    let mut log_prob_cont = Vec::with_capacity(b);
    for r in 0..b {
        let mut lp = 0.0f64;
        for k in 0..N_CONT {
            let e = noise.eps.get(r, k) as f64;
            let ls = head.log_std.get(r, k) as f64;
            let u = head.mean.get(r, k) as f64 + ls.exp() * e;
            let a = u.tanh();
            lp += -0.5 * e * e - ls - 0.5 * LOG_2PI - (1.0 - a * a + TANH_EPS).ln();
            action.set(r, k, a as f32);
        }
        log_prob_cont.push(lp as f32);
    }
    let probs = softmax_rows(&head.logits);
    let log_prob_disc = probs.map(|p| (p + PROB_EPS).ln());
    let disc = (0..b).map(|r| sample_categorical(probs.row(r), noise.disc_u[r])).collect();
    Ok(ActorSample { head, cache, action, log_prob_cont, probs, log_prob_disc, disc })
}

fn ensemble_q(critics: &[Mlp], x: &Matrix) -> Result<Vec<Vec<f32>>> {
    critics.iter().map(|c| Ok(c.predict(x)?.into_vec())).collect()
}

/// Soft Bellman targets
/// `r + gamma (1 - done) sum_d p_d (Qmin - alpha_c p_d logp_c - alpha_d logp_d)`
/// with actions sampled at `s'` and the target ensemble minimum.
pub fn soft_targets(
    actor: &HybridPolicy,
    targets: &[Mlp],
    batch: &Batch,
    noise: &ActorNoise,
    alpha: (f32, f32),
    gamma: f32,
) -> Result<Vec<f32>> {
    let s = sample_actor(actor, &batch.next_states, noise)?;
    let x = critic_input(&batch.next_states, &s.action, &s.disc)?;
    let qs = ensemble_q(targets, &x)?;
    Ok((0..batch.len())
        .map(|r| {
            let q_min = qs.iter().map(|q| q[r]).fold(f32::INFINITY, f32::min);
            let mut v = 0.0;
            for d in 0..Mode::COUNT {
                let p = s.probs.get(r, d);
                v += p * (q_min - alpha.0 * p * s.log_prob_cont[r] - alpha.1 * s.log_prob_disc.get(r, d));
            }
            batch.rewards[r] + gamma * (1.0 - batch.dones[r]) * v
        })
        .collect())
}

/// Mean over rows of the summed pairwise cosine similarity between the
/// critics' continuous-action gradients, divided by `N - 1`. Returns the
/// loss and its gradient for every critic.
pub fn diversity_loss(critics: &[Mlp], x: &Matrix) -> Result<(f64, Vec<Mlp>)> {
    let n = critics.len();
    if n < 2 {
        return Err(Error::InvalidArgument("diversity needs at least two critics".into()));
    }
    if x.cols() < N_STATE + N_CONT {
        return Err(Error::dim("diversity_loss", N_STATE + N_CONT, x.cols()));
    }
    let b = x.rows();
    let mut caches = Vec::with_capacity(n);
    let mut tangent_caches = Vec::with_capacity(n);
    // grads[i] is b x N_CONT: dQ_i/da_c per row
    let mut grads = Vec::with_capacity(n);
    for c in critics {
        let (_, cache) = c.forward(x)?;
        let mut g = Matrix::zeros(b, N_CONT);
        let mut tcs = Vec::with_capacity(N_CONT);
        for k in 0..N_CONT {
            let mut t = Matrix::zeros(b, x.cols());
            for r in 0..b {
                t.set(r, N_STATE + k, 1.0);
            }
            let (jt, tc) = c.jvp(&cache, &t)?;
            for r in 0..b {
                g.set(r, k, jt.get(r, 0));
            }
            tcs.push(tc);
        }
        caches.push(cache);
        tangent_caches.push(tcs);
        grads.push(g);
    }
    let scale = 1.0 / (b as f32 * (n - 1) as f32);
    let mut loss = 0.0f64;
    let mut upstream: Vec<Matrix> = (0..n).map(|_| Matrix::zeros(b, N_CONT)).collect();
    for r in 0..b {
        let norms: Vec<f32> = grads.iter().map(|g| g.row(r).iter().map(|v| v * v).sum::<f32>().sqrt()).collect();
        let unit: Vec<Vec<f32>> = grads
            .iter()
            .zip(&norms)
            .map(|(g, &nr)| g.row(r).iter().map(|v| v / (nr + DIVERSITY_EPS)).collect())
            .collect();
        let mut sum = [0.0f32; N_CONT];
        for u in &unit {
            for k in 0..N_CONT {
                sum[k] += u[k];
            }
        }
        let total: f32 = sum.iter().map(|v| v * v).sum();
        let own: f32 = unit.iter().map(|u| u.iter().map(|v| v * v).sum::<f32>()).sum();
        loss += (total - own) as f64;
        for i in 0..n {
            let c: Vec<f32> = (0..N_CONT).map(|k| 2.0 * (sum[k] - unit[i][k]) * scale).collect();
            let g = grads[i].row(r);
            let nr = norms[i];
            let proj = if nr > 0.0 {
                g.iter().zip(&c).map(|(a, b)| a * b).sum::<f32>() / (nr * (nr + DIVERSITY_EPS))
            } else {
                0.0
            };
            for k in 0..N_CONT {
                upstream[i].set(r, k, (c[k] - g[k] * proj) / (nr + DIVERSITY_EPS));
            }
        }
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut total = critics[i].zeros_like();
        for k in 0..N_CONT {
            let u = upstream[i].columns(k, 1)?;
            let g = critics[i].jvp_param_grads(&caches[i], &tangent_caches[i][k], &u)?;
            total.add_scaled(1.0, &g)?;
        }
        out.push(total);
    }
    Ok((loss * scale as f64, out))
}

/// TD loss summed over the ensemble, the diversity term, and the gradient
/// of `td + eta * diversity` for every critic.
pub fn critic_loss(critics: &[Mlp], x: &Matrix, y: &[f32], eta: f32) -> Result<(f64, f64, Vec<Mlp>)> {
    let mut td = 0.0;
    let mut grads = Vec::with_capacity(critics.len());
    for c in critics {
        let (l, g) = mse_loss(c, x, y)?;
        td += l;
        grads.push(g);
    }
    let mut div = 0.0;
    if eta > 0.0 {
        let (d, dg) = diversity_loss(critics, x)?;
        div = d;
        for (g, d) in grads.iter_mut().zip(&dg) {
            g.add_scaled(eta, d)?;
        }
    }
    Ok((td, div, grads))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActorStats {
    pub loss: f64,
    pub q_min: f64,
    pub log_prob_cont: f64,
}

/// `mean_b [sum_d p_d (alpha_d logp_d - Qmin) + sum_d p_d (alpha_c p_d logp_c - Qmin)]`
/// with the ensemble minimum at the sampled actions, and its gradient with
/// respect to the actor. Critics are held fixed.
pub fn actor_loss(
    actor: &HybridPolicy,
    critics: &[Mlp],
    states: &Matrix,
    noise: &ActorNoise,
    alpha: (f32, f32),
) -> Result<(ActorStats, HybridPolicy)> {
    let (alpha_c, alpha_d) = alpha;
    let s = sample_actor(actor, states, noise)?;
    let b = states.rows();
    let inv_b = 1.0 / b as f32;
    let x = critic_input(states, &s.action, &s.disc)?;
    let mut qs = Vec::with_capacity(critics.len());
    let mut caches = Vec::with_capacity(critics.len());
    for c in critics {
        let (q, cache) = c.forward(&x)?;
        qs.push(q.into_vec());
        caches.push(cache);
    }
    let argmin: Vec<usize> = (0..b)
        .map(|r| (0..critics.len()).fold(0, |m, i| if qs[i][r] < qs[m][r] { i } else { m }))
        .collect();
    let mut loss = 0.0f64;
    let mut q_sum = 0.0f64;
    let mut dq: Vec<Matrix> = (0..critics.len()).map(|_| Matrix::zeros(b, 1)).collect();
    for r in 0..b {
        let q_min = qs[argmin[r]][r];
        let p = s.probs.row(r);
        let lp = s.log_prob_disc.row(r);
        let lc = s.log_prob_cont[r];
        let mut row = 0.0f64;
        for d in 0..Mode::COUNT {
            row += (p[d] * (alpha_d * lp[d] - q_min)) as f64;
            row += (p[d] * (alpha_c * p[d] * lc - q_min)) as f64;
        }
        loss += row;
        q_sum += q_min as f64;
        let p_sum: f32 = p.iter().sum();
        dq[argmin[r]].set(r, 0, -2.0 * p_sum * inv_b);
    }
    // dL/da_c through the minimizing critic
    let mut da = Matrix::zeros(b, N_CONT);
    for (i, c) in critics.iter().enumerate() {
        if dq[i].data().iter().all(|&v| v == 0.0) {
            continue;
        }
        let (_, dx) = c.backward(&caches[i], &dq[i])?;
        da.axpy(1.0, &dx.columns(N_STATE, N_CONT)?)?;
    }
    let width = actor.net.output_dim();
    let mut dout = Matrix::zeros(b, width);
    for r in 0..b {
        let p = s.probs.row(r);
        let lp = s.log_prob_disc.row(r);
        let lc = s.log_prob_cont[r];
        let p2: f32 = p.iter().map(|v| v * v).sum();
        let coef = alpha_c * p2 * inv_b;
        for k in 0..N_CONT {
            let a = s.action.get(r, k);
            let one_m = 1.0 - a * a;
            let du = da.get(r, k) * one_m + coef * 2.0 * a * one_m / (one_m + TANH_EPS as f32);
            dout.set(r, k, du);
            if s.head.std_free[r * N_CONT + k] {
                let sigma = s.head.log_std.get(r, k).exp();
                dout.set(r, N_CONT + k, du * sigma * noise.eps.get(r, k) - coef);
            }
        }
        let q_min = qs[argmin[r]][r];
        let g: Vec<f32> = (0..Mode::COUNT)
            .map(|j| {
                (alpha_d * (lp[j] + p[j] / (p[j] + PROB_EPS)) + 2.0 * alpha_c * p[j] * lc - 2.0 * q_min) * inv_b
            })
            .collect();
        let mean_g: f32 = p.iter().zip(&g).map(|(p, g)| p * g).sum();
        for j in 0..Mode::COUNT {
            dout.set(r, 2 * N_CONT + j, p[j] * (g[j] - mean_g));
        }
    }
    let (net, _) = actor.net.backward(&s.cache, &dout)?;
    let stats = ActorStats {
        loss: loss / b as f64,
        q_min: q_sum / b as f64,
        log_prob_cont: s.log_prob_cont.iter().map(|&v| v as f64).sum::<f64>() / b as f64,
    };
    Ok((stats, HybridPolicy { net, log_std: None, bounds: actor.bounds }))
}

/// Temperature losses and their gradients with respect to
/// `(log_alpha_c, log_alpha_d)`.
pub fn alpha_loss(sample: &ActorSample, log_alpha: (f32, f32), target: (f32, f32)) -> ([f64; 2], [f32; 2]) {
    let b = sample.probs.rows();
    let (mut gc, mut gd) = (0.0f64, 0.0f64);
    for r in 0..b {
        let lc = sample.log_prob_cont[r];
        for d in 0..Mode::COUNT {
            let p = sample.probs.get(r, d);
            gc -= (p * (p * lc + target.0)) as f64;
            gd -= (p * (sample.log_prob_disc.get(r, d) + target.1)) as f64;
        }
    }
    gc /= b as f64;
    gd /= b as f64;
    ([log_alpha.0 as f64 * gc, log_alpha.1 as f64 * gd], [gc as f32, gd as f32])
}

pub struct HybridEdac {
    pub actor: HybridPolicy,
    pub critics: Vec<Mlp>,
    pub targets: Vec<Mlp>,
    /// `[log_alpha_c, log_alpha_d]`.
    pub log_alpha: Matrix,
    adam_actor: AdamState,
    adam_critics: AdamState,
    adam_alpha: AdamState,
    gamma: f32,
    eta: f32,
    polyak: f32,
    target_entropy: (f32, f32),
}

impl HybridEdac {
    pub fn new<R: Rng + ?Sized>(cfg: &TrainConfig, rng: &mut R) -> Self {
        let actor = HybridPolicy::edac(&cfg.hidden, rng);
        let cs = sizes_from(N_STATE + N_CONT + Mode::COUNT, &cfg.hidden, 1);
        let critics: Vec<Mlp> = (0..cfg.edac_ensemble).map(|_| Mlp::new(&cs, rng)).collect();
        let log_alpha = Matrix::zeros(1, 2);
        HybridEdac {
            adam_actor: AdamState::new(&actor, cfg.edac_lr),
            adam_critics: AdamState::new(&critics, cfg.edac_lr),
            adam_alpha: AdamState::new(&log_alpha, cfg.edac_lr),
            targets: critics.clone(),
            actor,
            critics,
            log_alpha,
            gamma: cfg.gamma,
            eta: cfg.edac_eta,
            polyak: cfg.polyak,
            target_entropy: (cfg.edac_target_entropy_cont, cfg.edac_target_entropy_disc),
        }
    }

    pub fn alpha(&self) -> (f32, f32) {
        (self.log_alpha.get(0, 0).exp(), self.log_alpha.get(0, 1).exp())
    }
}

impl Learner for HybridEdac {
    fn loss_names(&self) -> Vec<&'static str> {
        vec!["critic", "diversity", "actor", "alpha_cont", "alpha_disc", "log_prob_cont", "q_min"]
    }

    fn update(&mut self, batch: &Batch, rng: &mut StreamRng) -> Result<Option<Vec<f64>>> {
        let b = batch.len();
        let sample = sample_actor(&self.actor, &batch.states, &ActorNoise::draw(b, rng))?;
        let la = (self.log_alpha.get(0, 0), self.log_alpha.get(0, 1));
        let (alpha_losses, g) = alpha_loss(&sample, la, self.target_entropy);
        let g = Matrix::from_vec(1, 2, g.to_vec())?;
        self.adam_alpha.step(&mut self.log_alpha, &g)?;
        let alpha = self.alpha();

        let (actor_stats, actor_grads) =
            actor_loss(&self.actor, &self.critics, &batch.states, &ActorNoise::draw(b, rng), alpha)?;
        self.adam_actor.step(&mut self.actor, &actor_grads)?;

        let y = soft_targets(&self.actor, &self.targets, batch, &ActorNoise::draw(b, rng), alpha, self.gamma)?;
        let x = critic_input(&batch.states, &batch.cont, &batch.modes)?;
        let (td, div, grads) = critic_loss(&self.critics, &x, &y, self.eta)?;
        let total = td + self.eta as f64 * div;
        if !total.is_finite() || total > DIVERGENCE_LIMIT {
            return Err(Error::Diverged(format!(
                "HybridEDAC critic loss {total:.3e} (td {td:.3e}, diversity {div:.3e}, alpha {alpha:?})"
            )));
        }
        self.adam_critics.step(&mut self.critics, &grads)?;
        for (t, c) in self.targets.iter_mut().zip(&self.critics) {
            polyak_update(t, c, self.polyak)?;
        }
        Ok(Some(vec![
            td,
            div,
            actor_stats.loss,
            alpha_losses[0],
            alpha_losses[1],
            actor_stats.log_prob_cont,
            actor_stats.q_min,
        ]))
    }

    fn save(&self, ck: &mut Checkpoint) {
        self.actor.push_to(ck);
        for (i, c) in self.critics.iter().enumerate() {
            ck.push_mlp(&format!("critic{}", i + 1), c);
        }
        ck.push("log_alpha", &self.log_alpha);
    }
}
