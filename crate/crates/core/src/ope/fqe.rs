//! Fitted Q-evaluation and its quantile-regression variant.
//!
//! Both regress `Q(x)` towards `r + gamma (1 - done) Q'(x')`, where `x` is
//! a state-action feature row and `x'` pairs the next state with the
//! evaluated policy's action there. The feature map is the caller's
//! choice, so the same code serves the hybrid critic input and tabular
//! one-hot encodings.

use rand::Rng;

use crate::data::Transitions;
use crate::error::{Error, Result};
use crate::kv::{join_widths, parse_widths, KvFile};
use crate::learners::{critic_input, Policy, PolicyActions};
use crate::nn::{polyak_update, quantile_huber_loss, quantile_midpoints, AdamState, Matrix, Mlp};
use crate::rng::{stream, stream_rng};

#[derive(Clone, Debug, PartialEq)]
pub struct FqeConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub gamma: f32,
    pub polyak: f32,
    pub hidden: Vec<usize>,
    /// Quantile count for the distributional variant.
    pub quantiles: usize,
    pub kappa: f32,
    /// Loss above which the fit is declared divergent.
    pub divergence_limit: f64,
}

impl FqeConfig {
    pub fn paper() -> Self {
        FqeConfig {
            steps: 20_000,
            batch_size: 256,
            lr: 3e-4,
            gamma: 0.99,
            polyak: 0.005,
            hidden: vec![256; 4],
            quantiles: 32,
            kappa: 1.0,
            divergence_limit: 1e8,
        }
    }

    pub fn desk() -> Self {
        FqeConfig { batch_size: 128, lr: 1e-3, hidden: vec![64, 64], ..Self::paper() }
    }

    pub fn apply(mut self, mut kv: KvFile) -> Result<Self> {
        kv.take_into("steps", &mut self.steps)?;
        kv.take_into("batch_size", &mut self.batch_size)?;
        kv.take_into("lr", &mut self.lr)?;
        kv.take_into("gamma", &mut self.gamma)?;
        kv.take_into("polyak", &mut self.polyak)?;
        if let Some(h) = kv.take::<String>("hidden")? {
            self.hidden = parse_widths(&h)?;
        }
        kv.take_into("quantiles", &mut self.quantiles)?;
        kv.take_into("kappa", &mut self.kappa)?;
        kv.take_into("divergence_limit", &mut self.divergence_limit)?;
        kv.finish()?;
        self.validate()?;
        Ok(self)
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::default();
        kv.set("steps", self.steps);
        kv.set("batch_size", self.batch_size);
        kv.set("lr", self.lr);
        kv.set("gamma", self.gamma);
        kv.set("polyak", self.polyak);
        kv.set("hidden", join_widths(&self.hidden));
        kv.set("quantiles", self.quantiles);
        kv.set("kappa", self.kappa);
        kv.set("divergence_limit", self.divergence_limit);
        kv
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) || !(self.lr > 0.0) || !(self.polyak > 0.0 && self.polyak <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "FQE gamma {} lr {} polyak {}",
                self.gamma, self.lr, self.polyak
            )));
        }
        if self.steps == 0 || self.batch_size == 0 || self.quantiles == 0 || !(self.kappa > 0.0) {
            return Err(Error::InvalidArgument("FQE steps, batch, quantiles and kappa must be positive".into()));
        }
        Ok(())
    }
}

/// Regression data for FQE: features at `(s, a)` and at `(s', pi(s'))`.
#[derive(Clone, Debug)]
pub struct FqeProblem {
    pub inputs: Matrix,
    pub next_inputs: Matrix,
    pub rewards: Vec<f32>,
    pub dones: Vec<f32>,
}

impl FqeProblem {
    pub fn new(inputs: Matrix, next_inputs: Matrix, rewards: Vec<f32>, dones: Vec<f32>) -> Result<Self> {
        let n = inputs.rows();
        if next_inputs.shape() != inputs.shape() || rewards.len() != n || dones.len() != n {
            return Err(Error::dim("FqeProblem::new", n, rewards.len()));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("FQE needs at least one transition".into()));
        }
        Ok(FqeProblem { inputs, next_inputs, rewards, dones })
    }

    /// Next actions from `policy`.
    pub fn for_policy(tr: &Transitions, policy: &dyn Policy) -> Result<Self> {
        let next = policy.act_batch(&tr.next_states)?;
        Self::new(
            critic_input(&tr.states, &tr.cont, &tr.modes)?,
            critic_input(&tr.next_states, &next.cont, &next.modes)?,
            tr.rewards.clone(),
            tr.dones.clone(),
        )
    }

    /// Next actions from the dataset, for the behavior policy.
    pub fn for_behavior(tr: &Transitions) -> Result<Self> {
        Self::new(
            critic_input(&tr.states, &tr.cont, &tr.modes)?,
            critic_input(&tr.next_states, &tr.next_cont, &tr.next_modes)?,
            tr.rewards.clone(),
            tr.dones.clone(),
        )
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// A fitted evaluator. With one output it is a plain Q regression; with
/// several the outputs are quantiles at the midpoints `(i + 0.5) / N`.
#[derive(Clone, Debug, PartialEq)]
pub struct FqeModel {
    pub net: Mlp,
    pub gamma: f32,
}

impl FqeModel {
    pub fn n_quantiles(&self) -> usize {
        self.net.output_dim()
    }

    pub fn is_distributional(&self) -> bool {
        self.n_quantiles() > 1
    }

    /// Expected value per row (the mean over quantiles).
    pub fn q(&self, inputs: &Matrix) -> Result<Vec<f32>> {
        let out = self.net.predict(inputs)?;
        let n = out.cols() as f32;
        Ok((0..out.rows()).map(|r| out.row(r).iter().sum::<f32>() / n).collect())
    }

    /// Quantile outputs per row, sorted ascending.
    pub fn quantiles(&self, inputs: &Matrix) -> Result<Matrix> {
        let mut out = self.net.predict(inputs)?;
        for r in 0..out.rows() {
            out.row_mut(r).sort_by(f32::total_cmp);
        }
        Ok(out)
    }

    /// Mean squared Bellman residual of the model against itself.
    pub fn bellman_residual(&self, p: &FqeProblem) -> Result<f64> {
        let q = self.q(&p.inputs)?;
        let qn = self.q(&p.next_inputs)?;
        let mut s = 0.0f64;
        for i in 0..p.len() {
            let y = p.rewards[i] + self.gamma * (1.0 - p.dones[i]) * qn[i];
            s += ((q[i] - y) as f64).powi(2);
        }
        Ok(s / p.len() as f64)
    }
}

#[derive(Clone, Debug)]
pub struct FqeFit {
    pub model: FqeModel,
    /// `(step, loss)` every 100 steps.
    pub log: Vec<(usize, f64)>,
}

fn fit(p: &FqeProblem, cfg: &FqeConfig, seed: u64, n_out: usize) -> Result<FqeFit> {
    cfg.validate()?;
    if p.is_empty() {
        return Err(Error::InvalidArgument("FQE needs at least one transition".into()));
    }
    let mut init = stream_rng(seed, stream::INIT);
    let mut sizes = vec![p.inputs.cols()];
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(n_out);
    let mut net = Mlp::new(&sizes, &mut init);
    let mut target = net.clone();
    let mut adam = AdamState::new(&net, cfg.lr);
    let taus = quantile_midpoints(n_out);
    let mut rng = stream_rng(seed, stream::FQE);
    let full = cfg.batch_size >= p.len();
    let all: Vec<usize> = (0..p.len()).collect();
    let mut rows = vec![0usize; cfg.batch_size.min(p.len())];
    let mut log = Vec::new();
    for step in 1..=cfg.steps {
        let idx: &[usize] = if full {
            &all
        } else {
            for r in rows.iter_mut() {
                *r = rng.random_range(0..p.len());
            }
            &rows
        };
        let x = p.inputs.select_rows(idx);
        let next = target.predict(&p.next_inputs.select_rows(idx))?;
        let (out, cache) = net.forward(&x)?;
        let b = idx.len();
        let (loss, grad) = if n_out == 1 {
            let mut g = Matrix::zeros(b, 1);
            let mut loss = 0.0f64;
            for (k, &i) in idx.iter().enumerate() {
                let y = p.rewards[i] + cfg.gamma * (1.0 - p.dones[i]) * next.get(k, 0);
                let d = out.get(k, 0) - y;
                loss += (d as f64).powi(2);
                g.set(k, 0, 2.0 * d / b as f32);
            }
            (loss / b as f64, g)
        } else {
            let mut y = next;
            for (k, &i) in idx.iter().enumerate() {
                let cont = cfg.gamma * (1.0 - p.dones[i]);
                for v in y.row_mut(k) {
                    *v = p.rewards[i] + cont * *v;
                }
            }
            quantile_huber_loss(&out, &y, &taus, cfg.kappa)?
        };
        if !loss.is_finite() || loss > cfg.divergence_limit {
            return Err(Error::FqeDiverged(format!("step {step}, loss {loss:.3e}")));
        }
        let (grads, _) = net.backward(&cache, &grad)?;
        adam.step(&mut net, &grads)?;
        polyak_update(&mut target, &net, cfg.polyak)?;
        if step % 100 == 0 || step == cfg.steps {
            log.push((step, loss));
        }
    }
    Ok(FqeFit { model: FqeModel { net, gamma: cfg.gamma }, log })
}

/// Least-squares FQE.
pub fn fqe_fit(p: &FqeProblem, cfg: &FqeConfig, seed: u64) -> Result<FqeFit> {
    fit(p, cfg, seed, 1)
}

/// Quantile-regression FQE with `cfg.quantiles` outputs and the
/// quantile-Huber loss.
pub fn dist_fqe_fit(p: &FqeProblem, cfg: &FqeConfig, seed: u64) -> Result<FqeFit> {
    if cfg.quantiles < 2 {
        return Err(Error::InvalidArgument("distributional FQE needs at least 2 quantiles".into()));
    }
    fit(p, cfg, seed, cfg.quantiles)
}

/// Mean of `Q(s0, a0)` over initial rows of `tr`, with `a0` chosen by
/// `policy`.
pub fn estimate_v_pi(model: &FqeModel, tr: &Transitions, policy: &dyn Policy) -> Result<f64> {
    if tr.initial.is_empty() {
        return Err(Error::InvalidArgument("no initial states to evaluate".into()));
    }
    let s0 = tr.states.select_rows(&tr.initial);
    let a = policy.act_batch(&s0)?;
    initial_value(model, &s0, &a)
}

/// Mean of `Q(s0, a0)` with the dataset's first actions.
pub fn estimate_v_behavior(model: &FqeModel, tr: &Transitions) -> Result<f64> {
    if tr.initial.is_empty() {
        return Err(Error::InvalidArgument("no initial states to evaluate".into()));
    }
    let s0 = tr.states.select_rows(&tr.initial);
    let a = PolicyActions {
        cont: tr.cont.select_rows(&tr.initial),
        modes: tr.initial.iter().map(|&i| tr.modes[i]).collect(),
    };
    initial_value(model, &s0, &a)
}

fn initial_value(model: &FqeModel, s0: &Matrix, a: &PolicyActions) -> Result<f64> {
    let q = model.q(&critic_input(s0, &a.cont, &a.modes)?)?;
    Ok(q.iter().map(|&v| v as f64).sum::<f64>() / q.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot_row(parts: &[(usize, usize)]) -> Vec<f32> {
        let mut v = Vec::new();
        for &(i, n) in parts {
            let mut h = vec![0.0; n];
            h[i] = 1.0;
            v.extend(h);
        }
        v
    }

    /// `n` copies of one feature row.
    fn single_state(rewards: &[f32], dones: &[f32]) -> FqeProblem {
        let x = Matrix::filled(rewards.len(), 1, 1.0);
        FqeProblem::new(x.clone(), x, rewards.to_vec(), dones.to_vec()).unwrap()
    }

    fn small_cfg() -> FqeConfig {
        FqeConfig { steps: 3000, hidden: vec![16], lr: 3e-3, polyak: 0.05, ..FqeConfig::desk() }
    }

    #[test]
    fn myopic_limit_regresses_immediate_reward() {
        // two feature rows with different rewards, gamma 0
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let p = FqeProblem::new(x.clone(), x.clone(), vec![0.3, -1.2], vec![0.0, 0.0]).unwrap();
        let fit = fqe_fit(&p, &FqeConfig { gamma: 0.0, ..small_cfg() }, 1).unwrap();
        let q = fit.model.q(&x).unwrap();
        assert!((q[0] - 0.3).abs() < 1e-2 && (q[1] + 1.2).abs() < 1e-2, "{q:?}");
    }

    #[test]
    fn constant_reward_approaches_geometric_sum() {
        let x = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let p = FqeProblem::new(x.clone(), x.clone(), vec![0.5], vec![0.0]).unwrap();
        let gamma = 0.9;
        let fit = fqe_fit(&p, &FqeConfig { gamma, steps: 6000, ..small_cfg() }, 2).unwrap();
        let want = 0.5 / (1.0 - gamma) as f64;
        let got = fit.model.q(&x).unwrap()[0] as f64;
        assert!((got - want).abs() < 0.05 * want, "{got} vs {want}");
    }

    #[test]
    fn degenerate_distribution_collapses_quantiles() {
        let p = single_state(&[0.7; 4], &[1.0; 4]);
        let cfg = FqeConfig { quantiles: 8, ..small_cfg() };
        let fit = dist_fqe_fit(&p, &cfg, 3).unwrap();
        let q = fit.model.quantiles(&p.inputs.select_rows(&[0])).unwrap();
        assert!(q.data().iter().all(|v| (v - 0.7).abs() < 0.05), "{:?}", q.data());
    }

    #[test]
    fn bernoulli_reward_splits_quantiles() {
        let rewards: Vec<f32> = (0..20).map(|i| (i % 2) as f32).collect();
        let p = single_state(&rewards, &[1.0; 20]);
        let cfg = FqeConfig { quantiles: 10, kappa: 0.01, gamma: 1.0, steps: 4000, ..small_cfg() };
        let fit = dist_fqe_fit(&p, &cfg, 4).unwrap();
        let q = fit.model.quantiles(&p.inputs.select_rows(&[0])).unwrap();
        let (low, high) = q.data().split_at(5);
        assert!(low.iter().all(|v| v.abs() < 0.1), "{:?}", q.data());
        assert!(high.iter().all(|v| (v - 1.0).abs() < 0.1), "{:?}", q.data());
    }

    #[test]
    fn fit_reduces_bellman_residual() {
        let rows: Vec<Vec<f32>> = (0..6).map(|s| one_hot_row(&[(s, 6)])).collect();
        let next: Vec<Vec<f32>> = (0..6).map(|s| one_hot_row(&[((s + 1) % 6, 6)])).collect();
        let p = FqeProblem::new(
            Matrix::from_rows(&rows).unwrap(),
            Matrix::from_rows(&next).unwrap(),
            (0..6).map(|s| s as f32 * 0.2).collect(),
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let cfg = FqeConfig { gamma: 0.8, ..small_cfg() };
        let before = fqe_fit(&p, &FqeConfig { steps: 1, ..cfg.clone() }, 5).unwrap();
        let after = fqe_fit(&p, &cfg, 5).unwrap();
        assert!(after.model.bellman_residual(&p).unwrap() < before.model.bellman_residual(&p).unwrap());
    }

    /// Five states, two actions, deterministic moves `s -> (s + a + 1) % 5`;
    /// leaving state 4 ends the episode.
    struct Chain;

    impl Chain {
        const GAMMA: f64 = 0.9;

        fn policy(s: usize) -> usize {
            s % 2
        }

        fn step(s: usize, a: usize) -> (f64, usize, bool) {
            (0.1 * s as f64 - 0.2 * a as f64 + 0.05, (s + a + 1) % 5, s == 4)
        }

        fn value_iteration() -> [[f64; 2]; 5] {
            let mut q = [[0.0; 2]; 5];
            for _ in 0..2000 {
                let prev = q;
                for (s, row) in q.iter_mut().enumerate() {
                    for (a, v) in row.iter_mut().enumerate() {
                        let (r, n, done) = Self::step(s, a);
                        *v = r + if done { 0.0 } else { Self::GAMMA * prev[n][Self::policy(n)] };
                    }
                }
            }
            q
        }

        fn problem() -> FqeProblem {
            let (mut x, mut xn, mut r, mut d) = (vec![], vec![], vec![], vec![]);
            for s in 0..5 {
                for a in 0..2 {
                    let (rew, n, done) = Self::step(s, a);
                    x.push(one_hot_row(&[(s, 5), (a, 2)]));
                    xn.push(one_hot_row(&[(n, 5), (Self::policy(n), 2)]));
                    r.push(rew as f32);
                    d.push(if done { 1.0 } else { 0.0 });
                }
            }
            FqeProblem::new(Matrix::from_rows(&x).unwrap(), Matrix::from_rows(&xn).unwrap(), r, d).unwrap()
        }
    }

    fn chain_cfg() -> FqeConfig {
        FqeConfig { gamma: Chain::GAMMA as f32, steps: 6000, hidden: vec![32], lr: 3e-3, polyak: 0.05, ..FqeConfig::desk() }
    }

    #[test]
    fn tabular_values_match_value_iteration() {
        let q = Chain::value_iteration();
        let p = Chain::problem();
        let fit = fqe_fit(&p, &chain_cfg(), 7).unwrap();
        let got = fit.model.q(&p.inputs).unwrap();
        for s in 0..5 {
            for a in 0..2 {
                let g = got[s * 2 + a] as f64;
                assert!((g - q[s][a]).abs() < 1e-2, "Q({s},{a}) = {g}, want {}", q[s][a]);
            }
        }
    }

    #[test]
    fn tabular_quantile_means_match_value_iteration() {
        let q = Chain::value_iteration();
        let p = Chain::problem();
        let fit = dist_fqe_fit(&p, &FqeConfig { quantiles: 32, ..chain_cfg() }, 8).unwrap();
        let got = fit.model.q(&p.inputs).unwrap();
        for s in 0..5 {
            let i = s * 2 + Chain::policy(s);
            assert!((got[i] as f64 - q[s][Chain::policy(s)]).abs() < 5e-2, "V({s}) = {}", got[i]);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let x = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let p = FqeProblem::new(x.clone(), x, vec![1e6], vec![0.0]).unwrap();
        let cfg = FqeConfig { gamma: 1.0, divergence_limit: 1e3, ..small_cfg() };
        assert!(matches!(fqe_fit(&p, &cfg, 6), Err(Error::FqeDiverged(_))));
    }
}
