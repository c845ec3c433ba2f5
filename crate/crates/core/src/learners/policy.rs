use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::Algo;
use crate::action_space::{gather_q_values_t, ReconMethod, RestrictedActionSpace};
use crate::data::schema::{act, Mode, N_CONT, N_STATE};
use crate::data::{denormalize_action, normalize_action, HybridAction};
use crate::error::{Error, Result};
use crate::nn::{softmax_rows, Checkpoint, GaussianHead, Matrix, Mlp, MlpCache, ParamSet};
use crate::rng::stream_rng;

/// Actions for a batch of states: continuous settings in normalized
/// `[-1, 1]` coordinates and mode indices.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyActions {
    pub cont: Matrix,
    pub modes: Vec<usize>,
}

impl PolicyActions {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn from_hybrid(actions: &[HybridAction]) -> Result<Self> {
        let mut cont = Vec::with_capacity(actions.len() * N_CONT);
        for a in actions {
            cont.extend_from_slice(&normalize_action(&a.continuous()));
        }
        Ok(PolicyActions {
            cont: Matrix::from_vec(actions.len(), N_CONT, cont)?,
            modes: actions.iter().map(|a| a.mode.index()).collect(),
        })
    }

    /// Sets driving pressure under volume control to its inactive encoding,
    /// so rows describe the settings actually applied.
    pub fn mask_inactive(mut self) -> Self {
        for r in 0..self.len() {
            if self.modes[r] == Mode::Vcv.index() {
                self.cont.set(r, act::DP, -1.0);
            }
        }
        self
    }

    /// Denormalized settings; ΔP is dropped under volume control.
    pub fn to_hybrid(&self) -> Result<Vec<HybridAction>> {
        (0..self.len())
            .map(|r| {
                let z: [f32; N_CONT] = self.cont.row(r).try_into().unwrap();
                Ok(HybridAction::from_parts(Mode::from_index(self.modes[r])?, denormalize_action(&z)))
            })
            .collect()
    }
}

/// A deterministic state-to-action map over normalized states.
pub trait Policy: Send + Sync {
    fn act_batch(&self, states: &Matrix) -> Result<PolicyActions>;
}

pub fn mode_one_hot(modes: &[usize]) -> Matrix {
    let mut m = Matrix::zeros(modes.len(), Mode::COUNT);
    for (r, &k) in modes.iter().enumerate() {
        m.set(r, k, 1.0);
    }
    m
}

/// Shared-trunk actor with a Gaussian head over the five settings and a
/// categorical head over modes.
///
/// With a global `log_std` (IQL) the network emits `[mean; logits]` and the
/// Gaussian mean is `tanh(mean)`. Otherwise (EDAC) it emits
/// `[mu; log_sigma; logits]` and samples are squashed by `tanh`.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridPolicy {
    pub net: Mlp,
    pub log_std: Option<Matrix>,
    pub bounds: (f32, f32),
}

/// Per-row head outputs. `log_std` is clamped; `std_free` marks entries
/// whose unclamped value lies inside the bounds.
#[derive(Clone, Debug)]
pub struct PolicyHead {
    pub mean: Matrix,
    pub log_std: Matrix,
    pub std_free: Vec<bool>,
    pub logits: Matrix,
}

impl HybridPolicy {
    pub fn iql<R: Rng + ?Sized>(hidden: &[usize], rng: &mut R) -> Self {
        HybridPolicy {
            net: Mlp::new(&sizes(hidden, N_CONT + Mode::COUNT), rng),
            log_std: Some(Matrix::zeros(1, N_CONT)),
            bounds: GaussianHead::IQL_LOG_STD,
        }
    }

    pub fn edac<R: Rng + ?Sized>(hidden: &[usize], rng: &mut R) -> Self {
        HybridPolicy {
            net: Mlp::new(&sizes(hidden, 2 * N_CONT + Mode::COUNT), rng),
            log_std: None,
            bounds: GaussianHead::EDAC_LOG_STD,
        }
    }

    pub fn is_state_dependent(&self) -> bool {
        self.log_std.is_none()
    }

    pub fn head(&self, out: &Matrix) -> Result<PolicyHead> {
        let b = out.rows();
        let (lo, hi) = self.bounds;
        let mean = out.columns(0, N_CONT)?;
        let (raw_std, logits) = match &self.log_std {
            Some(ls) => {
                let mut m = Matrix::zeros(b, N_CONT);
                for r in 0..b {
                    m.row_mut(r).copy_from_slice(ls.row(0));
                }
                (m, out.columns(N_CONT, Mode::COUNT)?)
            }
            None => (out.columns(N_CONT, N_CONT)?, out.columns(2 * N_CONT, Mode::COUNT)?),
        };
        let std_free = raw_std.data().iter().map(|&v| v >= lo && v <= hi).collect();
        Ok(PolicyHead { mean, log_std: raw_std.map(|v| v.clamp(lo, hi)), std_free, logits })
    }

    pub fn forward(&self, states: &Matrix) -> Result<(PolicyHead, MlpCache)> {
        let (out, cache) = self.net.forward(states)?;
        Ok((self.head(&out)?, cache))
    }

    /// Mode-of-distribution actions: `tanh(mean)` and the argmax mode.
    pub fn deterministic(&self, states: &Matrix) -> Result<PolicyActions> {
        let head = self.head(&self.net.predict(states)?)?;
        Ok(PolicyActions {
            cont: head.mean.map(f32::tanh),
            modes: (0..states.rows()).map(|r| argmax(head.logits.row(r))).collect(),
        })
    }

    /// Sampled actions. IQL samples around `tanh(mean)` and clips to
    /// `[-1, 1]`; EDAC squashes the Gaussian sample.
    pub fn sample<R: Rng + ?Sized>(&self, states: &Matrix, rng: &mut R) -> Result<PolicyActions> {
        let head = self.head(&self.net.predict(states)?)?;
        let probs = softmax_rows(&head.logits);
        let mut cont = Matrix::zeros(states.rows(), N_CONT);
        let mut modes = Vec::with_capacity(states.rows());
        for r in 0..states.rows() {
            for k in 0..N_CONT {
                let e: f32 = StandardNormal.sample(rng);
                let m = head.mean.get(r, k);
                let s = head.log_std.get(r, k).exp();
                let v = if self.is_state_dependent() { (m + s * e).tanh() } else { (m.tanh() + s * e).clamp(-1.0, 1.0) };
                cont.set(r, k, v);
            }
            modes.push(sample_categorical(probs.row(r), rng.random()));
        }
        Ok(PolicyActions { cont, modes })
    }

    /// One denormalized action for a normalized state.
    pub fn act<R: Rng + ?Sized>(&self, state: &[f32], deterministic: bool, rng: &mut R) -> Result<HybridAction> {
        if state.len() != self.net.input_dim() {
            return Err(Error::dim("HybridPolicy::act", self.net.input_dim(), state.len()));
        }
        let s = Matrix::from_vec(1, state.len(), state.to_vec())?;
        let a = if deterministic { self.deterministic(&s)? } else { self.sample(&s, rng)? };
        Ok(a.to_hybrid()?.remove(0))
    }

    pub fn zeros_like(&self) -> Self {
        HybridPolicy {
            net: self.net.zeros_like(),
            log_std: self.log_std.as_ref().map(|m| Matrix::zeros(m.rows(), m.cols())),
            bounds: self.bounds,
        }
    }

    pub fn push_to(&self, ck: &mut Checkpoint) {
        ck.push_mlp("actor", &self.net);
        if let Some(ls) = &self.log_std {
            ck.push("actor.log_std", ls);
        }
    }
}

impl Policy for HybridPolicy {
    fn act_batch(&self, states: &Matrix) -> Result<PolicyActions> {
        Ok(self.deterministic(states)?.mask_inactive())
    }
}

impl ParamSet for HybridPolicy {
    fn tensors(&self) -> Vec<&Matrix> {
        let mut t = self.net.tensors();
        t.extend(self.log_std.as_ref());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut t = self.net.tensors_mut();
        t.extend(self.log_std.as_mut());
        t
    }
}

pub(crate) fn sizes(hidden: &[usize], out: usize) -> Vec<usize> {
    sizes_from(N_STATE, hidden, out)
}

pub(crate) fn sizes_from(input: usize, hidden: &[usize], out: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(out);
    s
}

pub(crate) fn argmax(row: &[f32]) -> usize {
    row.iter().enumerate().fold(0, |b, (i, &v)| if v > row[b] { i } else { b })
}

/// Inverse-CDF draw given `u` in `[0, 1)`.
pub(crate) fn sample_categorical(probs: &[f32], u: f32) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Greedy policy of a factored critic pair: argmax of `min(Q1, Q2)` over
/// the restricted combinations, mapped to settings by bin modes.
#[derive(Clone, Debug)]
pub struct FactoredPolicy {
    pub critics: [Mlp; 2],
    pub space: RestrictedActionSpace,
}

impl FactoredPolicy {
    /// Index into the restricted space per state row.
    pub fn greedy(&self, states: &Matrix) -> Result<Vec<usize>> {
        let q1 = gather_q_values_t(&self.critics[0].predict(states)?.transpose(), &self.space)?;
        let q2 = gather_q_values_t(&self.critics[1].predict(states)?.transpose(), &self.space)?;
        let mut best = vec![(f32::NEG_INFINITY, 0usize); states.rows()];
        for c in 0..q1.rows() {
            for ((b, &x), &y) in best.iter_mut().zip(q1.row(c)).zip(q2.row(c)) {
                let v = x.min(y);
                if v > b.0 {
                    *b = (v, c);
                }
            }
        }
        Ok(best.into_iter().map(|(_, c)| c).collect())
    }
}

impl Policy for FactoredPolicy {
    fn act_batch(&self, states: &Matrix) -> Result<PolicyActions> {
        // bin-mode reconstruction draws no random numbers
        let mut rng = stream_rng(0, 0);
        let actions: Vec<HybridAction> = self
            .greedy(states)?
            .into_iter()
            .map(|i| self.space.reconstruct(&self.space.combos()[i], ReconMethod::BinMode, &mut rng))
            .collect::<Result<_>>()?;
        PolicyActions::from_hybrid(&actions)
    }
}

/// Uniformly random settings and modes, reproducible per state row order.
#[derive(Clone, Debug)]
pub struct UniformPolicy {
    pub seed: u64,
}

impl Policy for UniformPolicy {
    fn act_batch(&self, states: &Matrix) -> Result<PolicyActions> {
        let mut rng = stream_rng(self.seed, crate::rng::stream::EVAL);
        let n = states.rows();
        let cont = Matrix::from_vec(n, N_CONT, (0..n * N_CONT).map(|_| rng.random_range(-1.0..=1.0)).collect())?;
        let modes = (0..n).map(|_| rng.random_range(0..Mode::COUNT)).collect();
        Ok(PolicyActions { cont, modes }.mask_inactive())
    }
}

/// Rebuilds the deterministic policy stored in a checkpoint. FactoredCQL
/// checkpoints need the restricted space they were trained on.
pub fn load_policy(ck: &Checkpoint, space: Option<&RestrictedActionSpace>) -> Result<Box<dyn Policy>> {
    let algo: Algo = ck
        .meta_value("algo")
        .ok_or_else(|| Error::InvalidArgument("checkpoint has no `algo` entry".into()))?
        .parse()?;
    Ok(match algo {
        Algo::FactoredCql => {
            let space = space
                .ok_or_else(|| Error::InvalidArgument("FactoredCQL policy needs its action space".into()))?
                .clone();
            let stored = ck.get("action_space")?;
            if stored.rows() != space.len() {
                return Err(Error::InvalidArgument(format!(
                    "checkpoint was trained on {} combinations, space has {}",
                    stored.rows(),
                    space.len()
                )));
            }
            Box::new(FactoredPolicy { critics: [ck.mlp("critic1")?, ck.mlp("critic2")?], space })
        }
        Algo::HybridIql => Box::new(HybridPolicy {
            net: ck.mlp("actor")?,
            log_std: Some(ck.get("actor.log_std")?.clone()),
            bounds: GaussianHead::IQL_LOG_STD,
        }),
        Algo::HybridEdac => Box::new(HybridPolicy {
            net: ck.mlp("actor")?,
            log_std: None,
            bounds: GaussianHead::EDAC_LOG_STD,
        }),
    })
}
