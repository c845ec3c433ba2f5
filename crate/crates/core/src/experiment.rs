//! The standard path from episodes to training inputs: split, reward
//! annotation, normalization statistics, transitions and the restricted
//! action space.

use crate::action_space::{BinSpec, RestrictedActionSpace};
use crate::data::split::select;
use crate::data::{stratified_split, Episode, NormStats, Split, Transitions};
use crate::error::{Error, Result};
use crate::learners::{critic_input, load_policy, train, Algo, TrainConfig};
use crate::ope::{fqe_fit, reward_effectiveness, Effectiveness, FqeConfig, FqeProblem};
use crate::rewards::{annotate_rewards, RewardConfig};
use crate::synth::{generate, GeneratorConfig};

pub const TEST_FRACTION: f64 = 0.2;

/// Split episodes plus everything derived from the training split.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub episodes: Vec<Episode>,
    pub stats: NormStats,
    pub space: RestrictedActionSpace,
    pub train: Transitions,
    pub test: Transitions,
}

impl Prepared {
    /// Annotates rewards, splits untagged episodes, fits statistics on the
    /// training split and builds transitions for both splits.
    pub fn new(mut episodes: Vec<Episode>, rewards: &RewardConfig, seed: u64) -> Result<Self> {
        annotate_rewards(&mut episodes, rewards)?;
        if episodes.iter().any(|e| e.split.is_none()) {
            stratified_split(&mut episodes, TEST_FRACTION, seed)?;
        }
        let stats = NormStats::fit(&episodes)?;
        let train_eps = select(&episodes, Split::Train);
        let test_eps = select(&episodes, Split::Test);
        if train_eps.is_empty() || test_eps.is_empty() {
            return Err(Error::InvalidArgument("both splits need at least one episode".into()));
        }
        let train = Transitions::build(&train_eps, &stats)?;
        let test = Transitions::build(&test_eps, &stats)?;
        let space = RestrictedActionSpace::build(&train.actions, BinSpec::default(), false)?;
        Ok(Prepared { episodes, stats, space, train, test })
    }

    /// Simulated cohort prepared with `rewards`. The split uses the
    /// generator seed.
    pub fn synthetic(cfg: &GeneratorConfig, rewards: &RewardConfig) -> Result<Self> {
        let (episodes, report) = generate(cfg)?;
        if !report.rejected.is_empty() {
            return Err(Error::EpisodeRejected(report.rejected.join("; ")));
        }
        Self::new(episodes, rewards, cfg.seed)
    }

    /// Same episodes and split under a different reward.
    pub fn with_rewards(&self, rewards: &RewardConfig) -> Result<Self> {
        Self::new(self.episodes.clone(), rewards, 0)
    }

    /// Test episodes, in the order of `test.episode` indices.
    pub fn test_episodes(&self) -> Vec<&Episode> {
        select(&self.episodes, Split::Test)
    }
}

/// Trains HybridIQL under `rewards` and correlates the evaluated
/// `Q(s, pi(s))` of its final policy with range rewards and episode length
/// on the test split. Episodes keep their split tags.
pub fn reward_study(
    episodes: &[Episode],
    rewards: &RewardConfig,
    train_cfg: &TrainConfig,
    fqe: &FqeConfig,
    seed: u64,
) -> Result<Effectiveness> {
    let prep = Prepared::new(episodes.to_vec(), rewards, seed)?;
    let out = train(Algo::HybridIql, &prep.train, &prep.space, train_cfg, seed)?;
    let last = out.checkpoints.last().ok_or_else(|| Error::InvalidArgument("no checkpoints written".into()))?;
    let policy = load_policy(last, None)?;
    let fit = fqe_fit(&FqeProblem::for_policy(&prep.train, policy.as_ref())?, fqe, seed)?;
    let a = policy.act_batch(&prep.test.states)?;
    let q = fit.model.q(&critic_input(&prep.test.states, &a.cont, &a.modes)?)?;
    reward_effectiveness(&q, &prep.test, &prep.test_episodes(), &rewards.range)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub w_vfd: f64,
    pub seed: u64,
    pub effectiveness: Effectiveness,
}

/// [`reward_study`] under terminal VFD rewards for every weight and seed.
pub fn vfd_sweep(
    episodes: &[Episode],
    weights: &[f64],
    seeds: &[u64],
    train_cfg: &TrainConfig,
    fqe: &FqeConfig,
) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::with_capacity(weights.len() * seeds.len());
    for &w_vfd in weights {
        for &seed in seeds {
            let effectiveness = reward_study(episodes, &RewardConfig::vfd_terminal(w_vfd), train_cfg, fqe, seed)?;
            out.push(SweepPoint { w_vfd, seed, effectiveness });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn splits_are_patient_disjoint_and_rewards_set() {
        let cfg = GeneratorConfig { n_patients: 120, seed: 3, ..GeneratorConfig::default() };
        let p = Prepared::synthetic(&cfg, &RewardConfig::default()).unwrap();
        let train: HashSet<u64> =
            select(&p.episodes, Split::Train).iter().map(|e| e.patient_id).collect();
        let test: HashSet<u64> = p.test_episodes().iter().map(|e| e.patient_id).collect();
        assert!(train.is_disjoint(&test));
        assert_eq!(p.train.len() + p.test.len(), p.episodes.iter().map(|e| e.len()).sum::<usize>());
        let q = p.with_rewards(&RewardConfig::mortality()).unwrap();
        assert_eq!(q.test.len(), p.test.len());
        assert!(q.train.rewards.iter().all(|&r| r == 0.0 || r.abs() == 100.0));
    }
}
