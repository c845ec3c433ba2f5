//! Off-policy evaluation: fitted Q-evaluation, the coverage density model,
//! checkpoint selection, reward-effectiveness correlations and the
//! reconstruction study.
//!
//! Evaluators are fitted on the training split. Values are read at the
//! first step of each test episode and coverage on test states.

pub mod coverage;
pub mod fqe;
pub mod recon;
pub mod report;
pub mod select;
pub mod stats;

pub use coverage::{coverage_fit, coverage_score, dataset_actions, CoverageConfig, CoverageFit, CoverageModel, CoverageScore};
pub use fqe::{dist_fqe_fit, estimate_v_behavior, estimate_v_pi, fqe_fit, FqeConfig, FqeFit, FqeModel, FqeProblem};
pub use recon::{reconstruction_study, ReconRow, ReconStudy};
pub use report::{EvalReport, PolicyEval, BEHAVIOR_LABEL, UNIFORM_LABEL};
pub use select::{select_policy, CheckpointMetrics, Selection};
pub use stats::{average_ranks, reward_effectiveness, spearman, Correlation, Effectiveness};

use crate::error::Result;
use crate::experiment::Prepared;
use crate::learners::{critic_input, Policy, Preset};
use crate::nn::Checkpoint;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub fqe: FqeConfig,
    pub coverage: CoverageConfig,
    /// Also fit the quantile evaluator.
    pub distributional: bool,
}

impl EvalConfig {
    pub fn paper() -> Self {
        EvalConfig { fqe: FqeConfig::paper(), coverage: CoverageConfig::paper(), distributional: true }
    }

    pub fn desk() -> Self {
        EvalConfig { fqe: FqeConfig::desk(), coverage: CoverageConfig::desk(), distributional: true }
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Paper => Self::paper(),
            Preset::Desk => Self::desk(),
        }
    }
}

/// Value and coverage estimates for one policy.
#[derive(Clone, Debug)]
pub struct PolicyMetrics {
    pub v_pi: f64,
    pub v_pi_dist: Option<f64>,
    pub coverage: CoverageScore,
    /// The least-squares evaluator, kept for per-step Q queries.
    pub fqe: FqeModel,
}

impl PolicyMetrics {
    /// `Q(s, pi(s))` on every test row.
    pub fn test_q(&self, prep: &Prepared, policy: &dyn Policy) -> Result<Vec<f32>> {
        let a = policy.act_batch(&prep.test.states)?;
        self.fqe.q(&critic_input(&prep.test.states, &a.cont, &a.modes)?)
    }
}

fn metrics(
    problem: &FqeProblem,
    value: impl Fn(&FqeModel) -> Result<f64>,
    coverage: CoverageScore,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<PolicyMetrics> {
    let fit = fqe_fit(problem, &cfg.fqe, seed)?;
    let v_pi = value(&fit.model)?;
    let v_pi_dist = if cfg.distributional {
        Some(value(&dist_fqe_fit(problem, &cfg.fqe, seed)?.model)?)
    } else {
        None
    };
    Ok(PolicyMetrics { v_pi, v_pi_dist, coverage, fqe: fit.model })
}

/// Fits the evaluators for `policy` on the training split and reads them
/// on the test split.
pub fn evaluate_policy(
    prep: &Prepared,
    policy: &dyn Policy,
    model: &CoverageModel,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<PolicyMetrics> {
    let problem = FqeProblem::for_policy(&prep.train, policy)?;
    let cover = coverage_score(model, &prep.test.states, &policy.act_batch(&prep.test.states)?)?;
    metrics(&problem, |m| estimate_v_pi(m, &prep.test, policy), cover, cfg, seed)
}

/// The dataset policy, with next actions taken from the data.
pub fn evaluate_behavior(prep: &Prepared, model: &CoverageModel, cfg: &EvalConfig, seed: u64) -> Result<PolicyMetrics> {
    let problem = FqeProblem::for_behavior(&prep.train)?;
    let cover = coverage_score(model, &prep.test.states, &dataset_actions(&prep.test))?;
    metrics(&problem, |m| estimate_v_behavior(m, &prep.test), cover, cfg, seed)
}

/// Stable identifier of a training checkpoint.
pub fn checkpoint_id(ck: &Checkpoint) -> String {
    let algo = ck.meta_value("algo").unwrap_or("policy");
    format!("{algo}-s{}-{:07}", ck.seed, ck.step)
}
