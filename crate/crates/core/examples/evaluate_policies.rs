//! Train HybridIQL, then estimate value and coverage for each checkpoint,
//! the dataset policy and a uniform-random policy, select a checkpoint and
//! run the reconstruction study on it.
//!
//! cargo run --release --example evaluate_policies -- [train_steps] [seed] [fqe_steps]

use std::time::Instant;

use ventrl::experiment::Prepared;
use ventrl::learners::{load_policy, train, Algo, TrainConfig, UniformPolicy};
use ventrl::ope::{
    checkpoint_id, coverage_fit, evaluate_behavior, evaluate_policy, reconstruction_study, reward_effectiveness,
    select_policy, CheckpointMetrics, EvalConfig, EvalReport, PolicyEval, PolicyMetrics, BEHAVIOR_LABEL,
    UNIFORM_LABEL,
};
use ventrl::rewards::RewardConfig;
use ventrl::synth::GeneratorConfig;

fn row(policy: &str, seed: u64, checkpoint: &str, step: u64, m: &PolicyMetrics) -> PolicyEval {
    PolicyEval {
        policy: policy.into(),
        seed,
        checkpoint: checkpoint.into(),
        step,
        v_pi: m.v_pi,
        v_pi_dist: m.v_pi_dist,
        coverage: m.coverage,
    }
}

fn main() -> ventrl::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(10_000);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let fqe_steps: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(5_000);

    let data = Prepared::synthetic(&GeneratorConfig { seed, ..GeneratorConfig::default() }, &RewardConfig::default())?;
    let mut eval = EvalConfig::desk();
    eval.fqe.steps = fqe_steps;

    let t = Instant::now();
    let cfg = TrainConfig { steps, checkpoint_interval: (steps / 10).max(1), ..TrainConfig::desk() };
    let out = train(Algo::HybridIql, &data.train, &data.space, &cfg, seed)?;
    println!("trained {} checkpoints in {:.1?}", out.checkpoints.len(), t.elapsed());

    let t = Instant::now();
    let cover = coverage_fit(&data.train, &eval.coverage, seed)?;
    let w = cover.window_means(500);
    println!("coverage model fitted in {:.1?}, NLL by 500 steps: {:.2?}", t.elapsed(), w);

    let mut report = EvalReport { seed, ..Default::default() };
    let t = Instant::now();
    let behavior = evaluate_behavior(&data, &cover.model, &eval, seed)?;
    report.rows.push(row(BEHAVIOR_LABEL, seed, "dataset", 0, &behavior));
    let uniform = evaluate_policy(&data, &UniformPolicy { seed }, &cover.model, &eval, seed)?;
    report.rows.push(row(UNIFORM_LABEL, seed, "uniform", 0, &uniform));

    let mut metrics = Vec::new();
    for ck in &out.checkpoints {
        let policy = load_policy(ck, Some(&data.space))?;
        let m = evaluate_policy(&data, policy.as_ref(), &cover.model, &eval, seed)?;
        let id = checkpoint_id(ck);
        report.rows.push(row(Algo::HybridIql.label(), seed, &id, ck.step, &m));
        metrics.push((CheckpointMetrics { id, step: ck.step, v_pi: m.v_pi, d_pi: m.coverage.d_pi }, m));
    }
    println!("evaluated {} policies in {:.1?}", report.rows.len(), t.elapsed());

    let listed: Vec<CheckpointMetrics> = metrics.iter().map(|(c, _)| c.clone()).collect();
    let selection = select_policy(&listed)?;
    let chosen = &out.checkpoints[selection.index];
    let policy = load_policy(chosen, Some(&data.space))?;
    let q = metrics[selection.index].1.test_q(&data, policy.as_ref())?;
    let eff = reward_effectiveness(&q, &data.test, &data.test_episodes(), &RewardConfig::default().range)?;
    report.effectiveness.push((Algo::HybridIql.label().into(), selection.id.clone(), eff));
    let study = reconstruction_study(policy.as_ref(), &cover.model, &data.test.states, &data.space, seed)?;
    report.reconstruction = Some((selection.id.clone(), study));
    report.selections.push((Algo::HybridIql.label().into(), selection));

    print!("{}", report.to_text());
    Ok(())
}
