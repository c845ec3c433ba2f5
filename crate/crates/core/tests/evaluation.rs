use ventrl::experiment::Prepared;
use ventrl::learners::{load_policy, train, Algo, Policy, TrainConfig, UniformPolicy};
use ventrl::ope::{
    coverage_fit, coverage_score, dataset_actions, estimate_v_behavior, fqe_fit, reconstruction_study, CoverageConfig,
    FqeConfig, FqeProblem,
};
use ventrl::rewards::RewardConfig;
use ventrl::synth::GeneratorConfig;

fn cohort(n: usize, seed: u64) -> Prepared {
    let cfg = GeneratorConfig { n_patients: n, seed, ..GeneratorConfig::default() };
    Prepared::synthetic(&cfg, &RewardConfig::default()).unwrap()
}

fn coverage_cfg(steps: usize) -> CoverageConfig {
    CoverageConfig { steps, ..CoverageConfig::desk() }
}

#[test]
fn coverage_prefers_dataset_actions_over_uniform_ones() {
    let prep = cohort(300, 3);
    let fit = coverage_fit(&prep.train, &coverage_cfg(3000), 3).unwrap();
    let data = coverage_score(&fit.model, &prep.test.states, &dataset_actions(&prep.test)).unwrap();
    let uniform = UniformPolicy { seed: 3 }.act_batch(&prep.test.states).unwrap();
    let uni = coverage_score(&fit.model, &prep.test.states, &uniform).unwrap();
    assert!(data.d_pi > uni.d_pi, "dataset {} vs uniform {}", data.d_pi, uni.d_pi);
    assert!(data.disc > uni.disc);
}

#[test]
fn coverage_training_loss_decreases() {
    let prep = cohort(200, 4);
    let fit = coverage_fit(&prep.train, &coverage_cfg(2000), 4).unwrap();
    let w = fit.window_means(500);
    assert_eq!(w.len(), 4);
    assert!(w[3] < w[0], "{w:?}");
}

#[test]
fn behavior_value_matches_discounted_returns() {
    let prep = cohort(400, 6);
    let gamma = 0.9f64;
    let cfg = FqeConfig { gamma: gamma as f32, steps: 6000, ..FqeConfig::desk() };
    let fit = fqe_fit(&FqeProblem::for_behavior(&prep.train).unwrap(), &cfg, 6).unwrap();
    let estimate = estimate_v_behavior(&fit.model, &prep.test).unwrap();

    // Monte Carlo returns of the test episodes from their first step
    let tr = &prep.test;
    let mut returns = vec![0.0f64; tr.initial.len()];
    let mut discount = vec![1.0f64; tr.initial.len()];
    for (row, &ep) in tr.episode.iter().enumerate() {
        returns[ep] += discount[ep] * tr.rewards[row] as f64;
        discount[ep] *= gamma;
    }
    let mc = returns.iter().sum::<f64>() / returns.len() as f64;
    assert!((estimate - mc).abs() <= 0.1 * mc.abs() + 0.5, "FQE {estimate} vs Monte Carlo {mc}");
}

#[test]
fn reconstruction_study_reports_every_method() {
    let prep = cohort(150, 8);
    let ck = train(Algo::HybridIql, &prep.train, &prep.space, &TrainConfig { steps: 300, ..TrainConfig::desk() }, 8)
        .unwrap()
        .checkpoints
        .pop()
        .unwrap();
    let model = coverage_fit(&prep.train, &coverage_cfg(300), 8).unwrap().model;
    let policy = load_policy(&ck, None).unwrap();
    let study = reconstruction_study(policy.as_ref(), &model, &prep.test.states, &prep.space, 8).unwrap();
    let methods: Vec<&str> = study.rows.iter().map(|r| r.method).collect();
    assert_eq!(methods, ["none", "bin_mode", "gaussian_at_mode", "bin_mean", "uniform"]);
    let mut ranks: Vec<usize> = study.rows.iter().map(|r| r.rank).collect();
    ranks.sort();
    assert_eq!(ranks, [1, 2, 3, 4, 5]);
    assert!(study.rows.iter().all(|r| r.mismatches == 0));
    assert_eq!(study.states, prep.test.len());
}
