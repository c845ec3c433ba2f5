//! Discretize a trained HybridIQL policy, map the bins back to settings
//! with each reconstruction method and compare coverage.
//!
//! cargo run --release --example reconstruction_study -- [train_steps] [seed] [coverage_steps] [log_var_min]

use ventrl::experiment::Prepared;
use ventrl::learners::{load_policy, train, Algo, TrainConfig};
use ventrl::ope::{coverage_fit, reconstruction_study, CoverageConfig};
use ventrl::rewards::RewardConfig;
use ventrl::synth::GeneratorConfig;

fn main() -> ventrl::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(5_000);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let cover_steps: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(CoverageConfig::desk().steps);
    let log_var_min: f32 = args.next().and_then(|a| a.parse().ok()).unwrap_or(CoverageConfig::desk().log_var_min);

    let data = Prepared::synthetic(&GeneratorConfig { seed, ..GeneratorConfig::default() }, &RewardConfig::default())?;
    let cfg = TrainConfig { steps, ..TrainConfig::desk() };
    let out = train(Algo::HybridIql, &data.train, &data.space, &cfg, seed)?;
    let last = out.checkpoints.last().expect("training writes a final checkpoint");
    let policy = load_policy(last, None)?;
    let cover = coverage_fit(&data.train, &CoverageConfig { steps: cover_steps, log_var_min, ..CoverageConfig::desk() }, seed)?;
    let w: Vec<String> = cover.window_means(cover_steps / 10).iter().map(|v| format!("{v:.2}")).collect();
    println!("coverage NLL by tenths of training: {}", w.join(" "));
    let study = reconstruction_study(policy.as_ref(), &cover.model, &data.test.states, &data.space, seed)?;
    print!("{}", study.to_text());
    Ok(())
}
