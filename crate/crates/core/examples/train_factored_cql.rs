//! Train FactoredCQL on a simulated cohort with the desk preset.
//!
//! cargo run --release --example train_factored_cql -- [steps] [seed]

use std::time::Instant;

use ventrl::experiment::Prepared;
use ventrl::learners::{train, Algo, TrainConfig};
use ventrl::rewards::RewardConfig;
use ventrl::synth::GeneratorConfig;

fn main() -> ventrl::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps = args.next().and_then(|a| a.parse().ok()).unwrap_or(20_000);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let data = Prepared::synthetic(&GeneratorConfig { seed, ..GeneratorConfig::default() }, &RewardConfig::default())?;
    let cfg = TrainConfig { steps, ..TrainConfig::desk() };
    let t = Instant::now();
    let out = train(Algo::FactoredCql, &data.train, &data.space, &cfg, seed)?;
    println!("{} steps in {:.1?}, {} checkpoints", steps, t.elapsed(), out.checkpoints.len());
    print!("{}", out.log.to_csv().lines().step_by(20).collect::<Vec<_>>().join("\n"));
    println!();
    Ok(())
}
