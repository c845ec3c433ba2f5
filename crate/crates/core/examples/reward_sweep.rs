//! Train HybridIQL under terminal VFD rewards of increasing weight and
//! report how well its value estimates track range rewards.
//!
//! cargo run --release --example reward_sweep -- [train_steps] [seeds] [fqe_steps]

use ventrl::experiment::{vfd_sweep, Prepared};
use ventrl::learners::TrainConfig;
use ventrl::ope::FqeConfig;
use ventrl::rewards::RewardConfig;
use ventrl::synth::GeneratorConfig;

fn main() -> ventrl::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(3000);
    let n_seeds: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(2);
    let fqe_steps: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(3000);

    let data = Prepared::synthetic(&GeneratorConfig::default(), &RewardConfig::default())?;
    let train = TrainConfig { steps, checkpoint_interval: steps, ..TrainConfig::desk() };
    let fqe = FqeConfig { steps: fqe_steps, ..FqeConfig::desk() };
    let seeds: Vec<u64> = (0..n_seeds).collect();
    let points = vfd_sweep(&data.episodes, &[0.0, 0.5, 1.0, 2.0, 5.0], &seeds, &train, &fqe)?;
    println!("{:>6} {:>5} {:>10} {:>10}", "w_vfd", "seed", "rho_range", "rho_len");
    for p in &points {
        println!(
            "{:>6} {:>5} {:>10.3} {:>10.3}",
            p.w_vfd, p.seed, p.effectiveness.range.rho, p.effectiveness.length.rho
        );
    }
    Ok(())
}
