//! Annotate one simulated episode under each reward preset and print the
//! per-step components and the episode return.
//!
//! cargo run --example reward_annotation -- [seed]

use ventrl::rewards::{annotate_rewards, vfd, vfd_branch, RewardConfig};
use ventrl::synth::{generate, GeneratorConfig};

fn main() -> ventrl::Result<()> {
    let seed = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let (episodes, _) = generate(&GeneratorConfig { n_patients: 20, seed, ..GeneratorConfig::default() })?;
    let ep = episodes.iter().find(|e| e.len() >= 12).unwrap_or(&episodes[0]).clone();
    println!(
        "episode {} of patient {}: {} h, outcome {:?}, branch {}, VFD {:.2} days",
        ep.episode_id,
        ep.patient_id,
        ep.len(),
        ep.outcome,
        vfd_branch(&ep, 28.0)?.label(),
        vfd(&ep, 28.0)?
    );
    let presets = [
        ("vfd_step", RewardConfig::vfd_step(1.0)),
        ("vfd_terminal", RewardConfig::vfd_terminal(1.0)),
        ("mortality", RewardConfig::mortality()),
        ("mortality_with_ranges", RewardConfig::mortality_with_ranges()),
    ];
    for (name, cfg) in presets {
        let mut one = vec![ep.clone()];
        annotate_rewards(&mut one, &cfg)?;
        let steps = &one[0].steps;
        let total: f32 = steps.iter().map(|s| s.rewards.total()).sum();
        println!("\n{name}: return {total:.2}");
        println!("{:>4} {:>8} {:>8} {:>8}", "t", "range", "time", "outcome");
        for s in steps.iter().take(3).chain(steps.iter().skip(steps.len().saturating_sub(2).max(3))) {
            println!("{:>4} {:>8.3} {:>8.3} {:>8.3}", s.t, s.rewards.range, s.rewards.tp, s.rewards.outcome);
        }
    }
    Ok(())
}
