//! Simulate a cohort and print its coverage summary.
//!
//! cargo run --example generate_cohort -- [n_patients] [seed]

use ventrl::data::Outcome;
use ventrl::synth::{coverage_report, generate, GeneratorConfig};

fn main() -> ventrl::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_patients = args.next().and_then(|a| a.parse().ok()).unwrap_or(500);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let cfg = GeneratorConfig { n_patients, seed, ..GeneratorConfig::default() };
    let (episodes, report) = generate(&cfg)?;
    println!(
        "{} episodes from {} patients ({} rejected, {} short segments dropped)",
        episodes.len(),
        n_patients,
        report.rejected.len(),
        report.discarded_short
    );
    let mean_h = episodes.iter().map(|e| e.len()).sum::<usize>() as f64 / episodes.len() as f64;
    let died = episodes.iter().filter(|e| e.died()).count();
    let reint = episodes.iter().filter(|e| e.outcome == Outcome::Reintubated).count();
    println!("mean length {mean_h:.1} h, {died} with recorded death, {reint} reintubated");
    print!("{}", coverage_report(&episodes, 28.0)?.to_text());
    Ok(())
}
