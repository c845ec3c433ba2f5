//! Build the restricted action space of a simulated cohort and map one of
//! its bin combinations back to settings with every reconstruction method.
//!
//! cargo run --example restricted_action_space -- [n_patients] [seed]

use ventrl::action_space::{discretize, BinSpec, ReconMethod, RestrictedActionSpace};
use ventrl::data::Step;
use ventrl::rng::{stream, stream_rng};
use ventrl::synth::{generate, GeneratorConfig};

fn main() -> ventrl::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_patients = args.next().and_then(|a| a.parse().ok()).unwrap_or(300);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let (episodes, _) = generate(&GeneratorConfig { n_patients, seed, ..GeneratorConfig::default() })?;
    let actions = episodes.iter().flat_map(|e| &e.steps).map(Step::hybrid_action).collect::<ventrl::Result<Vec<_>>>()?;

    let spec = BinSpec::default();
    println!("full factored space: {} combinations, one-hot width {}", spec.full_size(), spec.width());
    let space = RestrictedActionSpace::build(&actions, spec, false)?;
    println!("restricted space from {} actions: {} combinations", actions.len(), space.len());

    let source = actions[actions.len() / 2];
    let bins = discretize(&source, space.spec(), space.mask_vt())?;
    println!("\nsource {source:?}\nbins {bins}");
    let mut rng = stream_rng(seed, stream::RECONSTRUCT);
    for method in ReconMethod::ALL {
        let a = space.reconstruct(&bins, method, &mut rng)?;
        println!("{:<18} {:?}", method.label(), a.continuous());
    }
    Ok(())
}
