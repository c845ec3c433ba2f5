//! Drive every command-line stage from code with a small configuration:
//! generate, train two learners, evaluate, select and report.
//!
//! cargo run --release --example run_pipeline -- [out_dir]

use ventrl::kv::KvFile;
use ventrl::learners::Algo;
use ventrl::pipeline::{cmd_eval, cmd_gen, cmd_report, cmd_select, cmd_train, Overrides, RunConfig, Workspace};

const CONFIG: &str = "
seed = 1
gen.n_patients = 200
train.steps = 2000
train.checkpoint_interval = 200
fqe.steps = 1000
coverage.steps = 2000
eval.distributional = false
";

fn main() -> ventrl::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("ventrl-run").display().to_string());
    let ws = Workspace::new(&out);
    let base = KvFile::parse(CONFIG)?;
    let cfg = RunConfig::resolve(Some(base.clone()), &Overrides::default())?;
    cmd_gen(&cfg, &ws)?;
    for algo in [Algo::HybridIql, Algo::FactoredCql] {
        let flags = Overrides { algo: Some(algo), ..Default::default() };
        let out = cmd_train(&RunConfig::resolve(Some(base.clone()), &flags)?, &ws)?;
        println!("{algo}: {} checkpoints", out.checkpoints.len());
    }
    let flags = Overrides { reconstruction_study: true, jobs: Some(2), ..Default::default() };
    let report = cmd_eval(&RunConfig::resolve(Some(base), &flags)?, &ws)?;
    print!("{}", report.to_text());
    cmd_select(&cfg, &ws)?;
    cmd_report(&cfg, &ws)?;
    println!("\nartifacts in {out}");
    Ok(())
}
