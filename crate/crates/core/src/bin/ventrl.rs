use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ventrl::kv::KvFile;
use ventrl::learners::{Algo, Preset};
use ventrl::pipeline::{cmd_eval, cmd_gen, cmd_preprocess, cmd_report, cmd_select, cmd_train, Overrides, RunConfig, Workspace};

#[derive(Parser)]
#[command(name = "ventrl", version, about = "Offline RL for mechanical-ventilation control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// `key = value` configuration file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for all inputs and outputs of the run.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// Primary input of the stage, replacing the file in `--out`.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    preset: Option<PresetArg>,
    #[arg(long, global = true, value_enum)]
    algo: Option<AlgoArg>,
    /// Threads for checkpoint evaluation.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Cohort size for `gen`.
    #[arg(long, global = true)]
    patients: Option<usize>,
    /// Score the selected policy after bin round trips in `eval`.
    #[arg(long, global = true)]
    reconstruction_study: bool,
    /// Run the VFD-weight sweep in `report`.
    #[arg(long, global = true)]
    sweep: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate a cohort and write raw records and episodes.
    Gen,
    /// Turn raw records into the episode file.
    Preprocess,
    /// Train one learner and write checkpoints.
    Train,
    /// Evaluate checkpoints and reference policies.
    Eval,
    /// Select a checkpoint per learner from `eval.csv`.
    Select,
    /// Action histograms and the optional reward-weight sweep.
    Report,
}

#[derive(ValueEnum, Clone, Copy)]
enum PresetArg {
    Paper,
    Desk,
}

#[derive(ValueEnum, Clone, Copy)]
enum AlgoArg {
    FactoredCql,
    HybridIql,
    HybridEdac,
}

fn run(cli: Cli) -> ventrl::Result<()> {
    let file = cli.config.as_deref().map(KvFile::load).transpose()?;
    let flags = Overrides {
        seed: cli.seed,
        preset: cli.preset.map(|p| match p {
            PresetArg::Paper => Preset::Paper,
            PresetArg::Desk => Preset::Desk,
        }),
        algo: cli.algo.map(|a| match a {
            AlgoArg::FactoredCql => Algo::FactoredCql,
            AlgoArg::HybridIql => Algo::HybridIql,
            AlgoArg::HybridEdac => Algo::HybridEdac,
        }),
        jobs: cli.jobs,
        patients: cli.patients,
        reconstruction_study: cli.reconstruction_study,
        sweep: cli.sweep,
    };
    let cfg = RunConfig::resolve(file, &flags)?;
    let ws = Workspace { out: cli.out, data: cli.data };
    match cli.command {
        Command::Gen => cmd_gen(&cfg, &ws),
        Command::Preprocess => cmd_preprocess(&cfg, &ws),
        Command::Train => cmd_train(&cfg, &ws).map(|_| ()),
        Command::Eval => cmd_eval(&cfg, &ws).map(|r| print!("{}", r.to_text())),
        Command::Select => cmd_select(&cfg, &ws).map(|s| {
            for (algo, s) in s {
                println!("{algo}: {} at step {}", s.id, s.step);
            }
        }),
        Command::Report => cmd_report(&cfg, &ws),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
