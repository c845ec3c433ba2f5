use std::path::Path;
use std::process::{Command, Output};

use ventrl::action_space::BinSpec;
use ventrl::rewards::VfdBranch;

const SMALL: &str = "gen.n_patients = 120\n\
train.steps = 200\n\
train.checkpoint_interval = 100\n\
fqe.steps = 100\n\
coverage.steps = 100\n";

fn ventrl(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ventrl"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], out: &Path) -> Output {
    let o = ventrl(args, out);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("run.conf");
    std::fs::write(&path, SMALL).unwrap();
    path.display().to_string()
}

#[test]
fn gen_is_reproducible_for_a_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        ok(&["gen", "--seed", "5", "--patients", "60"], d.path());
    }
    for f in ["records.csv", "episodes.csv", "preprocess_report.txt", "coverage.txt", "manifest_gen.txt"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn different_seeds_give_different_cohorts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(&["gen", "--seed", "1", "--patients", "40"], a.path());
    ok(&["gen", "--seed", "2", "--patients", "40"], b.path());
    let x = std::fs::read(a.path().join("episodes.csv")).unwrap();
    assert_ne!(x, std::fs::read(b.path().join("episodes.csv")).unwrap());
}

#[test]
fn coverage_report_lists_every_outcome_branch() {
    let d = tempfile::tempdir().unwrap();
    ok(&["gen", "--patients", "200"], d.path());
    let text = std::fs::read_to_string(d.path().join("coverage.txt")).unwrap();
    for b in VfdBranch::ALL {
        let line = text.lines().find(|l| l.starts_with(&format!("{} ", b.label()))).expect("branch line");
        let n: usize = line.split_whitespace().nth(1).unwrap().parse().unwrap();
        assert!(n > 0, "branch {} never occurs", b.label());
    }
}

#[test]
fn preprocess_reads_the_records_written_by_gen() {
    let d = tempfile::tempdir().unwrap();
    ok(&["gen", "--patients", "50"], d.path());
    let before = std::fs::read(d.path().join("episodes.csv")).unwrap();
    std::fs::remove_file(d.path().join("episodes.csv")).unwrap();
    ok(&["preprocess"], d.path());
    assert_eq!(before, std::fs::read(d.path().join("episodes.csv")).unwrap());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    let o = ventrl(&["gen", "--no-such-flag"], d.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_algorithm_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let o = ventrl(&["train", "--algo", "dqn"], d.path());
    assert!(!o.status.success());
}

#[test]
fn missing_dataset_names_the_path() {
    let d = tempfile::tempdir().unwrap();
    let missing = d.path().join("nowhere").join("episodes.csv");
    let o = ventrl(&["train", "--data", missing.to_str().unwrap()], d.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(missing.to_str().unwrap()), "{err}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("bad.conf");
    std::fs::write(&path, "train.stepz = 5\n").unwrap();
    let o = ventrl(&["gen", "--config", path.to_str().unwrap()], d.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("stepz"));
}

#[test]
fn full_run_writes_every_artifact() {
    let d = tempfile::tempdir().unwrap();
    let conf = write_config(d.path());
    let c = ["--config", conf.as_str()];
    ok(&[&["gen"][..], &c].concat(), d.path());
    for algo in ["factored-cql", "hybrid-iql", "hybrid-edac"] {
        ok(&[&["train", "--algo", algo][..], &c].concat(), d.path());
    }
    let eval = ok(&[&["eval", "--reconstruction-study", "--jobs", "2"][..], &c].concat(), d.path());
    let text = String::from_utf8_lossy(&eval.stdout);
    assert!(text.contains("behavior") && text.contains("uniform"), "{text}");
    let select = ok(&[&["select"][..], &c].concat(), d.path());
    assert_eq!(String::from_utf8_lossy(&select.stdout).lines().count(), 3);
    ok(&[&["report"][..], &c].concat(), d.path());

    for f in [
        "eval.csv",
        "eval.txt",
        "coverage.ckpt",
        "selection.csv",
        "reconstruction.txt",
        "action_histograms.csv",
        "action_histograms.svg",
        "report.txt",
        "manifest_eval.txt",
        "manifest_report.txt",
    ] {
        assert!(d.path().join(f).is_file(), "{f} missing");
    }
    // 3 learners x 2 checkpoints
    assert_eq!(std::fs::read_dir(d.path().join("checkpoints")).unwrap().count(), 6);

    // 4 methods plus the unreconstructed actions
    let recon = std::fs::read_to_string(d.path().join("reconstruction.txt")).unwrap();
    assert_eq!(recon.lines().filter(|l| !l.trim().is_empty()).count(), 1 + 5);

    // one row per bin per policy
    let hist = std::fs::read_to_string(d.path().join("action_histograms.csv")).unwrap();
    let rows: Vec<&str> = hist.lines().skip(1).collect();
    let policies: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    let bins: usize = BinSpec::default().dims.iter().map(|d| d.n_bins()).sum();
    assert_eq!(policies.len(), 4, "{policies:?}");
    assert_eq!(rows.len(), policies.len() * bins);
    for p in &policies {
        let total: f64 = rows
            .iter()
            .filter(|r| r.starts_with(&format!("{p},")))
            .map(|r| r.rsplit(',').next().unwrap().parse::<f64>().unwrap())
            .sum();
        let dims = BinSpec::default().dims.len() as f64;
        assert!((total - dims).abs() < 1e-4, "{p}: fractions sum to {total}");
    }

    let manifest = std::fs::read_to_string(d.path().join("manifest_eval.txt")).unwrap();
    assert!(manifest.contains("input.episodes.csv") || manifest.contains("episodes.csv"));
}
