use ventrl::kv::KvFile;
use ventrl::learners::{Algo, Preset};
use ventrl::pipeline::{Overrides, RunConfig};

fn resolve(text: &str, flags: Overrides) -> RunConfig {
    RunConfig::resolve(Some(KvFile::parse(text).unwrap()), &flags).unwrap()
}

#[test]
fn paper_preset_resolves_published_hyperparameters() {
    let cfg = resolve("", Overrides { preset: Some(Preset::Paper), ..Default::default() });
    let t = &cfg.train;
    assert_eq!((t.cql_alpha, t.gamma, t.cql_lr), (10.0, 0.99, 1e-5));
    assert_eq!((t.iql_beta, t.iql_expectile), (100.0, 0.8));
    assert_eq!(t.edac_eta, 0.1);
    assert_eq!(cfg.eval.fqe.gamma, 0.99);
}

#[test]
fn desk_is_the_default_preset() {
    let cfg = RunConfig::resolve(None, &Overrides::default()).unwrap();
    assert_eq!(cfg.preset, Preset::Desk);
    assert_eq!(cfg.train.steps, 20_000);
}

#[test]
fn flags_override_file_and_file_overrides_preset() {
    let text = "seed = 3\npreset = paper\nalgo = factored-cql\ntrain.steps = 77\ntrain.cql_alpha = 2.5\n";
    let cfg = resolve(text, Overrides::default());
    assert_eq!((cfg.seed, cfg.preset, cfg.algo), (3, Preset::Paper, Some(Algo::FactoredCql)));
    assert_eq!((cfg.train.steps, cfg.train.cql_alpha), (77, 2.5));
    // untouched keys keep the preset value
    assert_eq!(cfg.train.iql_beta, 100.0);

    let flags = Overrides { seed: Some(9), preset: Some(Preset::Desk), algo: Some(Algo::HybridEdac), ..Default::default() };
    let cfg = resolve(text, flags);
    assert_eq!((cfg.seed, cfg.preset, cfg.algo), (9, Preset::Desk, Some(Algo::HybridEdac)));
    assert_eq!(cfg.train.steps, 77);
    assert_eq!(cfg.generator.seed, 9);
}

#[test]
fn resolved_config_round_trips_through_text() {
    let cfg = resolve("train.steps = 123\ngen.n_patients = 40\nreward.preset = mortality\n", Overrides::default());
    let again = resolve(&cfg.to_kv().to_text(), Overrides::default());
    assert_eq!(again.to_kv().to_text(), cfg.to_kv().to_text());
}

#[test]
fn unknown_keys_are_errors() {
    for text in ["nonsense = 1\n", "train.nonsense = 1\n", "gen.seed = 4\n"] {
        assert!(RunConfig::resolve(Some(KvFile::parse(text).unwrap()), &Overrides::default()).is_err(), "{text}");
    }
}
