//! Stage runners behind the command-line tool.
//!
//! Every stage reads and writes files in one output directory and records
//! a manifest with the resolved configuration and SHA-256 hashes of its
//! inputs and outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{info, warn};
use sha2::{Digest, Sha256};

use crate::action_space::{discretize, BinSpec, RestrictedActionSpace};
use crate::data::{format, stratified_split, BuildConfig, Encoding, Episode, HybridAction, PreprocessReport};
use crate::data::records::{preprocess, read_records, write_records};
use crate::error::{Error, Result};
use crate::experiment::{vfd_sweep, Prepared, SweepPoint, TEST_FRACTION};
use crate::kv::KvFile;
use crate::learners::{load_policy, train, Algo, Preset, TrainConfig, TrainOutput, UniformPolicy};
use crate::nn::Checkpoint;
use crate::ope::recon::clip_to_ranges;
use crate::ope::{
    checkpoint_id, coverage_fit, evaluate_behavior, evaluate_policy, reconstruction_study, reward_effectiveness,
    select_policy, CheckpointMetrics, EvalConfig, EvalReport, PolicyEval, PolicyMetrics, Selection, BEHAVIOR_LABEL,
    UNIFORM_LABEL,
};
use crate::plot::{grouped_bars, scatter_with_means, BarPanel};
use crate::rewards::{annotate_rewards, RewardConfig};
use crate::synth::{coverage_report, generate_records, to_raw_records, GeneratorConfig};

/// Command-line values that take precedence over the configuration file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
    pub algo: Option<Algo>,
    pub jobs: Option<usize>,
    pub patients: Option<usize>,
    pub reconstruction_study: bool,
    pub sweep: bool,
}

/// Reward-weight sweep run by the report stage.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub enabled: bool,
    pub weights: Vec<f64>,
    /// Training seeds `0..seeds` per weight.
    pub seeds: u64,
    pub steps: usize,
    pub fqe_steps: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { enabled: false, weights: vec![0.0, 0.5, 1.0, 2.0, 5.0], seeds: 5, steps: 5000, fqe_steps: 5000 }
    }
}

impl SweepConfig {
    fn apply(mut self, mut kv: KvFile) -> Result<Self> {
        kv.take_into("enabled", &mut self.enabled)?;
        if let Some(w) = kv.take::<String>("weights")? {
            self.weights = w
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse("key `sweep.weights`", format!("`{w}`: {e}")))?;
        }
        kv.take_into("seeds", &mut self.seeds)?;
        kv.take_into("steps", &mut self.steps)?;
        kv.take_into("fqe_steps", &mut self.fqe_steps)?;
        kv.finish()?;
        if self.weights.is_empty() || self.seeds == 0 || self.steps == 0 || self.fqe_steps == 0 {
            return Err(Error::InvalidArgument("sweep needs weights, seeds and positive step counts".into()));
        }
        Ok(self)
    }

    fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::default();
        kv.set("enabled", self.enabled);
        kv.set("weights", self.weights.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
        kv.set("seeds", self.seeds);
        kv.set("steps", self.steps);
        kv.set("fqe_steps", self.fqe_steps);
        kv
    }
}

/// Fully resolved configuration of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub preset: Preset,
    /// Learner to train; evaluation covers every learner when unset.
    pub algo: Option<Algo>,
    pub jobs: usize,
    pub reconstruction_study: bool,
    pub generator: GeneratorConfig,
    pub rewards: RewardConfig,
    /// The `reward.*` keys `rewards` was built from.
    reward_source: KvFile,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
}

impl RunConfig {
    /// Layers `flags` over `file` over the preset defaults. File keys are
    /// top-level `seed`, `preset`, `algo`, `jobs`, `reconstruction_study`
    /// and the sections `gen.`, `reward.`, `train.`, `fqe.`, `coverage.`,
    /// `eval.` and `sweep.`. The generator seed is the run seed.
    pub fn resolve(file: Option<KvFile>, flags: &Overrides) -> Result<Self> {
        let mut kv = file.unwrap_or_default();
        let file_preset: Option<Preset> = kv.take("preset")?;
        let preset = flags.preset.or(file_preset).unwrap_or(Preset::Desk);
        let file_seed: Option<u64> = kv.take("seed")?;
        let seed = flags.seed.or(file_seed).unwrap_or(0);
        let file_algo: Option<String> = kv.take("algo")?;
        let algo = match (flags.algo, file_algo.as_deref()) {
            (Some(a), _) => Some(a),
            (None, None | Some("all")) => None,
            (None, Some(a)) => Some(a.parse()?),
        };
        let file_jobs: Option<usize> = kv.take("jobs")?;
        let jobs = flags.jobs.or(file_jobs).unwrap_or(1);
        if jobs == 0 {
            return Err(Error::InvalidArgument("jobs must be at least 1".into()));
        }
        let file_recon: Option<bool> = kv.take("reconstruction_study")?;
        let reconstruction_study = flags.reconstruction_study || file_recon.unwrap_or(false);

        let mut gen = kv.section("gen");
        if gen.take::<u64>("seed")?.is_some() {
            return Err(Error::InvalidArgument("set the generator seed with the top-level `seed`".into()));
        }
        gen.set("seed", seed);
        if let Some(n) = flags.patients {
            gen.set("n_patients", n);
        }
        let generator = GeneratorConfig::from_kv(gen)?;
        let reward_source = kv.section("reward");
        let rewards = RewardConfig::from_kv(reward_source.clone())?;
        let train = TrainConfig::preset(preset).apply(kv.section("train"))?;
        let mut eval = EvalConfig::preset(preset);
        eval.fqe = eval.fqe.apply(kv.section("fqe"))?;
        eval.coverage = eval.coverage.apply(kv.section("coverage"))?;
        let mut eval_kv = kv.section("eval");
        eval_kv.take_into("distributional", &mut eval.distributional)?;
        eval_kv.finish()?;
        let mut sweep = SweepConfig::default().apply(kv.section("sweep"))?;
        sweep.enabled |= flags.sweep;
        kv.finish()?;
        Ok(RunConfig {
            seed,
            preset,
            algo,
            jobs,
            reconstruction_study,
            generator,
            rewards,
            reward_source,
            train,
            eval,
            sweep,
        })
    }

    /// Configuration file text that resolves back to `self`.
    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::default();
        kv.set("seed", self.seed);
        kv.set("preset", self.preset);
        kv.set("algo", self.algo.map_or("all", Algo::label));
        kv.set("jobs", self.jobs);
        kv.set("reconstruction_study", self.reconstruction_study);
        let mut gen = self.generator.to_kv();
        let _ = gen.take::<u64>("seed");
        kv.nest("gen", &gen);
        kv.nest("reward", &self.reward_source);
        kv.nest("train", &self.train.to_kv());
        kv.nest("fqe", &self.eval.fqe.to_kv());
        kv.nest("coverage", &self.eval.coverage.to_kv());
        kv.set("eval.distributional", self.eval.distributional);
        kv.nest("sweep", &self.sweep.to_kv());
        kv
    }
}

/// File locations of a run. Inputs default to the files earlier stages
/// write into `out`; `data` replaces the stage's primary input.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub out: PathBuf,
    pub data: Option<PathBuf>,
}

impl Workspace {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Workspace { out: out.into(), data: None }
    }

    pub fn records(&self) -> PathBuf {
        self.out.join("records.csv")
    }

    pub fn episodes(&self) -> PathBuf {
        self.out.join("episodes.csv")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.out.join("checkpoints")
    }

    pub fn eval_csv(&self) -> PathBuf {
        self.out.join("eval.csv")
    }

    pub fn manifest(&self, command: &str) -> PathBuf {
        self.out.join(format!("manifest_{command}.txt"))
    }

    fn input_or(&self, default: PathBuf) -> PathBuf {
        self.data.clone().unwrap_or(default)
    }

    fn create(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Writes `manifest_<command>.txt` with the resolved configuration and
/// hashes of `inputs` and `outputs`.
pub fn write_manifest(ws: &Workspace, command: &str, cfg: &RunConfig, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<()> {
    let mut kv = KvFile::default();
    kv.set("command", command);
    kv.set("version", env!("CARGO_PKG_VERSION"));
    kv.nest("config", &cfg.to_kv());
    for (kind, paths) in [("input", inputs), ("output", outputs)] {
        for p in paths {
            let name = p.strip_prefix(&ws.out).unwrap_or(p).display().to_string();
            kv.set(&format!("{kind}.{name}"), sha256_file(p)?);
        }
    }
    let path = ws.manifest(command);
    std::fs::write(&path, kv.to_text()).map_err(|e| Error::io(&path, e))
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Annotates rewards, assigns splits and writes the episode file with its
/// preprocessing and coverage reports.
fn finish_dataset(
    mut episodes: Vec<Episode>,
    report: &PreprocessReport,
    cfg: &RunConfig,
    ws: &Workspace,
) -> Result<Vec<PathBuf>> {
    if episodes.is_empty() {
        return Err(Error::InvalidArgument("preprocessing kept no episodes".into()));
    }
    if !report.rejected.is_empty() {
        warn!("{} episodes rejected during preprocessing", report.rejected.len());
    }
    annotate_rewards(&mut episodes, &cfg.rewards)?;
    stratified_split(&mut episodes, TEST_FRACTION, cfg.seed)?;
    let paths = [ws.episodes(), ws.out.join("preprocess_report.txt"), ws.out.join("coverage.txt")];
    format::write(&paths[0], &episodes)?;
    write_file(&paths[1], &report.to_text())?;
    let dt_max = cfg.rewards.vfd_window_days();
    coverage_report(&episodes, dt_max)?.save(&paths[2])?;
    info!("wrote {} episodes to {}", episodes.len(), paths[0].display());
    Ok(paths.to_vec())
}

/// Simulates a cohort, writes its raw records and the preprocessed episode
/// file.
pub fn cmd_gen(cfg: &RunConfig, ws: &Workspace) -> Result<()> {
    ws.create()?;
    let raw = to_raw_records(&generate_records(&cfg.generator)?);
    write_records(&ws.records(), &raw)?;
    let (episodes, report) = preprocess(&raw, &Encoding::default(), &BuildConfig::default());
    let mut outputs = vec![ws.records()];
    outputs.extend(finish_dataset(episodes, &report, cfg, ws)?);
    write_manifest(ws, "gen", cfg, &[], &outputs)
}

/// Raw records (`--data`, default `records.csv`) to the episode file.
pub fn cmd_preprocess(cfg: &RunConfig, ws: &Workspace) -> Result<()> {
    let input = ws.input_or(ws.records());
    let raw = read_records(&input)?;
    ws.create()?;
    let (episodes, report) = preprocess(&raw, &Encoding::default(), &BuildConfig::default());
    let outputs = finish_dataset(episodes, &report, cfg, ws)?;
    write_manifest(ws, "preprocess", cfg, &[input], &outputs)
}

fn load_prepared(cfg: &RunConfig, input: &Path) -> Result<Prepared> {
    Prepared::new(format::read(input)?, &cfg.rewards, cfg.seed)
}

/// Trains the selected learner (HybridIQL by default) on the training
/// split and writes its checkpoints and loss log.
pub fn cmd_train(cfg: &RunConfig, ws: &Workspace) -> Result<TrainOutput> {
    let input = ws.input_or(ws.episodes());
    let prep = load_prepared(cfg, &input)?;
    let algo = cfg.algo.unwrap_or(Algo::HybridIql);
    info!("training {algo} for {} steps on {} transitions", cfg.train.steps, prep.train.len());
    let out = train(algo, &prep.train, &prep.space, &cfg.train, cfg.seed)?;
    let dir = ws.checkpoints();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut outputs = Vec::new();
    for ck in &out.checkpoints {
        let p = dir.join(format!("{}.ckpt", checkpoint_id(ck)));
        ck.save(&p)?;
        outputs.push(p);
    }
    let log = ws.out.join(format!("train_log_{}-s{}.csv", algo.label(), cfg.seed));
    out.log.save(&log)?;
    let space = ws.out.join("action_space.csv");
    prep.space.export_csv(&space)?;
    outputs.extend([log, space]);
    if out.skipped_batches > 0 {
        warn!("{} batches skipped", out.skipped_batches);
    }
    write_manifest(ws, &format!("train_{}-s{}", algo.label(), cfg.seed), cfg, &[input], &outputs)?;
    Ok(out)
}

/// Checkpoint files in `dir`, sorted by name, optionally for one learner.
fn checkpoint_files(dir: &Path, algo: Option<Algo>) -> Result<Vec<(PathBuf, Checkpoint)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let ck = Checkpoint::load(&p)?;
        if algo.is_none_or(|a| ck.meta_value("algo") == Some(a.label())) {
            out.push((p, ck));
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!("no matching checkpoints in {}", dir.display())));
    }
    Ok(out)
}

/// Applies `f` to every item on up to `jobs` threads. Results keep the
/// order of `items`.
pub fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    results.into_inner().unwrap().into_iter().map(|r| r.expect("every item is processed")).collect()
}

fn eval_row(policy: &str, seed: u64, checkpoint: &str, step: u64, m: &PolicyMetrics) -> PolicyEval {
    PolicyEval {
        policy: policy.into(),
        seed,
        checkpoint: checkpoint.into(),
        step,
        v_pi: m.v_pi,
        v_pi_dist: m.v_pi_dist,
        coverage: m.coverage,
    }
}

/// Evaluates the dataset policy, a uniform-random policy and every
/// checkpoint, selects one checkpoint per learner and correlates its
/// values with range rewards and episode length. A checkpoint whose value
/// estimate diverges is listed as a failure and skipped.
pub fn cmd_eval(cfg: &RunConfig, ws: &Workspace) -> Result<EvalReport> {
    let input = ws.input_or(ws.episodes());
    let prep = load_prepared(cfg, &input)?;
    let files = checkpoint_files(&ws.checkpoints(), cfg.algo)?;
    ws.create()?;
    info!("fitting the coverage model for {} steps", cfg.eval.coverage.steps);
    let cover = coverage_fit(&prep.train, &cfg.eval.coverage, cfg.seed)?;
    let mut cover_ck = Checkpoint::new(cfg.seed, cfg.eval.coverage.steps as u64, "coverage");
    cover.model.push_to(&mut cover_ck);
    let cover_path = ws.out.join("coverage.ckpt");
    cover_ck.save(&cover_path)?;

    let mut report = EvalReport { seed: cfg.seed, ..Default::default() };
    let behavior = evaluate_behavior(&prep, &cover.model, &cfg.eval, cfg.seed)?;
    report.rows.push(eval_row(BEHAVIOR_LABEL, cfg.seed, "dataset", 0, &behavior));
    let uniform = evaluate_policy(&prep, &UniformPolicy { seed: cfg.seed }, &cover.model, &cfg.eval, cfg.seed)?;
    report.rows.push(eval_row(UNIFORM_LABEL, cfg.seed, "uniform", 0, &uniform));

    info!("evaluating {} checkpoints on {} threads", files.len(), cfg.jobs);
    let evaluated = par_map(&files, cfg.jobs, |(_, ck)| -> Result<PolicyMetrics> {
        let policy = load_policy(ck, Some(&prep.space))?;
        evaluate_policy(&prep, policy.as_ref(), &cover.model, &cfg.eval, cfg.seed)
    });
    let mut by_algo: BTreeMap<String, Vec<(usize, CheckpointMetrics, PolicyMetrics)>> = BTreeMap::new();
    for (i, ((_, ck), result)) in files.iter().zip(evaluated).enumerate() {
        let id = checkpoint_id(ck);
        let algo = ck.meta_value("algo").unwrap_or("policy").to_string();
        match result {
            Ok(m) => {
                report.rows.push(eval_row(&algo, cfg.seed, &id, ck.step, &m));
                let c = CheckpointMetrics { id, step: ck.step, v_pi: m.v_pi, d_pi: m.coverage.d_pi };
                by_algo.entry(algo).or_default().push((i, c, m));
            }
            Err(e @ Error::FqeDiverged(_)) => {
                warn!("{id}: {e}");
                report.failures.push((id, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }

    for (algo, entries) in &by_algo {
        let listed: Vec<CheckpointMetrics> = entries.iter().map(|(_, c, _)| c.clone()).collect();
        let selection = select_policy(&listed)?;
        let (file_index, _, metrics) = &entries[selection.index];
        let policy = load_policy(&files[*file_index].1, Some(&prep.space))?;
        let q = metrics.test_q(&prep, policy.as_ref())?;
        let eff = reward_effectiveness(&q, &prep.test, &prep.test_episodes(), &cfg.rewards.range)?;
        report.effectiveness.push((algo.clone(), selection.id.clone(), eff));
        report.selections.push((algo.clone(), selection));
    }

    if cfg.reconstruction_study {
        let preferred = Algo::HybridIql.label();
        let chosen = report
            .selections
            .iter()
            .find(|(a, _)| a == preferred)
            .or_else(|| report.selections.first())
            .map(|(a, s)| (a.clone(), s.clone()));
        if let Some((algo, selection)) = chosen {
            let (file_index, _, _) = &by_algo[&algo][selection.index];
            let policy = load_policy(&files[*file_index].1, Some(&prep.space))?;
            let study = reconstruction_study(policy.as_ref(), &cover.model, &prep.test.states, &prep.space, cfg.seed)?;
            let path = ws.out.join("reconstruction.txt");
            write_file(&path, &study.to_text())?;
            report.reconstruction = Some((selection.id, study));
        }
    }

    report.save(&ws.out)?;
    let mut inputs = vec![input];
    inputs.extend(files.into_iter().map(|(p, _)| p));
    let mut outputs = vec![ws.eval_csv(), ws.out.join("eval.txt"), cover_path];
    if report.reconstruction.is_some() {
        outputs.push(ws.out.join("reconstruction.txt"));
    }
    write_manifest(ws, "eval", cfg, &inputs, &outputs)?;
    Ok(report)
}

/// Selections per learner from the rows of an `eval.csv`, in order of
/// first appearance. Reference policies are skipped.
pub fn selections_from_csv(text: &str) -> Result<Vec<(String, Selection)>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::parse("eval.csv header", format!("missing column `{name}`")))
    };
    let (policy, checkpoint, step, v_pi, d_pi) = (col("policy")?, col("checkpoint")?, col("step")?, col("v_pi")?, col("d_pi")?);
    let mut groups: Vec<(String, Vec<CheckpointMetrics>)> = Vec::new();
    for (ln, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != header.len() {
            return Err(Error::parse(format!("eval.csv line {}", ln + 2), "wrong number of fields"));
        }
        if f[policy] == BEHAVIOR_LABEL || f[policy] == UNIFORM_LABEL {
            continue;
        }
        let num = |i: usize| {
            f[i].parse::<f64>()
                .map_err(|e| Error::parse(format!("eval.csv line {}", ln + 2), format!("`{}`: {e}", f[i])))
        };
        let m = CheckpointMetrics {
            id: f[checkpoint].to_string(),
            step: f[step].parse().map_err(|e| Error::parse(format!("eval.csv line {}", ln + 2), format!("{e}")))?,
            v_pi: num(v_pi)?,
            d_pi: num(d_pi)?,
        };
        match groups.iter_mut().find(|(p, _)| p == f[policy]) {
            Some((_, v)) => v.push(m),
            None => groups.push((f[policy].to_string(), vec![m])),
        }
    }
    groups.into_iter().map(|(p, m)| Ok((p, select_policy(&m)?))).collect()
}

/// Re-runs checkpoint selection from `eval.csv` (`--data` to override)
/// and writes `selection.csv`.
pub fn cmd_select(cfg: &RunConfig, ws: &Workspace) -> Result<Vec<(String, Selection)>> {
    let input = ws.input_or(ws.eval_csv());
    let text = std::fs::read_to_string(&input).map_err(|e| Error::io(&input, e))?;
    let selections = selections_from_csv(&text)?;
    ws.create()?;
    let mut out = String::from("policy,checkpoint,step,candidates,fallback\n");
    for (p, s) in &selections {
        writeln!(out, "{p},{},{},{},{}", s.id, s.step, s.candidates, u8::from(s.fallback)).unwrap();
    }
    let path = ws.out.join("selection.csv");
    write_file(&path, &out)?;
    write_manifest(ws, "select", cfg, &[input], &[path])?;
    Ok(selections)
}

/// Per-dimension bin counts of `actions` under `spec`.
pub fn action_histogram(actions: &[HybridAction], spec: &BinSpec, mask_vt: bool) -> Result<Vec<Vec<usize>>> {
    let mut counts: Vec<Vec<usize>> = spec.dims.iter().map(|d| vec![0; d.n_bins()]).collect();
    for a in actions {
        let d = discretize(&clip_to_ranges(*a), spec, mask_vt)?;
        for (c, &b) in counts.iter_mut().zip(&d.0) {
            c[b] += 1;
        }
    }
    Ok(counts)
}

fn histogram_csv(space: &RestrictedActionSpace, hists: &[(String, Vec<Vec<usize>>)]) -> String {
    let mut out = String::from("policy,dimension,bin,lo,hi,count,fraction\n");
    for (policy, counts) in hists {
        for (dim, c) in space.spec().dims.iter().zip(counts) {
            let total = c.iter().sum::<usize>().max(1) as f64;
            for (b, &n) in c.iter().enumerate() {
                let (lo, hi) = dim.interval(b).map_or((String::new(), String::new()), |(l, h)| (l.to_string(), h.to_string()));
                writeln!(out, "{policy},{},{b},{lo},{hi},{n},{:.6}", dim.name, n as f64 / total).unwrap();
            }
        }
    }
    out
}

fn histogram_svg(space: &RestrictedActionSpace, hists: &[(String, Vec<Vec<usize>>)]) -> String {
    let panels: Vec<BarPanel> = space
        .spec()
        .dims
        .iter()
        .enumerate()
        .map(|(d, dim)| BarPanel {
            title: dim.name.clone(),
            categories: (0..dim.n_bins()).map(|b| b.to_string()).collect(),
            series: hists
                .iter()
                .map(|(p, c)| {
                    let total = c[d].iter().sum::<usize>().max(1) as f64;
                    (p.clone(), c[d].iter().map(|&n| n as f64 / total).collect())
                })
                .collect(),
        })
        .collect();
    grouped_bars(&panels)
}

fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("w_vfd,seed,rho_range,rho_length,range_undefined,length_undefined,episodes\n");
    for p in points {
        let e = &p.effectiveness;
        writeln!(
            out,
            "{},{},{:.6},{:.6},{},{},{}",
            p.w_vfd,
            p.seed,
            e.range.rho,
            e.length.rho,
            u8::from(e.range.undefined),
            u8::from(e.length.undefined),
            e.episodes
        )
        .unwrap();
    }
    out
}

/// Action histograms of the dataset policy and each selected checkpoint on
/// the test states, plus the optional reward-weight sweep.
pub fn cmd_report(cfg: &RunConfig, ws: &Workspace) -> Result<()> {
    let input = ws.input_or(ws.episodes());
    let prep = load_prepared(cfg, &input)?;
    let eval_csv = ws.eval_csv();
    let text = std::fs::read_to_string(&eval_csv).map_err(|e| Error::io(&eval_csv, e))?;
    let selections = selections_from_csv(&text)?;
    let mut inputs = vec![input, eval_csv];

    let spec = prep.space.spec();
    let mut hists = vec![(BEHAVIOR_LABEL.to_string(), action_histogram(&prep.test.actions, spec, prep.space.mask_vt())?)];
    for (algo, s) in &selections {
        let path = ws.checkpoints().join(format!("{}.ckpt", s.id));
        let ck = Checkpoint::load(&path)?;
        let policy = load_policy(&ck, Some(&prep.space))?;
        let acts = policy.act_batch(&prep.test.states)?.to_hybrid()?;
        hists.push((algo.clone(), action_histogram(&acts, spec, prep.space.mask_vt())?));
        inputs.push(path);
    }
    let mut outputs = vec![ws.out.join("action_histograms.csv"), ws.out.join("action_histograms.svg")];
    write_file(&outputs[0], &histogram_csv(&prep.space, &hists))?;
    write_file(&outputs[1], &histogram_svg(&prep.space, &hists))?;

    let mut summary = format!("test states {}\n", prep.test.len());
    for (algo, s) in &selections {
        writeln!(summary, "selected {algo}: {} at step {}", s.id, s.step).unwrap();
    }

    if cfg.sweep.enabled {
        let train_cfg = TrainConfig {
            steps: cfg.sweep.steps,
            checkpoint_interval: cfg.sweep.steps,
            ..cfg.train.clone()
        };
        let fqe = crate::ope::FqeConfig { steps: cfg.sweep.fqe_steps, ..cfg.eval.fqe.clone() };
        let seeds: Vec<u64> = (0..cfg.sweep.seeds).map(|s| cfg.seed + s).collect();
        info!("reward-weight sweep over {} weights and {} seeds", cfg.sweep.weights.len(), seeds.len());
        let points = vfd_sweep(&prep.episodes, &cfg.sweep.weights, &seeds, &train_cfg, &fqe)?;
        let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.w_vfd, p.effectiveness.range.rho)).collect();
        let csv = ws.out.join("sweep.csv");
        let svg = ws.out.join("sweep.svg");
        write_file(&csv, &sweep_csv(&points))?;
        write_file(&svg, &scatter_with_means("range-reward correlation by VFD weight", "w_vfd", "rho", &xy))?;
        writeln!(summary, "sweep points {}", points.len()).unwrap();
        outputs.extend([csv, svg]);
    }
    let path = ws.out.join("report.txt");
    write_file(&path, &summary)?;
    outputs.push(path);
    write_manifest(ws, "report", cfg, &inputs, &outputs)
}
