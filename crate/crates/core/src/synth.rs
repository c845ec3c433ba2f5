//! Synthetic ICU cohort.
//!
//! Each patient has a latent severity in [0, 1] that falls at a rate set by
//! how close the clinician's settings are to a severity-dependent ideal.
//! Observed physiology is a set of monotone links of severity and of the
//! setting deviations, plus AR(1) noise. Extubation becomes possible once
//! severity is low; death risk is driven mostly by a frailty latent that
//! is independent of care quality. This is a coverage harness for the
//! algorithms, not a physiological model.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::action_space::{discretize, BinSpec};
use crate::data::records::{preprocess_records, BuildConfig, PreprocessReport, RawRecord, RawValue, Record, Var};
use crate::data::schema::{idx, Mode, CONT_ACTIONS, N_CONT, N_STATE, STATE_VARS};
use crate::data::{Episode, HybridAction};
use crate::error::{Error, Result};
use crate::kv::KvFile;
use crate::rewards::{vfd_branch, RangeSpec, VfdBranch};
use crate::rng::{stream, stream_rng, Rng as StreamRng};

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub n_patients: usize,
    pub seed: u64,
    /// Longest episode; ventilation beyond this is cut off.
    pub max_hours: usize,
    pub severity_lo: f64,
    pub severity_hi: f64,
    /// Recovery rate range, per hour.
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub severity_noise: f64,
    /// Per-hour extubation hazard once severity is well below the
    /// weaning threshold.
    pub extubation_rate: f64,
    pub wean_threshold: f64,
    /// Scales the per-hour death hazard on the ventilator.
    pub death_scale: f64,
    /// Scales the probability of death after the final extubation.
    pub post_death_scale: f64,
    /// Fraction of early extubations that fail.
    pub reintubation_frac: f64,
    /// Scales the spread of clinician settings around the ideal.
    pub behavior_noise: f64,
    /// Per-hour probability that the clinician revisits the settings.
    pub adjust_prob: f64,
    /// `None` lets each patient's mode depend on initial severity.
    pub force_mode: Option<Mode>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_patients: 1000,
            seed: 0,
            max_hours: 28 * 24,
            severity_lo: 0.35,
            severity_hi: 0.95,
            rho_lo: 0.005,
            rho_hi: 0.05,
            severity_noise: 0.004,
            extubation_rate: 0.15,
            wean_threshold: 0.3,
            death_scale: 1.0,
            post_death_scale: 1.0,
            reintubation_frac: 0.25,
            behavior_noise: 1.0,
            adjust_prob: 0.35,
            force_mode: None,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("`{name}` = {v} is not a probability")))
            }
        };
        if self.n_patients == 0 {
            return Err(Error::InvalidArgument("n_patients must be at least 1".into()));
        }
        if self.max_hours < 4 {
            return Err(Error::InvalidArgument("max_hours must be at least 4".into()));
        }
        prob("severity_lo", self.severity_lo)?;
        prob("severity_hi", self.severity_hi)?;
        prob("extubation_rate", self.extubation_rate)?;
        prob("reintubation_frac", self.reintubation_frac)?;
        prob("adjust_prob", self.adjust_prob)?;
        prob("wean_threshold", self.wean_threshold)?;
        if self.severity_lo > self.severity_hi || self.rho_lo > self.rho_hi || self.rho_lo < 0.0 {
            return Err(Error::InvalidArgument("inverted latent ranges".into()));
        }
        if self.death_scale < 0.0 || self.post_death_scale < 0.0 || self.behavior_noise < 0.0 {
            return Err(Error::InvalidArgument("scales must be non-negative".into()));
        }
        Ok(())
    }

    pub fn from_kv(mut kv: KvFile) -> Result<Self> {
        let mut c = GeneratorConfig::default();
        kv.take_into("n_patients", &mut c.n_patients)?;
        kv.take_into("seed", &mut c.seed)?;
        kv.take_into("max_hours", &mut c.max_hours)?;
        kv.take_into("severity_lo", &mut c.severity_lo)?;
        kv.take_into("severity_hi", &mut c.severity_hi)?;
        kv.take_into("rho_lo", &mut c.rho_lo)?;
        kv.take_into("rho_hi", &mut c.rho_hi)?;
        kv.take_into("severity_noise", &mut c.severity_noise)?;
        kv.take_into("extubation_rate", &mut c.extubation_rate)?;
        kv.take_into("wean_threshold", &mut c.wean_threshold)?;
        kv.take_into("death_scale", &mut c.death_scale)?;
        kv.take_into("post_death_scale", &mut c.post_death_scale)?;
        kv.take_into("reintubation_frac", &mut c.reintubation_frac)?;
        kv.take_into("behavior_noise", &mut c.behavior_noise)?;
        kv.take_into("adjust_prob", &mut c.adjust_prob)?;
        if let Some(m) = kv.take::<String>("force_mode")? {
            c.force_mode = match m.as_str() {
                "none" => None,
                other => Some(other.parse()?),
            };
        }
        kv.finish()?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::default();
        kv.set("n_patients", self.n_patients);
        kv.set("seed", self.seed);
        kv.set("max_hours", self.max_hours);
        kv.set("severity_lo", self.severity_lo);
        kv.set("severity_hi", self.severity_hi);
        kv.set("rho_lo", self.rho_lo);
        kv.set("rho_hi", self.rho_hi);
        kv.set("severity_noise", self.severity_noise);
        kv.set("extubation_rate", self.extubation_rate);
        kv.set("wean_threshold", self.wean_threshold);
        kv.set("death_scale", self.death_scale);
        kv.set("post_death_scale", self.post_death_scale);
        kv.set("reintubation_frac", self.reintubation_frac);
        kv.set("behavior_noise", self.behavior_noise);
        kv.set("adjust_prob", self.adjust_prob);
        kv.set("force_mode", self.force_mode.map_or("none".to_string(), |m| m.to_string()));
        kv
    }
}

/// Hidden per-patient quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct PatientLatent {
    pub severity0: f64,
    /// Recovery rate per hour.
    pub rho: f64,
    pub frailty: f64,
    /// AR(1) innovation scale per state variable.
    pub noise: [f64; N_STATE],
}

/// Tolerance of each setting around its ideal, in setting units.
const TOLERANCE: [f64; N_CONT] = [4.0, 1.0, 3.0, 2.5, 10.0];
/// Clinician spread per setting at `behavior_noise = 1`.
const SPREAD: [f64; N_CONT] = [3.0, 0.8, 2.5, 2.0, 8.0];
const QUANTUM: [f64; N_CONT] = [1.0, 0.5, 1.0, 1.0, 5.0];

/// Severity-dependent ideal settings (rr, vt, dp, peep, fio2).
pub fn ideal_settings(severity: f64) -> [f64; N_CONT] {
    let s = severity.clamp(0.0, 1.0);
    [12.0 + 14.0 * s, 8.0 - 2.5 * s, 8.0 + 10.0 * s, 5.0 + 10.0 * s, 30.0 + 55.0 * s]
}

/// `exp(-mean(z^2) / 2)` over the active settings, with `z` the deviation
/// from the ideal in tolerance units. 1 is ideal care.
pub fn action_quality(a: &HybridAction, severity: f64) -> f64 {
    let ideal = ideal_settings(severity);
    let cont = a.continuous();
    let mut sum = 0.0;
    let mut n = 0.0;
    for k in 0..N_CONT {
        if k == 2 && a.mode == Mode::Vcv {
            continue;
        }
        let z = (cont[k] as f64 - ideal[k]) / TOLERANCE[k];
        sum += z * z;
        n += 1.0;
    }
    (-0.5 * sum / n).exp()
}

fn quantize(k: usize, v: f64) -> f32 {
    let q = (v / QUANTUM[k]).round() * QUANTUM[k];
    q.clamp(CONT_ACTIONS[k].lo as f64, CONT_ACTIONS[k].hi as f64) as f32
}

fn clamp_state(i: usize, v: f64) -> f32 {
    let s = &STATE_VARS[i];
    // keep a hair inside the range so that f32 rounding cannot leave it
    (v.clamp(s.lo as f64, s.hi as f64) as f32).clamp(s.lo, s.hi)
}

struct Sim<'a> {
    cfg: &'a GeneratorConfig,
    rng: StreamRng,
    latent: PatientLatent,
    bias: [f64; N_CONT],
    mode: Mode,
    offsets: [f64; N_STATE],
    ar: [f64; N_STATE],
    statics: [f64; 4],
    pbw: f64,
}

impl Sim<'_> {
    fn gauss(&mut self, sd: f64) -> f64 {
        if sd <= 0.0 {
            return 0.0;
        }
        Normal::new(0.0, sd).unwrap().sample(&mut self.rng)
    }

    fn choose_settings(&mut self, severity: f64) -> HybridAction {
        let ideal = ideal_settings(severity);
        let mut cont = [0f32; N_CONT];
        for k in 0..N_CONT {
            let sd = SPREAD[k] * self.cfg.behavior_noise;
            // truncated at three spreads
            let e = self.gauss(sd).clamp(-3.0 * sd, 3.0 * sd);
            cont[k] = quantize(k, ideal[k] + self.bias[k] + e);
        }
        if self.mode == Mode::Pcv {
            // delivered volume follows the driving pressure
            let ratio = cont[2] as f64 / ideal[2];
            let vt = ideal[1] * ratio.powf(0.8) + self.gauss(0.3);
            cont[1] = quantize(1, vt);
        }
        HybridAction::from_parts(self.mode, cont)
    }

    /// Hidden physiology at severity `s` under settings `a`.
    fn physiology(&mut self, s: f64, a: &HybridAction) -> [f32; N_STATE] {
        let ideal = ideal_settings(s);
        let c = a.continuous().map(|v| v as f64);
        let dev = |k: usize| (c[k] - ideal[k]) / TOLERANCE[k];
        let ox = 0.6 * dev(4) + 0.4 * dev(3);
        let mvr = (c[0] * c[1]) / (ideal[0] * ideal[1]);
        for i in 0..N_STATE {
            let sd = self.latent.noise[i];
            let e = self.gauss(sd);
            self.ar[i] = 0.7 * self.ar[i] + e;
        }
        let n = self.ar;
        let o = self.offsets;
        let mut v = [0f64; N_STATE];
        let vaso = (1.6 * (s - 0.45)).max(0.0) + n[idx::VASOPRESSOR];
        v[idx::VASOPRESSOR] = vaso;
        let map = 91.0 - 30.0 * s + 6.0 * vaso.max(0.0) - 1.0 * (c[3] - ideal[3]) + o[idx::MAP] + n[idx::MAP];
        v[idx::MAP] = map;
        v[idx::DBP] = map - 14.0 + n[idx::DBP];
        v[idx::SBP] = map + 26.0 + n[idx::SBP];
        let compliance = 50.0 - 25.0 * s;
        let vt_ml = c[1] * self.pbw;
        v[idx::PINSP] = match a.mode {
            Mode::Pcv => c[3] + c[2],
            Mode::Vcv => c[3] + vt_ml / compliance,
        } + n[idx::PINSP];
        v[idx::VT_OBS] = vt_ml + n[idx::VT_OBS];
        v[5] = 8.6 - 1.6 * s + o[5] + n[5];
        v[6] = 8.0 + 11.0 * s + o[6] + n[6];
        let spo2 = 99.0 - 14.0 * s + 3.0 * ox.min(1.0) + o[idx::SPO2] + n[idx::SPO2];
        v[idx::SPO2] = spo2;
        v[idx::SAO2] = spo2 + 0.8 + n[idx::SAO2];
        v[idx::PAO2] = 95.0 - 55.0 * s + 18.0 * ox + o[idx::PAO2] + n[idx::PAO2];
        let paco2 = 38.0 + 22.0 * s - 30.0 * (mvr - 1.0) + o[idx::PACO2] + n[idx::PACO2];
        v[idx::PACO2] = paco2;
        v[idx::BASE_EXCESS] = -8.0 * s + o[idx::BASE_EXCESS] + n[idx::BASE_EXCESS];
        v[idx::PH] = 7.40 - 0.006 * (paco2 - 40.0) - 0.04 * s + 0.003 * v[idx::BASE_EXCESS] + n[idx::PH];
        v[idx::IV_FLUID] = 500.0 + 1500.0 * s + o[idx::IV_FLUID] + n[idx::IV_FLUID];
        v[idx::URINE] = 320.0 - 220.0 * s + o[idx::URINE] + n[idx::URINE];
        v[16] = 4.1 + 0.6 * s + o[16] + n[16];
        v[17] = 104.0 + 4.0 * s + o[17] + n[17];
        v[18] = 140.0 + 3.0 * s + o[18] + n[18];
        v[19] = 1.1 + 1.3 * s + o[19] + n[19];
        v[idx::HEART_RATE] = 78.0 + 38.0 * s + o[idx::HEART_RATE] + n[idx::HEART_RATE];
        v[idx::AGE] = self.statics[0];
        v[idx::SEX] = self.statics[1];
        v[idx::WEIGHT] = self.statics[2];
        v[idx::HEIGHT] = self.statics[3];
        std::array::from_fn(|i| clamp_state(i, v[i]))
    }
}

const NOISE: [f64; N_STATE] = [
    4.0, 3.0, 5.0, 1.5, 25.0, 0.2, 0.8, 0.8, 0.8, 5.0, 2.5, 1.0, 0.015, 150.0, 40.0, 0.05, 0.12,
    1.0, 1.0, 0.05, 4.0, 0.0, 0.0, 0.0, 0.0,
];

/// Observation schedule: vitals hourly, blood gases every 2 h, labs and
/// fluid balance every 4 h. Everything is measured at the first hour.
fn observed(var: usize, k: usize) -> bool {
    match var {
        idx::MAP | idx::DBP | idx::SBP | idx::PINSP | idx::VT_OBS | idx::SPO2 | idx::HEART_RATE
        | idx::VASOPRESSOR => true,
        idx::SAO2 | idx::PAO2 | idx::PACO2 | idx::BASE_EXCESS | idx::PH => k % 2 == 0,
        _ => k % 4 == 0,
    }
}

/// Cleaned records for one patient.
pub fn simulate_patient(cfg: &GeneratorConfig, patient_id: u64) -> (PatientLatent, Vec<Record>) {
    let mut rng = stream_rng(cfg.seed, stream::PATIENT_BASE + patient_id);
    let severity0 = rng.random_range(cfg.severity_lo..=cfg.severity_hi);
    let latent = PatientLatent {
        severity0,
        rho: rng.random_range(cfg.rho_lo..=cfg.rho_hi),
        frailty: rng.random::<f64>(),
        noise: std::array::from_fn(|i| NOISE[i] * rng.random_range(0.6..1.4)),
    };
    let mode = cfg.force_mode.unwrap_or_else(|| {
        if rng.random_bool((0.15 + 0.45 * severity0).min(1.0)) { Mode::Pcv } else { Mode::Vcv }
    });
    let female = rng.random_bool(0.4);
    let height: f64 = if female { 164.0 } else { 177.0 } + Normal::new(0.0, 7.0).unwrap().sample(&mut rng);
    let height = height.clamp(155.0, 200.0);
    let weight: f64 = (22.0 + Normal::<f64>::new(4.0, 5.0).unwrap().sample(&mut rng)) * (height / 100.0).powi(2);
    let statics = [
        Normal::<f64>::new(63.0, 14.0).unwrap().sample(&mut rng).clamp(18.0, 95.0).round(),
        if female { 1.0 } else { 0.0 },
        weight.clamp(40.0, 140.0).round(),
        height.round(),
    ];
    let pbw = if female { 45.5 } else { 50.0 } + 0.91 * (statics[3] - 152.4);
    let mut sim = Sim {
        cfg,
        latent: latent.clone(),
        bias: [0.0; N_CONT],
        mode,
        offsets: [0.0; N_STATE],
        ar: [0.0; N_STATE],
        statics,
        pbw,
        rng,
    };
    for k in 0..N_CONT {
        sim.bias[k] = sim.gauss(0.5 * SPREAD[k] * cfg.behavior_noise);
    }
    for i in 0..N_STATE {
        sim.offsets[i] = sim.gauss(0.5 * NOISE[i]);
    }

    let mut out = Vec::new();
    let push = |out: &mut Vec<Record>, t: f64, var: Var, value: f32| {
        out.push(Record { patient_id, time_h: t, var, value, source: 0 });
    };
    let mut t0 = sim.rng.random_range(0..24) as f64;
    let mut s = severity0;
    let mut episodes_left = 2;
    loop {
        episodes_left -= 1;
        let mut settings = sim.choose_settings(s);
        let mut died = false;
        let mut k = 0usize;
        loop {
            if k > 0 && sim.rng.random_bool(cfg.adjust_prob) {
                settings = sim.choose_settings(s);
            }
            let phys = sim.physiology(s, &settings);
            let t = t0 + k as f64;
            for (i, &v) in phys.iter().enumerate() {
                if k == 0 || (!STATE_VARS[i].is_static && observed(i, k)) {
                    push(&mut out, t, Var::State(i), v);
                }
            }
            for (j, &v) in settings.to_row().iter().enumerate() {
                if !v.is_nan() {
                    push(&mut out, t, Var::Action(j), v);
                }
            }
            let q = action_quality(&settings, s);
            let h_death = cfg.death_scale * (0.0003 + 0.006 * latent.frailty.powi(3)) * (0.5 + s);
            if sim.rng.random_bool(h_death.min(1.0)) {
                push(&mut out, t + 0.5, Var::Death, 1.0);
                died = true;
                break;
            }
            let wean = ((cfg.wean_threshold - s) / 0.1).clamp(0.0, 1.0);
            k += 1;
            if k >= 4 && sim.rng.random_bool((cfg.extubation_rate * wean).min(1.0)) {
                break;
            }
            if k >= cfg.max_hours {
                break;
            }
            let noise = sim.gauss(cfg.severity_noise);
            s = (s - latent.rho * q + noise).clamp(0.0, 1.0);
        }
        if died {
            break;
        }
        let end = t0 + k as f64;
        let early = ((s - 0.1) / 0.15).clamp(0.0, 1.0);
        if episodes_left > 0 && sim.rng.random_bool((cfg.reintubation_frac * early).min(1.0)) {
            t0 = end + 12.0 + sim.rng.random_range(0..84) as f64;
            s = (s + 0.25).min(1.0);
            continue;
        }
        let p_post = cfg.post_death_scale * (0.04 + 0.4 * latent.frailty.powi(3));
        if sim.rng.random_bool(p_post.min(1.0)) {
            let days = sim.rng.random_range(0.5..35.0);
            push(&mut out, end + 24.0 * days, Var::Death, 1.0);
        }
        break;
    }
    (latent, out)
}

pub fn generate_records(cfg: &GeneratorConfig) -> Result<Vec<Record>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for pid in 0..cfg.n_patients as u64 {
        out.extend(simulate_patient(cfg, pid).1);
    }
    Ok(out)
}

/// Records in the import format, with categorical values as text.
pub fn to_raw_records(records: &[Record]) -> Vec<RawRecord> {
    records
        .iter()
        .map(|r| {
            let value = match r.var {
                Var::Action(0) => RawValue::Text(Mode::from_code(r.value).unwrap().to_string()),
                Var::State(idx::SEX) => {
                    RawValue::Text(if r.value == 1.0 { "female" } else { "male" }.into())
                }
                _ => RawValue::Num(r.value as f64),
            };
            RawRecord {
                patient_id: r.patient_id,
                time_h: r.time_h,
                variable: r.var.name().into(),
                value,
                source: r.source,
            }
        })
        .collect()
}

/// Simulated cohort, run through episode building, imputation and
/// validation.
pub fn generate(cfg: &GeneratorConfig) -> Result<(Vec<Episode>, PreprocessReport)> {
    let records = generate_records(cfg)?;
    Ok(preprocess_records(&records, &BuildConfig::default()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverageReport {
    pub episodes: usize,
    pub hours: usize,
    /// `(dimension name, per-bin step counts)`.
    pub bin_counts: Vec<(String, Vec<usize>)>,
    pub branches: BTreeMap<VfdBranch, usize>,
    /// `(variable name, fraction of steps inside its safe range)`.
    pub in_range: Vec<(String, f64)>,
    pub distinct_combinations: usize,
}

impl CoverageReport {
    pub fn empty_bins(&self) -> Vec<(String, usize)> {
        self.bin_counts
            .iter()
            .flat_map(|(n, c)| c.iter().enumerate().filter(|(_, &x)| x == 0).map(move |(b, _)| (n.clone(), b)))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "episodes {}", self.episodes).unwrap();
        writeln!(out, "hours {}", self.hours).unwrap();
        writeln!(out, "distinct_combinations {}", self.distinct_combinations).unwrap();
        out.push_str("\n[branches]\n");
        for b in VfdBranch::ALL {
            writeln!(out, "{} {}", b.label(), self.branches.get(&b).copied().unwrap_or(0)).unwrap();
        }
        out.push_str("\n[bins]\n");
        for (name, counts) in &self.bin_counts {
            let c: Vec<String> = counts.iter().map(usize::to_string).collect();
            writeln!(out, "{name} {}", c.join(" ")).unwrap();
        }
        out.push_str("\n[empty_bins]\n");
        for (name, b) in self.empty_bins() {
            writeln!(out, "{name} {b}").unwrap();
        }
        out.push_str("\n[in_safe_range]\n");
        for (name, f) in &self.in_range {
            writeln!(out, "{name} {f:.4}").unwrap();
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

pub fn coverage_report(episodes: &[Episode], dt_max_days: f64) -> Result<CoverageReport> {
    if episodes.is_empty() {
        return Err(Error::InvalidArgument("coverage report of an empty dataset".into()));
    }
    let spec = BinSpec::default();
    let mut bin_counts: Vec<(String, Vec<usize>)> =
        spec.dims.iter().map(|d| (d.name.clone(), vec![0; d.n_bins()])).collect();
    let ranges = RangeSpec::default();
    let mut in_range = vec![0usize; ranges.items.len()];
    let mut branches = BTreeMap::new();
    let mut combos = std::collections::HashSet::new();
    let mut hours = 0;
    for ep in episodes {
        *branches.entry(vfd_branch(ep, dt_max_days)?).or_insert(0) += 1;
        for step in &ep.steps {
            hours += 1;
            let d = discretize(&step.hybrid_action()?, &spec, false)?;
            for (dim, &b) in d.0.iter().enumerate() {
                bin_counts[dim].1[b] += 1;
            }
            combos.insert(d);
            for (c, ok) in in_range.iter_mut().zip(ranges.in_range(&step.state)) {
                *c += ok as usize;
            }
        }
    }
    Ok(CoverageReport {
        episodes: episodes.len(),
        hours,
        bin_counts,
        branches,
        in_range: ranges
            .items
            .iter()
            .zip(in_range)
            .map(|(it, c)| (STATE_VARS[it.var].name.to_string(), c as f64 / hours as f64))
            .collect(),
        distinct_combinations: combos.len(),
    })
}
