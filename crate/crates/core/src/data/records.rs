//! Raw time-stamped records and the preprocessing that turns them into
//! hourly episodes: cleaning, episode building, imputation.

use std::collections::BTreeMap;
use std::path::Path;

use super::episode::{Episode, Outcome, RewardFields, Step};
use super::schema::{state_index, Mode, CONT_ACTIONS, N_STATE, STATE_VARS};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum RawValue {
    Num(f64),
    Text(String),
}

/// One measurement as exported from a source system.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRecord {
    pub patient_id: u64,
    /// Hours since the patient's time origin.
    pub time_h: f64,
    pub variable: String,
    pub value: RawValue,
    /// Source rank; lower is preferred when a step has several values.
    pub source: u32,
}

/// Variable addressed by a cleaned record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    State(usize),
    /// Index into the action row: 0 = mode, 1..=5 = continuous settings.
    Action(usize),
    Death,
}

impl Var {
    pub fn lookup(name: &str) -> Option<Var> {
        if name == "death" {
            return Some(Var::Death);
        }
        if name == "mode" {
            return Some(Var::Action(0));
        }
        if let Some(i) = CONT_ACTIONS.iter().position(|a| a.name == name) {
            return Some(Var::Action(i + 1));
        }
        state_index(name).map(Var::State)
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::State(i) => STATE_VARS[i].name,
            Var::Action(0) => "mode",
            Var::Action(i) => CONT_ACTIONS[i - 1].name,
            Var::Death => "death",
        }
    }

    fn is_ventilation(self) -> bool {
        matches!(self, Var::Action(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Record {
    pub patient_id: u64,
    pub time_h: f64,
    pub var: Var,
    pub value: f32,
    pub source: u32,
}

/// Text-to-code table for categorical values.
#[derive(Clone, Debug)]
pub struct Encoding {
    pub sex: Vec<(String, f32)>,
}

impl Default for Encoding {
    fn default() -> Self {
        Encoding {
            sex: vec![
                ("female".into(), 1.0),
                ("f".into(), 1.0),
                ("male".into(), 0.0),
                ("m".into(), 0.0),
            ],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CleanReport {
    pub kept: usize,
    pub out_of_range: usize,
    pub unknown_variable: usize,
    pub unparseable: usize,
}

/// Drops out-of-range values, encodes categorical text and resolves
/// variable names. Unknown variables are skipped and counted.
pub fn clean(raw: &[RawRecord], enc: &Encoding) -> (Vec<Record>, CleanReport) {
    let mut report = CleanReport::default();
    let mut out = Vec::with_capacity(raw.len());
    for r in raw {
        let Some(var) = Var::lookup(&r.variable) else {
            report.unknown_variable += 1;
            continue;
        };
        let value = match (&r.value, var) {
            (_, Var::Death) => 1.0,
            (RawValue::Num(v), _) => *v as f32,
            (RawValue::Text(t), Var::Action(0)) => match t.parse::<Mode>() {
                Ok(m) => m.index() as f32,
                Err(_) => {
                    report.unparseable += 1;
                    continue;
                }
            },
            (RawValue::Text(t), Var::State(i)) if STATE_VARS[i].name == "sex" => {
                let key = t.trim().to_ascii_lowercase();
                match enc.sex.iter().find(|(k, _)| *k == key) {
                    Some((_, code)) => *code,
                    None => {
                        report.unparseable += 1;
                        continue;
                    }
                }
            }
            (RawValue::Text(t), _) => match t.trim().parse::<f64>() {
                Ok(v) => v as f32,
                Err(_) => {
                    report.unparseable += 1;
                    continue;
                }
            },
        };
        let in_range = match var {
            Var::State(i) => STATE_VARS[i].contains(value),
            Var::Action(0) => value == 0.0 || value == 1.0,
            Var::Action(i) => CONT_ACTIONS[i - 1].contains(value),
            Var::Death => true,
        };
        if !in_range || !r.time_h.is_finite() {
            report.out_of_range += 1;
            continue;
        }
        out.push(Record {
            patient_id: r.patient_id,
            time_h: r.time_h,
            var,
            value,
            source: r.source,
        });
    }
    report.kept = out.len();
    if report.unknown_variable > 0 {
        log::warn!("{} records with unknown variable names skipped", report.unknown_variable);
    }
    (out, report)
}

#[derive(Clone, Debug)]
pub struct BuildConfig {
    /// A gap of at least this many hours between ventilation records ends
    /// an episode.
    pub gap_h: f64,
    pub min_steps: usize,
    pub dt_max_days: f64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            gap_h: 6.0,
            min_steps: 4,
            dt_max_days: 28.0,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct BuildOutput {
    /// Episodes with NaN wherever a step had no measurement.
    pub episodes: Vec<Episode>,
    pub excluded_patients: Vec<u64>,
    pub discarded_short: usize,
}

/// Best-ranked source first, then the median of what remains.
fn resolve_numeric(rs: &[&Record]) -> f32 {
    let best = rs.iter().map(|r| r.source).min().unwrap();
    let mut v: Vec<f32> = rs.iter().filter(|r| r.source == best).map(|r| r.value).collect();
    v.sort_by(f32::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        ((v[n / 2 - 1] as f64 + v[n / 2] as f64) / 2.0) as f32
    }
}

/// Value held for the longest time within `[lo, hi)`. The value in effect
/// at `lo` is the last record before it. Ties go to the lower code.
fn resolve_categorical(sorted: &[&Record], lo: f64, hi: f64) -> f32 {
    let mut current = sorted.iter().rev().find(|r| r.time_h < lo).map(|r| r.value);
    let mut t = lo;
    let mut held: BTreeMap<u32, f64> = BTreeMap::new();
    for r in sorted.iter().filter(|r| r.time_h >= lo && r.time_h < hi) {
        if let Some(c) = current {
            *held.entry(c.to_bits()).or_default() += r.time_h - t;
        }
        current = Some(r.value);
        t = r.time_h;
    }
    if let Some(c) = current {
        *held.entry(c.to_bits()).or_default() += hi - t;
    }
    let mut best: Option<(f32, f64)> = None;
    for (bits, d) in held {
        let v = f32::from_bits(bits);
        best = match best {
            Some((bv, bd)) if bd > d || (bd == d && bv <= v) => Some((bv, bd)),
            _ => Some((v, d)),
        };
    }
    best.map_or(f32::NAN, |(v, _)| v)
}

fn required_vars() -> Vec<Var> {
    let mut v: Vec<Var> = (0..N_STATE).map(Var::State).collect();
    v.extend([0, 1, 2, 4, 5].map(Var::Action));
    v
}

/// Splits each patient's records into hourly ventilation episodes.
///
/// Records are sorted internally, so the result does not depend on input
/// order. Episode ids are assigned sequentially over patients in id order.
pub fn build_episodes(records: &[Record], cfg: &BuildConfig) -> BuildOutput {
    let mut sorted: Vec<&Record> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (a.patient_id, a.var, a.source)
            .cmp(&(b.patient_id, b.var, b.source))
            .then(a.time_h.total_cmp(&b.time_h))
            .then(a.value.total_cmp(&b.value))
    });
    let mut out = BuildOutput::default();
    let mut next_id = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let pid = sorted[i].patient_id;
        let j = i + sorted[i..].iter().take_while(|r| r.patient_id == pid).count();
        let mut by_var: BTreeMap<Var, Vec<&Record>> = BTreeMap::new();
        for r in &sorted[i..j] {
            by_var.entry(r.var).or_default().push(r);
        }
        for rs in by_var.values_mut() {
            rs.sort_by(|a, b| a.time_h.total_cmp(&b.time_h).then(a.source.cmp(&b.source)));
        }
        i = j;
        if required_vars().iter().any(|v| !by_var.contains_key(v)) {
            out.excluded_patients.push(pid);
            continue;
        }
        match patient_episodes(pid, &by_var, cfg, &mut next_id) {
            Some((eps, short)) => {
                out.episodes.extend(eps);
                out.discarded_short += short;
            }
            None => out.excluded_patients.push(pid),
        }
    }
    out
}

fn patient_episodes(
    pid: u64,
    by_var: &BTreeMap<Var, Vec<&Record>>,
    cfg: &BuildConfig,
    next_id: &mut u64,
) -> Option<(Vec<Episode>, usize)> {
    let mut vent: Vec<f64> = by_var
        .iter()
        .filter(|(v, _)| v.is_ventilation())
        .flat_map(|(_, rs)| rs.iter().map(|r| r.time_h))
        .collect();
    vent.sort_by(f64::total_cmp);
    vent.dedup();
    let mut segments: Vec<(f64, f64)> = Vec::new();
    for &t in &vent {
        match segments.last_mut() {
            Some((_, end)) if t - *end < cfg.gap_h => *end = t,
            _ => segments.push((t, t)),
        }
    }
    let death = by_var.get(&Var::Death).map(|rs| rs[0].time_h);
    if let (Some(d), Some(&(first, _))) = (death, segments.first()) {
        if d < first {
            log::warn!("patient {pid}: death recorded before first ventilation, excluded");
            return None;
        }
    }
    let statics: Vec<(usize, f32)> = (0..N_STATE)
        .filter(|&k| STATE_VARS[k].is_static)
        .map(|k| (k, resolve_numeric(&by_var[&Var::State(k)])))
        .collect();

    let mut episodes = Vec::new();
    let mut short = 0;
    for (si, &(start, last)) in segments.iter().enumerate() {
        let n = (last - start).floor() as usize + 1;
        if n < cfg.min_steps {
            short += 1;
            continue;
        }
        let mut steps = Vec::with_capacity(n);
        for k in 0..n {
            let lo = start + k as f64;
            let hi = lo + 1.0;
            let mut state = [f32::NAN; N_STATE];
            let mut action = [f32::NAN; 6];
            for (&var, rs) in by_var {
                let at = |h: f64| rs.partition_point(|r| r.time_h < h);
                let window = &rs[at(lo)..at(hi)];
                match var {
                    Var::State(s) if !STATE_VARS[s].is_static => {
                        if !window.is_empty() {
                            state[s] = resolve_numeric(window);
                        }
                    }
                    Var::Action(0) => {
                        action[0] = resolve_categorical(&rs[at(start)..at(hi)], lo, hi);
                    }
                    Var::Action(a) => {
                        if !window.is_empty() {
                            action[a] = resolve_numeric(window);
                        }
                    }
                    _ => {}
                }
            }
            for &(s, v) in &statics {
                state[s] = v;
            }
            steps.push(Step { t: k as u32, state, action, rewards: RewardFields::UNSET });
        }
        let end = start + n as f64;
        let days = |h: f64| (h - start) / 24.0;
        let dt_death = death.filter(|&d| d >= start).map(days);
        let dt_re = segments.get(si + 1).map(|&(s2, _)| days(s2));
        let outcome = match (death, dt_re) {
            (Some(d), _) if d <= end => Outcome::DiedOnVent,
            (_, Some(re)) if re < cfg.dt_max_days => Outcome::Reintubated,
            (Some(_), _) if dt_death.unwrap() < cfg.dt_max_days => Outcome::DiedAfterExtubation,
            _ => Outcome::Extubated,
        };
        let ep = Episode {
            patient_id: pid,
            episode_id: *next_id,
            start_h: start,
            steps,
            outcome,
            dt_death_days: dt_death,
            dt_re_days: if outcome == Outcome::Reintubated { dt_re } else { None },
            split: None,
        };
        *next_id += 1;
        episodes.push(ep);
    }
    Some((episodes, short))
}

/// Forward fill within the episode. Every variable must be observed at the
/// first step. Driving pressure is carried only across pressure-control
/// steps and cleared under volume control.
pub fn impute(episode: &Episode) -> Result<Episode> {
    let mut ep = episode.clone();
    let reject = |what: &str, t: usize| {
        Err(Error::EpisodeRejected(format!(
            "episode {} (patient {}): `{what}` unobserved at t={t} with no earlier value",
            episode.episode_id, episode.patient_id
        )))
    };
    let mut last_state = [f32::NAN; N_STATE];
    let mut last_action = [f32::NAN; 6];
    for (k, step) in ep.steps.iter_mut().enumerate() {
        for (s, v) in step.state.iter_mut().enumerate() {
            if v.is_nan() {
                if last_state[s].is_nan() {
                    return reject(STATE_VARS[s].name, k);
                }
                *v = last_state[s];
            }
            last_state[s] = *v;
        }
        for a in 0..6 {
            let v = &mut step.action[a];
            if !v.is_nan() {
                last_action[a] = *v;
            } else if a != 3 {
                if last_action[a].is_nan() {
                    return reject(if a == 0 { "mode" } else { CONT_ACTIONS[a - 1].name }, k);
                }
                *v = last_action[a];
            }
        }
        if step.action[0] == Mode::Vcv.index() as f32 {
            step.action[3] = f32::NAN;
        } else if step.action[3].is_nan() {
            if last_action[3].is_nan() {
                return reject("dp", k);
            }
            step.action[3] = last_action[3];
        }
    }
    Ok(ep)
}

#[derive(Clone, Debug, Default)]
pub struct PreprocessReport {
    pub clean: CleanReport,
    pub excluded_patients: Vec<u64>,
    pub discarded_short: usize,
    /// Diagnostics of episodes dropped by imputation or validation.
    pub rejected: Vec<String>,
}

impl PreprocessReport {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "kept {}\nout_of_range {}\nunknown_variable {}\nunparseable {}\nexcluded_patients {}\ndiscarded_short {}\nrejected {}\n",
            self.clean.kept,
            self.clean.out_of_range,
            self.clean.unknown_variable,
            self.clean.unparseable,
            self.excluded_patients.len(),
            self.discarded_short,
            self.rejected.len()
        );
        for r in &self.rejected {
            out.push_str(&format!("rejected: {r}\n"));
        }
        out
    }
}

/// clean → build → impute → validate.
pub fn preprocess(
    raw: &[RawRecord],
    enc: &Encoding,
    cfg: &BuildConfig,
) -> (Vec<Episode>, PreprocessReport) {
    let (records, clean_report) = clean(raw, enc);
    let (episodes, mut report) = preprocess_records(&records, cfg);
    report.clean = clean_report;
    (episodes, report)
}

/// build → impute → validate on already cleaned records.
pub fn preprocess_records(records: &[Record], cfg: &BuildConfig) -> (Vec<Episode>, PreprocessReport) {
    let built = build_episodes(records, cfg);
    let mut report = PreprocessReport {
        clean: CleanReport { kept: records.len(), ..CleanReport::default() },
        excluded_patients: built.excluded_patients,
        discarded_short: built.discarded_short,
        rejected: Vec::new(),
    };
    let mut episodes = Vec::with_capacity(built.episodes.len());
    for ep in &built.episodes {
        match impute(ep).and_then(|e| e.validate().map(|_| e)) {
            Ok(e) => episodes.push(e),
            Err(e) => report.rejected.push(e.to_string()),
        }
    }
    (episodes, report)
}

pub const RECORDS_HEADER: &str = "patient_id,time_h,variable,value,source";

/// Records as CSV with header `patient_id,time_h,variable,value,source`.
/// Values that do not parse as numbers are kept as text.
pub fn write_records(path: &Path, records: &[RawRecord]) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::from(RECORDS_HEADER);
    out.push('\n');
    for r in records {
        let value = match &r.value {
            RawValue::Num(v) => v.to_string(),
            RawValue::Text(t) => t.clone(),
        };
        writeln!(out, "{},{},{},{},{}", r.patient_id, r.time_h, r.variable, value, r.source).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<RawRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == RECORDS_HEADER => {}
        _ => return Err(Error::parse(path.display(), "missing records header")),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let loc = || format!("{}:{}", path.display(), i + 1);
        let tok: Vec<&str> = line.split(',').collect();
        if tok.len() != 5 {
            return Err(Error::parse(loc(), format!("{} fields, expected 5", tok.len())));
        }
        let value = match tok[3].parse::<f64>() {
            Ok(v) => RawValue::Num(v),
            Err(_) => RawValue::Text(tok[3].to_string()),
        };
        out.push(RawRecord {
            patient_id: tok[0].parse().map_err(|e| Error::parse(loc(), e))?,
            time_h: tok[1].parse().map_err(|e| Error::parse(loc(), e))?,
            variable: tok[2].to_string(),
            value,
            source: tok[4].parse().map_err(|e| Error::parse(loc(), e))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn num(pid: u64, t: f64, var: &str, v: f64) -> RawRecord {
        RawRecord {
            patient_id: pid,
            time_h: t,
            variable: var.into(),
            value: RawValue::Num(v),
            source: 0,
        }
    }

    /// Every required variable at `t`, plus mode VCV and settings.
    fn full_hour(pid: u64, t: f64) -> Vec<RawRecord> {
        let mut v: Vec<RawRecord> = STATE_VARS
            .iter()
            .map(|s| num(pid, t, s.name, ((s.lo + s.hi) / 2.0).round() as f64))
            .collect();
        v.push(RawRecord {
            value: RawValue::Text("VCV".into()),
            ..num(pid, t, "mode", 0.0)
        });
        for (name, val) in [("rr", 14.0), ("vt", 6.0), ("peep", 5.0), ("fio2", 40.0)] {
            v.push(num(pid, t, name, val));
        }
        v
    }

    fn burst(pid: u64, from: f64, hours: usize) -> Vec<RawRecord> {
        (0..hours).flat_map(|k| full_hour(pid, from + k as f64)).collect()
    }

    fn run(raw: &[RawRecord]) -> (Vec<Episode>, PreprocessReport) {
        preprocess(raw, &Encoding::default(), &BuildConfig::default())
    }

    #[test]
    fn clean_drops_out_of_range_and_encodes() {
        let raw = vec![
            num(1, 0.0, "ph", 9.2),
            num(1, 0.0, "ph", 7.4),
            RawRecord { value: RawValue::Text("female".into()), ..num(1, 0.0, "sex", 0.0) },
            num(1, 0.0, "lactate", 2.0),
        ];
        let (recs, rep) = clean(&raw, &Encoding::default());
        assert_eq!(rep, CleanReport { kept: 2, out_of_range: 1, unknown_variable: 1, unparseable: 0 });
        assert_eq!(recs[0].value, 7.4);
        assert_eq!(recs[0].var, Var::State(12));
        assert_eq!(recs[1].value, 1.0);
    }

    #[test]
    fn gap_of_seven_hours_splits() {
        // burst ends at t=4; next starts at t=11: gap 7 h
        let mut raw = burst(1, 0.0, 5);
        raw.extend(burst(1, 11.0, 5));
        let (eps, rep) = run(&raw);
        assert!(rep.rejected.is_empty(), "{:?}", rep.rejected);
        assert_eq!(eps.len(), 2);
        assert_eq!(eps[0].outcome, Outcome::Reintubated);
        assert!((eps[0].dt_re_days.unwrap() - 11.0 / 24.0).abs() < 1e-12);
        assert_eq!(eps[1].outcome, Outcome::Extubated);
    }

    #[test]
    fn gap_of_five_hours_merges() {
        // ends at t=4, resumes at t=9: gap 5 h, steps 5..8 forward filled
        let mut raw = burst(1, 0.0, 5);
        raw.extend(burst(1, 9.0, 5));
        let (eps, rep) = run(&raw);
        assert!(rep.rejected.is_empty(), "{:?}", rep.rejected);
        assert_eq!(eps.len(), 1);
        assert_eq!(eps[0].len(), 14);
    }

    #[test]
    fn gap_threshold_boundary() {
        let mut raw = burst(1, 0.0, 5);
        raw.extend(burst(1, 10.0, 5));
        assert_eq!(run(&raw).0.len(), 2);
    }

    #[test]
    fn three_hour_burst_discarded() {
        let (eps, rep) = run(&burst(1, 0.0, 3));
        assert!(eps.is_empty());
        assert_eq!(rep.discarded_short, 1);
        assert_eq!(run(&burst(1, 0.0, 4)).0.len(), 1);
    }

    #[test]
    fn missing_required_variable_excludes_patient() {
        let raw: Vec<RawRecord> = burst(1, 0.0, 6).into_iter().filter(|r| r.variable != "inr").collect();
        let (eps, rep) = run(&raw);
        assert!(eps.is_empty());
        assert_eq!(rep.excluded_patients, vec![1]);
    }

    #[test]
    fn conflicts_use_priority_then_median() {
        let mut raw = burst(1, 0.0, 5);
        raw.retain(|r| !(r.variable == "heart_rate" && r.time_h == 0.0));
        raw.push(num(1, 0.1, "heart_rate", 80.0));
        raw.push(num(1, 0.2, "heart_rate", 90.0));
        raw.push(num(1, 0.3, "heart_rate", 120.0));
        raw.push(RawRecord { source: 1, ..num(1, 0.4, "heart_rate", 20.0) });
        let (eps, _) = run(&raw);
        assert_eq!(eps[0].steps[0].state[20], 90.0);
    }

    #[test]
    fn categorical_uses_longest_duration() {
        let mut raw = burst(1, 0.0, 5);
        // from t=2.3 PCV holds for 0.7 h of step 2
        raw.push(RawRecord { value: RawValue::Text("PCV".into()), ..num(1, 2.3, "mode", 0.0) });
        raw.push(num(1, 2.3, "dp", 12.0));
        raw.retain(|r| !(r.variable == "mode" && r.time_h >= 3.0));
        let (eps, rep) = run(&raw);
        assert!(rep.rejected.is_empty(), "{:?}", rep.rejected);
        let modes: Vec<f32> = eps[0].steps.iter().map(|s| s.action[0]).collect();
        assert_eq!(modes, vec![0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(eps[0].steps[4].action[3], 12.0);
    }

    #[test]
    fn death_outcomes() {
        let mut raw = burst(1, 0.0, 10);
        raw.push(num(1, 5.0, "death", 1.0));
        let (eps, _) = run(&raw);
        assert_eq!(eps[0].outcome, Outcome::DiedOnVent);

        let mut raw = burst(2, 0.0, 24);
        raw.push(num(2, 24.0 * 6.0, "death", 1.0));
        let (eps, _) = run(&raw);
        assert_eq!(eps[0].outcome, Outcome::DiedAfterExtubation);
        assert!((eps[0].dt_death_days.unwrap() - 6.0).abs() < 1e-12);

        let mut raw = burst(3, 0.0, 24);
        raw.push(num(3, 24.0 * 40.0, "death", 1.0));
        let (eps, _) = run(&raw);
        assert_eq!(eps[0].outcome, Outcome::Extubated);
        assert!(eps[0].died());
    }

    #[test]
    fn impute_forward_fills() {
        let mut raw = burst(1, 0.0, 4);
        raw.retain(|r| !(r.variable == "ph" && (r.time_h == 1.0 || r.time_h == 2.0)));
        for (t, v) in [(0.0, 7.3), (3.0, 7.4)] {
            raw.retain(|r| !(r.variable == "ph" && r.time_h == t));
            raw.push(num(1, t, "ph", v));
        }
        let (eps, _) = run(&raw);
        let ph: Vec<f32> = eps[0].steps.iter().map(|s| s.state[12]).collect();
        assert_eq!(ph, vec![7.3, 7.3, 7.3, 7.4]);
    }

    #[test]
    fn impute_leaves_full_episode_unchanged() {
        let out = build_episodes(&clean(&burst(1, 0.0, 5), &Encoding::default()).0, &BuildConfig::default());
        let ep = &out.episodes[0];
        let text = |e: &Episode| crate::data::format::write_string(std::slice::from_ref(e));
        assert_eq!(text(&impute(ep).unwrap()), text(ep));
    }

    #[test]
    fn leading_missing_value_rejected() {
        let mut raw = burst(1, 0.0, 5);
        raw.retain(|r| !(r.variable == "ph" && r.time_h == 0.0));
        let (eps, rep) = run(&raw);
        assert!(eps.is_empty());
        assert_eq!(rep.rejected.len(), 1);
        assert!(rep.rejected[0].contains("`ph`"));
    }

    #[test]
    fn records_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let mut raw = burst(4, 0.5, 2);
        raw.push(RawRecord { value: RawValue::Text("female".into()), ..num(4, 0.0, "sex", 0.0) });
        write_records(&path, &raw).unwrap();
        assert_eq!(read_records(&path).unwrap(), raw);
    }
}
