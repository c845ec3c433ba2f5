//! Canonical dataset file.
//!
//! Comma-separated text with two header lines naming the columns of the two
//! row kinds:
//!
//! ```text
//! #S,patient_id,episode_id,t,map,...,height,mode,rr,vt,dp,peep,fio2,r_range,r_tp,r_outcome
//! #E,patient_id,episode_id,start_h,outcome,dt_mv_days,dt_death_days,dt_re_days,split
//! S,1,1,0,...
//! S,1,1,1,...
//! E,1,1,5,extubated,0.08333333333333333,,,train
//! ```
//!
//! Each episode is its `S` rows in time order followed by one `E` summary
//! row. Empty fields are missing values. Numbers use the shortest decimal
//! form that round-trips.

use std::fmt::Write as _;
use std::path::Path;

use super::episode::{Episode, Outcome, RewardFields, Split, Step};
use super::schema::{ACTION_COLUMNS, N_STATE, STATE_VARS};
use crate::error::{Error, Result};

pub const REWARD_COLUMNS: [&str; 3] = ["r_range", "r_tp", "r_outcome"];

pub fn step_header() -> String {
    let mut h = String::from("#S,patient_id,episode_id,t");
    for v in &STATE_VARS {
        h.push(',');
        h.push_str(v.name);
    }
    for c in ACTION_COLUMNS.iter().chain(&REWARD_COLUMNS) {
        h.push(',');
        h.push_str(c);
    }
    h
}

pub const EPISODE_HEADER: &str =
    "#E,patient_id,episode_id,start_h,outcome,dt_mv_days,dt_death_days,dt_re_days,split";

fn push_f32(out: &mut String, v: f32) {
    out.push(',');
    if !v.is_nan() {
        write!(out, "{v}").unwrap();
    }
}

fn push_opt(out: &mut String, v: Option<f64>) {
    out.push(',');
    if let Some(v) = v {
        write!(out, "{v}").unwrap();
    }
}

pub fn write_string(episodes: &[Episode]) -> String {
    let mut out = String::new();
    out.push_str(&step_header());
    out.push('\n');
    out.push_str(EPISODE_HEADER);
    out.push('\n');
    for ep in episodes {
        for s in &ep.steps {
            write!(out, "S,{},{},{}", ep.patient_id, ep.episode_id, s.t).unwrap();
            for &v in s.state.iter().chain(&s.action) {
                push_f32(&mut out, v);
            }
            for v in [s.rewards.range, s.rewards.tp, s.rewards.outcome] {
                push_f32(&mut out, v);
            }
            out.push('\n');
        }
        write!(
            out,
            "E,{},{},{},{},{}",
            ep.patient_id,
            ep.episode_id,
            ep.start_h,
            ep.outcome,
            ep.dt_mv_days()
        )
        .unwrap();
        push_opt(&mut out, ep.dt_death_days);
        push_opt(&mut out, ep.dt_re_days);
        out.push(',');
        if let Some(s) = ep.split {
            out.push_str(s.label());
        }
        out.push('\n');
    }
    out
}

pub fn write(path: &Path, episodes: &[Episode]) -> Result<()> {
    std::fs::write(path, write_string(episodes)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<Episode>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}:{location}", path.display()),
            message,
        },
        other => other,
    })
}

fn field<T: std::str::FromStr>(tok: &str, name: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    tok.parse()
        .map_err(|e| Error::parse(format!("line {line}"), format!("column `{name}`: {e}")))
}

fn opt_f32(tok: &str, name: &str, line: usize) -> Result<f32> {
    if tok.is_empty() {
        Ok(f32::NAN)
    } else {
        field(tok, name, line)
    }
}

fn opt_f64(tok: &str, name: &str, line: usize) -> Result<Option<f64>> {
    if tok.is_empty() {
        Ok(None)
    } else {
        field(tok, name, line).map(Some)
    }
}

pub fn parse(text: &str) -> Result<Vec<Episode>> {
    let step_cols = 4 + N_STATE + ACTION_COLUMNS.len() + REWARD_COLUMNS.len();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match (lines.next(), lines.next()) {
        (Some((_, a)), Some((_, b))) if a == step_header() && b == EPISODE_HEADER => {}
        _ => return Err(Error::parse("line 1", "missing or unexpected header lines")),
    }
    let mut episodes = Vec::new();
    let mut pending: Vec<Step> = Vec::new();
    let mut pending_ids: Option<(u64, u64)> = None;
    for (ln, line) in lines {
        if line.is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split(',').collect();
        match tok[0] {
            "S" => {
                if tok.len() != step_cols {
                    return Err(Error::parse(
                        format!("line {ln}"),
                        format!("{} fields, expected {step_cols}", tok.len()),
                    ));
                }
                let ids = (field(tok[1], "patient_id", ln)?, field(tok[2], "episode_id", ln)?);
                if pending_ids.is_some_and(|p| p != ids) {
                    return Err(Error::parse(
                        format!("line {ln}"),
                        "step rows of a new episode before the previous summary row",
                    ));
                }
                pending_ids = Some(ids);
                let mut vals = Vec::with_capacity(step_cols - 4);
                for (j, t) in tok[4..].iter().enumerate() {
                    vals.push(opt_f32(t, "value", ln).map_err(|_| {
                        Error::parse(format!("line {ln}"), format!("bad number in field {}", j + 5))
                    })?);
                }
                pending.push(Step {
                    t: field(tok[3], "t", ln)?,
                    state: std::array::from_fn(|i| vals[i]),
                    action: std::array::from_fn(|i| vals[N_STATE + i]),
                    rewards: RewardFields {
                        range: vals[N_STATE + 6],
                        tp: vals[N_STATE + 7],
                        outcome: vals[N_STATE + 8],
                    },
                });
            }
            "E" => {
                if tok.len() != 9 {
                    return Err(Error::parse(
                        format!("line {ln}"),
                        format!("{} fields, expected 9", tok.len()),
                    ));
                }
                let ids = (field(tok[1], "patient_id", ln)?, field(tok[2], "episode_id", ln)?);
                if pending_ids != Some(ids) {
                    return Err(Error::parse(
                        format!("line {ln}"),
                        "summary row does not follow its step rows",
                    ));
                }
                let split = match tok[8] {
                    "" => None,
                    "train" => Some(Split::Train),
                    "test" => Some(Split::Test),
                    other => {
                        return Err(Error::parse(format!("line {ln}"), format!("split `{other}`")))
                    }
                };
                let outcome: Outcome = tok[4]
                    .parse()
                    .map_err(|e| Error::parse(format!("line {ln}"), e))?;
                let ep = Episode {
                    patient_id: ids.0,
                    episode_id: ids.1,
                    start_h: field(tok[3], "start_h", ln)?,
                    steps: std::mem::take(&mut pending),
                    outcome,
                    dt_death_days: opt_f64(tok[6], "dt_death_days", ln)?,
                    dt_re_days: opt_f64(tok[7], "dt_re_days", ln)?,
                    split,
                };
                let mv: f64 = field(tok[5], "dt_mv_days", ln)?;
                if (mv - ep.dt_mv_days()).abs() > 1e-9 {
                    return Err(Error::parse(
                        format!("line {ln}"),
                        format!("dt_mv_days {mv} disagrees with {} steps", ep.len()),
                    ));
                }
                pending_ids = None;
                episodes.push(ep);
            }
            other => {
                return Err(Error::parse(format!("line {ln}"), format!("unknown row kind `{other}`")))
            }
        }
    }
    if pending_ids.is_some() {
        return Err(Error::parse("end of file", "step rows without a summary row"));
    }
    Ok(episodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::{HybridAction, Mode};

    fn sample() -> Vec<Episode> {
        let mut state: [f32; N_STATE] = std::array::from_fn(|i| STATE_VARS[i].lo + 0.1 * i as f32);
        state[5] = f32::NAN;
        let a = HybridAction::from_parts(Mode::Pcv, [14.0, 6.5, 12.0, 5.0, 40.0]).to_row();
        let b = HybridAction::from_parts(Mode::Vcv, [20.0, 7.25, 0.0, 8.0, 60.0]).to_row();
        let steps = (0..5)
            .map(|t| Step {
                t,
                state,
                action: if t % 2 == 0 { a } else { b },
                rewards: RewardFields { range: 1.0 / 3.0, tp: -1.0, outcome: 0.1 },
            })
            .collect();
        vec![Episode {
            patient_id: 3,
            episode_id: 9,
            start_h: 12.5,
            steps,
            outcome: Outcome::Reintubated,
            dt_death_days: None,
            dt_re_days: Some(4.0),
            split: Some(Split::Test),
        }]
    }

    #[test]
    fn round_trip_is_exact() {
        let eps = sample();
        let text = write_string(&eps);
        let back = parse(&text).unwrap();
        assert_eq!(write_string(&back), text);
        assert_eq!(back[0].steps[0].rewards, eps[0].steps[0].rewards);
        assert!(back[0].steps[0].state[5].is_nan());
        assert_eq!(back[0].steps[1].hybrid_action().unwrap().dp, None);
    }

    #[test]
    fn header_names_columns() {
        let h = step_header();
        assert!(h.starts_with("#S,patient_id,episode_id,t,map,dbp,"));
        assert!(h.ends_with(",height,mode,rr,vt,dp,peep,fio2,r_range,r_tp,r_outcome"));
        assert_eq!(h.split(',').count(), 4 + 25 + 6 + 3);
    }

    #[test]
    fn malformed_inputs_rejected() {
        let text = write_string(&sample());
        let no_summary: String = text.lines().filter(|l| !l.starts_with('E')).map(|l| format!("{l}\n")).collect();
        assert!(parse(&no_summary).is_err());
        assert!(parse(&text.replacen("#S", "#X", 1)).is_err());
        assert!(parse(&text.replacen("reintubated", "cured", 1)).is_err());
    }
}
