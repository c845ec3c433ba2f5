//! State z-scoring from training statistics and the fixed affine map of
//! continuous settings onto [-1, 1].

use std::fmt::Write as _;
use std::path::Path;

use super::episode::{Episode, Split};
use super::schema::{CONT_ACTIONS, N_CONT, N_STATE, STATE_VARS};
use crate::error::{Error, Result};

pub const STD_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Per-state-variable statistics. Values are rounded to `f32` so that the
/// text sidecar round-trips bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub vars: [VarStats; N_STATE],
}

fn round32(v: f64) -> f64 {
    v as f32 as f64
}

impl NormStats {
    /// Statistics over every step of the training-split episodes. If no
    /// episode carries a split tag, all episodes are used.
    pub fn fit(episodes: &[Episode]) -> Result<NormStats> {
        let tagged = episodes.iter().any(|e| e.split.is_some());
        let train: Vec<&Episode> = episodes
            .iter()
            .filter(|e| !tagged || e.split == Some(Split::Train))
            .collect();
        let n: usize = train.iter().map(|e| e.len()).sum();
        if n == 0 {
            return Err(Error::InvalidArgument("no training steps to fit statistics".into()));
        }
        let mut sum = [0.0f64; N_STATE];
        let mut min = [f64::INFINITY; N_STATE];
        let mut max = [f64::NEG_INFINITY; N_STATE];
        for s in train.iter().flat_map(|e| &e.steps) {
            for (i, &v) in s.state.iter().enumerate() {
                if v.is_nan() {
                    return Err(Error::NonFinite("state value while fitting statistics"));
                }
                sum[i] += v as f64;
                min[i] = min[i].min(v as f64);
                max[i] = max[i].max(v as f64);
            }
        }
        let mean: [f64; N_STATE] = std::array::from_fn(|i| sum[i] / n as f64);
        let mut sq = [0.0f64; N_STATE];
        for s in train.iter().flat_map(|e| &e.steps) {
            for (i, &v) in s.state.iter().enumerate() {
                sq[i] += (v as f64 - mean[i]).powi(2);
            }
        }
        let vars = std::array::from_fn(|i| {
            let mut std = (sq[i] / n as f64).sqrt();
            if std < STD_FLOOR {
                log::warn!("`{}` has zero variance; std floored", STATE_VARS[i].name);
                std = STD_FLOOR;
            }
            VarStats {
                mean: round32(mean[i]),
                std: round32(std),
                min: round32(min[i]),
                max: round32(max[i]),
            }
        });
        Ok(NormStats { vars })
    }

    pub fn normalize_state(&self, state: &[f32; N_STATE]) -> [f32; N_STATE] {
        std::array::from_fn(|i| {
            let v = &self.vars[i];
            ((state[i] as f64 - v.mean) / v.std) as f32
        })
    }

    pub fn denormalize_state(&self, z: &[f32; N_STATE]) -> [f32; N_STATE] {
        std::array::from_fn(|i| {
            let v = &self.vars[i];
            (z[i] as f64 * v.std + v.mean) as f32
        })
    }

    /// Sidecar text: one `name mean std min max` line per variable.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# name mean std min max\n");
        for (spec, v) in STATE_VARS.iter().zip(&self.vars) {
            writeln!(
                out,
                "{} {:.8e} {:.8e} {:.8e} {:.8e}",
                spec.name, v.mean, v.std, v.min, v.max
            )
            .unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<NormStats> {
        let mut vars = [None; N_STATE];
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let loc = || format!("stats line {}", ln + 1);
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 5 {
                return Err(Error::parse(loc(), "expected `name mean std min max`"));
            }
            let i = super::schema::state_index(tok[0])
                .ok_or_else(|| Error::parse(loc(), format!("unknown variable `{}`", tok[0])))?;
            let mut f = [0.0f64; 4];
            for (k, t) in tok[1..].iter().enumerate() {
                f[k] = t.parse().map_err(|e| Error::parse(loc(), e))?;
            }
            vars[i] = Some(VarStats {
                mean: round32(f[0]),
                std: round32(f[1]),
                min: round32(f[2]),
                max: round32(f[3]),
            });
        }
        let mut out = [VarStats { mean: 0.0, std: 1.0, min: 0.0, max: 0.0 }; N_STATE];
        for (i, v) in vars.iter().enumerate() {
            out[i] = v.ok_or_else(|| {
                Error::parse("stats", format!("missing variable `{}`", STATE_VARS[i].name))
            })?;
        }
        Ok(NormStats { vars: out })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<NormStats> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Maps valid settings onto [-1, 1].
pub fn normalize_action(cont: &[f32; N_CONT]) -> [f32; N_CONT] {
    std::array::from_fn(|i| {
        let s = &CONT_ACTIONS[i];
        (2.0 * (cont[i] as f64 - s.lo as f64) / (s.hi as f64 - s.lo as f64) - 1.0) as f32
    })
}

pub fn denormalize_action(z: &[f32; N_CONT]) -> [f32; N_CONT] {
    std::array::from_fn(|i| {
        let s = &CONT_ACTIONS[i];
        ((z[i] as f64 + 1.0) / 2.0 * (s.hi as f64 - s.lo as f64) + s.lo as f64) as f32
    })
}
