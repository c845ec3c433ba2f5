//! Variable catalogue: state variables with their units and valid ranges,
//! and the hybrid action with its valid settings.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One observable variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarSpec {
    pub name: &'static str,
    pub unit: &'static str,
    pub lo: f32,
    pub hi: f32,
    /// Patient-level constants (demographics) are read once per patient.
    pub is_static: bool,
}

impl VarSpec {
    const fn dynamic(name: &'static str, unit: &'static str, lo: f32, hi: f32) -> Self {
        VarSpec { name, unit, lo, hi, is_static: false }
    }

    const fn fixed(name: &'static str, unit: &'static str, lo: f32, hi: f32) -> Self {
        VarSpec { name, unit, lo, hi, is_static: true }
    }

    pub fn contains(&self, v: f32) -> bool {
        v >= self.lo && v <= self.hi
    }
}

pub const N_STATE: usize = 25;

pub const STATE_VARS: [VarSpec; N_STATE] = [
    VarSpec::dynamic("map", "mmHg", 30.0, 200.0),
    VarSpec::dynamic("dbp", "mmHg", 20.0, 120.0),
    VarSpec::dynamic("sbp", "mmHg", 50.0, 260.0),
    VarSpec::dynamic("pinsp", "cmH2O", 10.0, 60.0),
    VarSpec::dynamic("vt_obs", "ml", 80.0, 2040.0),
    VarSpec::dynamic("hb", "mmol/l", 2.0, 20.0),
    VarSpec::dynamic("wbc", "Gpt/l", 0.0, 30.0),
    VarSpec::dynamic("sao2", "%", 40.0, 100.0),
    VarSpec::dynamic("spo2", "%", 30.0, 100.0),
    VarSpec::dynamic("pao2", "mmHg", 20.0, 600.0),
    VarSpec::dynamic("paco2", "mmHg", 20.0, 100.0),
    VarSpec::dynamic("base_excess", "mmol/l", -20.0, 30.0),
    VarSpec::dynamic("ph", "-", 6.0, 8.0),
    VarSpec::dynamic("iv_fluid", "ml/4h", 0.0, 20000.0),
    VarSpec::dynamic("urine", "ml/4h", 0.0, 2000.0),
    VarSpec::dynamic("vasopressor", "NE", 0.0, 5.0),
    VarSpec::dynamic("potassium", "mmol/l", 2.0, 10.0),
    VarSpec::dynamic("chloride", "mmol/l", 80.0, 150.0),
    VarSpec::dynamic("sodium", "mmol/l", 120.0, 180.0),
    VarSpec::dynamic("inr", "-", 0.9, 15.0),
    VarSpec::dynamic("heart_rate", "1/min", 20.0, 200.0),
    VarSpec::fixed("age", "years", 18.0, 120.0),
    VarSpec::fixed("sex", "-", 0.0, 1.0),
    VarSpec::fixed("weight", "kg", 40.0, 140.0),
    VarSpec::fixed("height", "cm", 155.0, 200.0),
];

/// Column indices of the variables used by the range reward.
pub mod idx {
    pub const MAP: usize = 0;
    pub const DBP: usize = 1;
    pub const SBP: usize = 2;
    pub const PINSP: usize = 3;
    pub const VT_OBS: usize = 4;
    pub const SAO2: usize = 7;
    pub const SPO2: usize = 8;
    pub const PAO2: usize = 9;
    pub const PACO2: usize = 10;
    pub const BASE_EXCESS: usize = 11;
    pub const PH: usize = 12;
    pub const IV_FLUID: usize = 13;
    pub const URINE: usize = 14;
    pub const VASOPRESSOR: usize = 15;
    pub const HEART_RATE: usize = 20;
    pub const AGE: usize = 21;
    pub const SEX: usize = 22;
    pub const WEIGHT: usize = 23;
    pub const HEIGHT: usize = 24;
}

pub fn state_index(name: &str) -> Option<usize> {
    STATE_VARS.iter().position(|v| v.name == name)
}

/// Ventilation control mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// Volume control: tidal volume is the set target.
    Vcv = 0,
    /// Pressure control: driving pressure is the set target.
    Pcv = 1,
}

impl Mode {
    pub const COUNT: usize = 2;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Mode> {
        match i {
            0 => Ok(Mode::Vcv),
            1 => Ok(Mode::Pcv),
            _ => Err(Error::InvalidArgument(format!("mode index {i}"))),
        }
    }

    pub fn from_code(v: f32) -> Result<Mode> {
        if v == 0.0 {
            Ok(Mode::Vcv)
        } else if v == 1.0 {
            Ok(Mode::Pcv)
        } else {
            Err(Error::OutOfRange {
                dimension: "mode".into(),
                value: v as f64,
                lo: 0.0,
                hi: 1.0,
            })
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Vcv => "VCV",
            Mode::Pcv => "PCV",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vcv" | "volume" | "volume control" => Ok(Mode::Vcv),
            "pcv" | "pressure" | "pressure control" => Ok(Mode::Pcv),
            _ => Err(Error::InvalidArgument(format!("unknown ventilation mode `{s}`"))),
        }
    }
}

/// Column names of the action block, in file order.
pub const ACTION_COLUMNS: [&str; 6] = ["mode", "rr", "vt", "dp", "peep", "fio2"];

pub const N_CONT: usize = 5;

/// Valid settings of the five continuous action dimensions.
pub const CONT_ACTIONS: [VarSpec; N_CONT] = [
    VarSpec::dynamic("rr", "1/min", 5.0, 60.0),
    VarSpec::dynamic("vt", "ml/kg", 3.0, 12.0),
    VarSpec::dynamic("dp", "cmH2O", 0.0, 26.0),
    VarSpec::dynamic("peep", "cmH2O", 0.0, 20.0),
    VarSpec::dynamic("fio2", "%", 21.0, 100.0),
];

pub mod act {
    pub const RR: usize = 0;
    pub const VT: usize = 1;
    pub const DP: usize = 2;
    pub const PEEP: usize = 3;
    pub const FIO2: usize = 4;
}

/// Ventilator settings for one hour.
///
/// Driving pressure is only set under pressure control; under volume
/// control it is `None`. Tidal volume is always recorded (under PCV it is
/// the delivered volume).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HybridAction {
    pub mode: Mode,
    pub rr: f32,
    pub vt: f32,
    pub dp: Option<f32>,
    pub peep: f32,
    pub fio2: f32,
}

impl HybridAction {
    /// Continuous settings in `CONT_ACTIONS` order; an unset driving
    /// pressure reads as the bottom of its range.
    pub fn continuous(&self) -> [f32; N_CONT] {
        [
            self.rr,
            self.vt,
            self.dp.unwrap_or(CONT_ACTIONS[act::DP].lo),
            self.peep,
            self.fio2,
        ]
    }

    /// Builds an action from a mode and continuous settings; driving
    /// pressure is dropped under volume control.
    pub fn from_parts(mode: Mode, cont: [f32; N_CONT]) -> Self {
        HybridAction {
            mode,
            rr: cont[act::RR],
            vt: cont[act::VT],
            dp: (mode == Mode::Pcv).then_some(cont[act::DP]),
            peep: cont[act::PEEP],
            fio2: cont[act::FIO2],
        }
    }

    /// Checks every active dimension against its valid range.
    pub fn validate(&self) -> Result<()> {
        for (spec, v) in CONT_ACTIONS.iter().zip(self.continuous()) {
            if !spec.contains(v) {
                return Err(Error::OutOfRange {
                    dimension: spec.name.into(),
                    value: v as f64,
                    lo: spec.lo as f64,
                    hi: spec.hi as f64,
                });
            }
        }
        if self.mode == Mode::Pcv && self.dp.is_none() {
            return Err(Error::InvalidArgument("PCV action without driving pressure".into()));
        }
        Ok(())
    }

    /// File representation: mode code then five settings, NaN where unset.
    pub fn to_row(&self) -> [f32; 6] {
        [
            self.mode.index() as f32,
            self.rr,
            self.vt,
            self.dp.unwrap_or(f32::NAN),
            self.peep,
            self.fio2,
        ]
    }

    pub fn from_row(row: &[f32; 6]) -> Result<Self> {
        let mode = Mode::from_code(row[0])?;
        let missing = row[1..].iter().enumerate().find(|&(i, v)| v.is_nan() && i != act::DP);
        if let Some((i, _)) = missing {
            return Err(Error::InvalidArgument(format!(
                "action column `{}` missing",
                CONT_ACTIONS[i].name
            )));
        }
        let a = HybridAction {
            mode,
            rr: row[1],
            vt: row[2],
            dp: match mode {
                Mode::Vcv => None,
                Mode::Pcv if row[3].is_nan() => {
                    return Err(Error::InvalidArgument("PCV action without driving pressure".into()))
                }
                Mode::Pcv => Some(row[3]),
            },
            peep: row[4],
            fio2: row[5],
        };
        Ok(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalogue_ranges() {
        let ph = &STATE_VARS[idx::PH];
        assert_eq!((ph.name, ph.lo, ph.hi), ("ph", 6.0, 8.0));
        assert!(!ph.contains(9.2));
        assert_eq!(STATE_VARS[idx::PAO2].hi, 600.0);
        assert_eq!(STATE_VARS[idx::HEART_RATE].lo, 20.0);
        assert_eq!(STATE_VARS[idx::IV_FLUID].hi, 20000.0);
        assert_eq!(STATE_VARS.iter().filter(|v| v.is_static).count(), 4);
        for (i, v) in STATE_VARS.iter().enumerate() {
            assert_eq!(state_index(v.name), Some(i));
            assert!(v.lo < v.hi);
        }
    }

    #[test]
    fn action_ranges() {
        let lims: Vec<(f32, f32)> = CONT_ACTIONS.iter().map(|v| (v.lo, v.hi)).collect();
        assert_eq!(
            lims,
            vec![(5.0, 60.0), (3.0, 12.0), (0.0, 26.0), (0.0, 20.0), (21.0, 100.0)]
        );
    }

    #[test]
    fn row_round_trip_and_mode_gating() {
        let a = HybridAction::from_parts(Mode::Vcv, [14.0, 6.0, 12.0, 5.0, 40.0]);
        assert_eq!(a.dp, None);
        assert_eq!(HybridAction::from_row(&a.to_row()).unwrap(), a);
        let p = HybridAction::from_parts(Mode::Pcv, [14.0, 6.0, 12.0, 5.0, 40.0]);
        assert_eq!(p.dp, Some(12.0));
        assert_eq!(HybridAction::from_row(&p.to_row()).unwrap(), p);
        let mut bad = p.to_row();
        bad[3] = f32::NAN;
        assert!(HybridAction::from_row(&bad).is_err());
    }

    #[test]
    fn validate_names_dimension() {
        let a = HybridAction::from_parts(Mode::Vcv, [14.0, 13.0, 0.0, 5.0, 40.0]);
        match a.validate() {
            Err(Error::OutOfRange { dimension, .. }) => assert_eq!(dimension, "vt"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("VCV".parse::<Mode>().unwrap(), Mode::Vcv);
        assert_eq!("pcv".parse::<Mode>().unwrap(), Mode::Pcv);
        assert!("hfov".parse::<Mode>().is_err());
        assert!(Mode::from_code(0.5).is_err());
    }
}
