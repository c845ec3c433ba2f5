use std::fmt;
use std::str::FromStr;

use super::schema::{HybridAction, N_STATE, STATE_VARS};
use crate::error::{Error, Result};

/// How a ventilation episode ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Extubated,
    DiedOnVent,
    DiedAfterExtubation,
    Reintubated,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [
        Outcome::Extubated,
        Outcome::DiedOnVent,
        Outcome::DiedAfterExtubation,
        Outcome::Reintubated,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Outcome::Extubated => "extubated",
            Outcome::DiedOnVent => "died_on_vent",
            Outcome::DiedAfterExtubation => "died_after_extubation",
            Outcome::Reintubated => "reintubated",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Outcome> {
        Outcome::ALL
            .into_iter()
            .find(|o| o.label() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown outcome `{s}`")))
    }
}

/// Reward components attached to a step. NaN until annotated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardFields {
    pub range: f32,
    pub tp: f32,
    /// Outcome-driven component: the VFD reward or the mortality reward.
    pub outcome: f32,
}

impl RewardFields {
    pub const UNSET: RewardFields = RewardFields {
        range: f32::NAN,
        tp: f32::NAN,
        outcome: f32::NAN,
    };

    pub fn total(&self) -> f32 {
        self.range + self.tp + self.outcome
    }

    pub fn is_set(&self) -> bool {
        !(self.range.is_nan() || self.tp.is_nan() || self.outcome.is_nan())
    }
}

/// One hour of ventilation. Missing values are NaN until imputation.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub t: u32,
    pub state: [f32; N_STATE],
    /// Mode code followed by the five settings; see [`HybridAction::to_row`].
    pub action: [f32; 6],
    pub rewards: RewardFields,
}

impl Step {
    pub fn hybrid_action(&self) -> Result<HybridAction> {
        HybridAction::from_row(&self.action)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn label(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub patient_id: u64,
    pub episode_id: u64,
    /// Hours from the patient's time origin to the first step.
    pub start_h: f64,
    pub steps: Vec<Step>,
    pub outcome: Outcome,
    /// Time of death in days since the start of this episode, if the
    /// patient died at any point.
    pub dt_death_days: Option<f64>,
    /// Start of the next episode in days since the start of this one, if
    /// the patient was reintubated.
    pub dt_re_days: Option<f64>,
    pub split: Option<Split>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Days on the ventilator: step count / 24.
    pub fn dt_mv_days(&self) -> f64 {
        self.steps.len() as f64 / 24.0
    }

    pub fn died(&self) -> bool {
        self.dt_death_days.is_some()
    }

    /// Outcome metadata must agree with the episode timeline.
    pub fn check_outcome_timing(&self) -> Result<()> {
        let mv = self.dt_mv_days();
        let ctx = || format!("episode {} (patient {})", self.episode_id, self.patient_id);
        if let Some(re) = self.dt_re_days {
            if re < mv {
                return Err(Error::OutcomeTiming(format!(
                    "{}: reintubation at {re} d precedes extubation at {mv} d",
                    ctx()
                )));
            }
        }
        if let Some(d) = self.dt_death_days {
            if d < mv && self.outcome != Outcome::DiedOnVent {
                return Err(Error::OutcomeTiming(format!(
                    "{}: death at {d} d before extubation at {mv} d",
                    ctx()
                )));
            }
        }
        let consistent = match self.outcome {
            Outcome::Extubated => true,
            Outcome::DiedOnVent | Outcome::DiedAfterExtubation => self.dt_death_days.is_some(),
            Outcome::Reintubated => self.dt_re_days.is_some(),
        };
        if !consistent {
            return Err(Error::OutcomeTiming(format!(
                "{}: outcome {} without its timing",
                ctx(),
                self.outcome
            )));
        }
        Ok(())
    }

    /// Full post-imputation check: hourly steps from 0, no missing state,
    /// every value inside its valid range, valid actions.
    pub fn validate(&self) -> Result<()> {
        let reject = |msg: String| {
            Err(Error::EpisodeRejected(format!(
                "episode {} (patient {}): {msg}",
                self.episode_id, self.patient_id
            )))
        };
        if self.steps.len() < 4 {
            return reject(format!("{} steps, at least 4 required", self.steps.len()));
        }
        for (k, step) in self.steps.iter().enumerate() {
            if step.t as usize != k {
                return reject(format!("step {k} has timestamp {}", step.t));
            }
            for (v, spec) in step.state.iter().zip(&STATE_VARS) {
                if v.is_nan() {
                    return reject(format!("`{}` missing at t={k}", spec.name));
                }
                if !spec.contains(*v) {
                    return reject(format!("`{}` = {v} outside range at t={k}", spec.name));
                }
            }
            if let Err(e) = step.hybrid_action().and_then(|a| a.validate()) {
                return reject(format!("t={k}: {e}"));
            }
        }
        self.check_outcome_timing()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::Mode;

    fn fixture(n: usize) -> Episode {
        let state = std::array::from_fn(|i| STATE_VARS[i].lo);
        let action = HybridAction::from_parts(Mode::Vcv, [14.0, 6.0, 0.0, 5.0, 40.0]).to_row();
        Episode {
            patient_id: 1,
            episode_id: 1,
            start_h: 0.0,
            steps: (0..n)
                .map(|t| Step { t: t as u32, state, action, rewards: RewardFields::UNSET })
                .collect(),
            outcome: Outcome::Extubated,
            dt_death_days: None,
            dt_re_days: None,
            split: None,
        }
    }

    #[test]
    fn valid_fixture_passes() {
        fixture(5).validate().unwrap();
        assert!((fixture(48).dt_mv_days() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn short_or_gappy_rejected() {
        assert!(fixture(3).validate().is_err());
        let mut e = fixture(5);
        e.steps[2].t = 7;
        assert!(e.validate().is_err());
        let mut e = fixture(5);
        e.steps[1].state[3] = f32::NAN;
        assert!(matches!(e.validate(), Err(Error::EpisodeRejected(_))));
    }

    #[test]
    fn timing_checks() {
        let mut e = fixture(48);
        e.outcome = Outcome::Reintubated;
        e.dt_re_days = Some(1.5);
        assert!(matches!(e.check_outcome_timing(), Err(Error::OutcomeTiming(_))));
        e.dt_re_days = Some(3.0);
        e.check_outcome_timing().unwrap();
        e.outcome = Outcome::DiedAfterExtubation;
        assert!(e.check_outcome_timing().is_err());
    }

    #[test]
    fn outcome_labels_round_trip() {
        for o in Outcome::ALL {
            assert_eq!(o.label().parse::<Outcome>().unwrap(), o);
        }
    }
}
