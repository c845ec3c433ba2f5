use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kv::{join_widths, parse_widths, KvFile};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algo {
    FactoredCql,
    HybridIql,
    HybridEdac,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Algo::FactoredCql, Algo::HybridIql, Algo::HybridEdac];

    pub fn label(self) -> &'static str {
        match self {
            Algo::FactoredCql => "factored-cql",
            Algo::HybridIql => "hybrid-iql",
            Algo::HybridEdac => "hybrid-edac",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Full-scale hyperparameters.
    Paper,
    /// Small networks and step counts for a single CPU core.
    Desk,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            _ => Err(Error::InvalidArgument(format!("unknown preset `{s}`"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Paper => "paper",
            Preset::Desk => "desk",
        })
    }
}

/// Hyperparameters for all three learners. Field names double as config
/// file keys.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub gamma: f32,
    /// Target-network averaging coefficient.
    pub polyak: f32,
    /// Hidden layer widths shared by every network.
    pub hidden: Vec<usize>,
    pub checkpoint_interval: usize,
    pub log_interval: usize,
    pub cql_alpha: f32,
    pub cql_lr: f32,
    pub cql_clip: f32,
    pub iql_lr: f32,
    pub iql_beta: f32,
    pub iql_expectile: f32,
    /// Update the actor after the critics (otherwise between V and Q).
    pub iql_actor_last: bool,
    pub edac_lr: f32,
    pub edac_eta: f32,
    pub edac_ensemble: usize,
    pub edac_target_entropy_cont: f32,
    pub edac_target_entropy_disc: f32,
}

impl TrainConfig {
    pub fn paper() -> Self {
        TrainConfig {
            steps: 400_000,
            batch_size: 256,
            gamma: 0.99,
            polyak: 0.005,
            hidden: vec![256; 4],
            checkpoint_interval: 10_000,
            log_interval: 1000,
            cql_alpha: 10.0,
            cql_lr: 1e-5,
            cql_clip: 0.01,
            iql_lr: 3e-4,
            iql_beta: 100.0,
            iql_expectile: 0.8,
            iql_actor_last: true,
            edac_lr: 3e-5,
            edac_eta: 0.1,
            edac_ensemble: 10,
            edac_target_entropy_cont: -0.3,
            edac_target_entropy_disc: 0.3,
        }
    }

    /// Same objectives with 2x64 networks, 20k steps, batch 128 and larger
    /// learning rates for CQL and EDAC so that short runs make progress.
    pub fn desk() -> Self {
        TrainConfig {
            steps: 20_000,
            batch_size: 128,
            hidden: vec![64, 64],
            checkpoint_interval: 1000,
            log_interval: 100,
            cql_lr: 3e-4,
            edac_lr: 3e-4,
            edac_ensemble: 5,
            ..Self::paper()
        }
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Paper => Self::paper(),
            Preset::Desk => Self::desk(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if !(self.polyak > 0.0 && self.polyak <= 1.0) {
            return bad(format!("polyak {} outside (0, 1]", self.polyak));
        }
        if !(self.iql_expectile > 0.0 && self.iql_expectile < 1.0) {
            return bad(format!("iql_expectile {} outside (0, 1)", self.iql_expectile));
        }
        for (name, lr) in [("cql_lr", self.cql_lr), ("iql_lr", self.iql_lr), ("edac_lr", self.edac_lr)] {
            if !(lr > 0.0) {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.batch_size == 0 || self.steps == 0 || self.checkpoint_interval == 0 || self.log_interval == 0 {
            return bad("steps, batch_size and intervals must be positive".into());
        }
        if self.edac_ensemble < 2 {
            return bad("edac_ensemble must be at least 2".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden needs at least one non-empty layer".into());
        }
        if self.cql_alpha < 0.0 || self.iql_beta < 0.0 || self.edac_eta < 0.0 || !(self.cql_clip > 0.0) {
            return bad("negative regularization weight or non-positive clip".into());
        }
        Ok(())
    }

    /// Applies the keys of `kv` on top of `self`. Unknown keys are errors.
    pub fn apply(mut self, mut kv: KvFile) -> Result<Self> {
        kv.take_into("steps", &mut self.steps)?;
        kv.take_into("batch_size", &mut self.batch_size)?;
        kv.take_into("gamma", &mut self.gamma)?;
        kv.take_into("polyak", &mut self.polyak)?;
        if let Some(h) = kv.take::<String>("hidden")? {
            self.hidden = parse_widths(&h)?;
        }
        kv.take_into("checkpoint_interval", &mut self.checkpoint_interval)?;
        kv.take_into("log_interval", &mut self.log_interval)?;
        kv.take_into("cql_alpha", &mut self.cql_alpha)?;
        kv.take_into("cql_lr", &mut self.cql_lr)?;
        kv.take_into("cql_clip", &mut self.cql_clip)?;
        kv.take_into("iql_lr", &mut self.iql_lr)?;
        kv.take_into("iql_beta", &mut self.iql_beta)?;
        kv.take_into("iql_expectile", &mut self.iql_expectile)?;
        kv.take_into("iql_actor_last", &mut self.iql_actor_last)?;
        kv.take_into("edac_lr", &mut self.edac_lr)?;
        kv.take_into("edac_eta", &mut self.edac_eta)?;
        kv.take_into("edac_ensemble", &mut self.edac_ensemble)?;
        kv.take_into("edac_target_entropy_cont", &mut self.edac_target_entropy_cont)?;
        kv.take_into("edac_target_entropy_disc", &mut self.edac_target_entropy_disc)?;
        kv.finish()?;
        self.validate()?;
        Ok(self)
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::default();
        kv.set("steps", self.steps);
        kv.set("batch_size", self.batch_size);
        kv.set("gamma", self.gamma);
        kv.set("polyak", self.polyak);
        kv.set("hidden", join_widths(&self.hidden));
        kv.set("checkpoint_interval", self.checkpoint_interval);
        kv.set("log_interval", self.log_interval);
        kv.set("cql_alpha", self.cql_alpha);
        kv.set("cql_lr", self.cql_lr);
        kv.set("cql_clip", self.cql_clip);
        kv.set("iql_lr", self.iql_lr);
        kv.set("iql_beta", self.iql_beta);
        kv.set("iql_expectile", self.iql_expectile);
        kv.set("iql_actor_last", self.iql_actor_last);
        kv.set("edac_lr", self.edac_lr);
        kv.set("edac_eta", self.edac_eta);
        kv.set("edac_ensemble", self.edac_ensemble);
        kv.set("edac_target_entropy_cont", self.edac_target_entropy_cont);
        kv.set("edac_target_entropy_disc", self.edac_target_entropy_disc);
        kv
    }

    /// Hex SHA-256 of the canonical key/value text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_kv().to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
