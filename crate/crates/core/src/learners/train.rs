use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use super::config::{Algo, TrainConfig};
use super::cql::FactoredCql;
use super::edac::HybridEdac;
use super::iql::HybridIql;
use super::policy::mode_one_hot;
use crate::action_space::{discretize, RestrictedActionSpace};
use crate::data::Transitions;
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, Matrix};
use crate::rng::{stream, stream_rng, Rng as StreamRng};

/// A minibatch in normalized coordinates.
#[derive(Clone, Debug)]
pub struct Batch {
    pub states: Matrix,
    pub next_states: Matrix,
    pub cont: Matrix,
    pub modes: Vec<usize>,
    pub rewards: Vec<f32>,
    pub dones: Vec<f32>,
    /// Restricted-space index of each action; empty unless requested.
    pub combos: Vec<usize>,
}

impl Batch {
    pub fn gather(tr: &Transitions, rows: &[usize], combos: Option<&[usize]>) -> Batch {
        Batch {
            states: tr.states.select_rows(rows),
            next_states: tr.next_states.select_rows(rows),
            cont: tr.cont.select_rows(rows),
            modes: rows.iter().map(|&r| tr.modes[r]).collect(),
            rewards: rows.iter().map(|&r| tr.rewards[r]).collect(),
            dones: rows.iter().map(|&r| tr.dones[r]).collect(),
            combos: combos.map_or_else(Vec::new, |c| rows.iter().map(|&r| c[r]).collect()),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// `[state, continuous action, one-hot mode]`, the hybrid critic input.
pub fn critic_input(states: &Matrix, cont: &Matrix, modes: &[usize]) -> Result<Matrix> {
    Matrix::hcat(&[states, cont, &mode_one_hot(modes)])
}

/// Loss components every `log_interval` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainLog {
    pub columns: Vec<&'static str>,
    pub rows: Vec<(usize, Vec<f64>)>,
}

impl TrainLog {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|(_, r)| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (step, row) in &self.rows {
            write!(out, "{step}").unwrap();
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub checkpoints: Vec<Checkpoint>,
    pub log: TrainLog,
    /// Batches dropped because of non-finite intermediate values.
    pub skipped_batches: usize,
}

pub(crate) trait Learner {
    fn loss_names(&self) -> Vec<&'static str>;
    /// One gradient step; `None` when the batch was skipped.
    fn update(&mut self, batch: &Batch, rng: &mut StreamRng) -> Result<Option<Vec<f64>>>;
    fn save(&self, ck: &mut Checkpoint);
}

/// Trains `algo` for `cfg.steps` gradient steps with batches drawn
/// uniformly with replacement. `space` is the restricted action space of
/// the training data; only FactoredCQL reads it.
pub fn train(
    algo: Algo,
    data: &Transitions,
    space: &RestrictedActionSpace,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let mut init = stream_rng(seed, stream::INIT);
    let mut combos = None;
    let mut learner: Box<dyn Learner> = match algo {
        Algo::FactoredCql => {
            let idx = data
                .actions
                .iter()
                .map(|a| space.index_of(&discretize(a, space.spec(), space.mask_vt())?))
                .collect::<Result<Vec<_>>>()?;
            combos = Some(idx);
            Box::new(FactoredCql::new(space, cfg, &mut init))
        }
        Algo::HybridIql => Box::new(HybridIql::new(cfg, &mut init)),
        Algo::HybridEdac => Box::new(HybridEdac::new(cfg, &mut init)),
    };
    let mut batch_rng = stream_rng(seed, stream::BATCH);
    let mut actor_rng = stream_rng(seed, stream::ACTOR);
    let mut log = TrainLog { columns: learner.loss_names(), rows: Vec::new() };
    let mut checkpoints = Vec::new();
    let mut skipped = 0;
    let config_hash = cfg.hash();
    let mut rows = vec![0usize; cfg.batch_size];
    for step in 1..=cfg.steps {
        for r in rows.iter_mut() {
            *r = batch_rng.random_range(0..data.len());
        }
        let batch = Batch::gather(data, &rows, combos.as_deref());
        match learner.update(&batch, &mut actor_rng)? {
            None => skipped += 1,
            Some(losses) => {
                if step % cfg.log_interval == 0 || step == cfg.steps {
                    log.rows.push((step, losses));
                }
            }
        }
        if step % cfg.checkpoint_interval == 0 || step == cfg.steps {
            let mut ck = Checkpoint::new(seed, step as u64, config_hash.clone()).with_meta("algo", algo);
            learner.save(&mut ck);
            if algo == Algo::FactoredCql {
                ck.push("action_space", &combo_matrix(space));
            }
            checkpoints.push(ck);
        }
    }
    if skipped > 0 {
        log::warn!("{algo}: skipped {skipped} batches with non-finite values");
    }
    Ok(TrainOutput { checkpoints, log, skipped_batches: skipped })
}

fn combo_matrix(space: &RestrictedActionSpace) -> Matrix {
    let width = space.spec().dims.len();
    let data = space.combos().iter().flat_map(|c| c.0.iter().map(|&b| b as f32)).collect();
    Matrix::from_vec(space.len(), width, data).unwrap()
}
