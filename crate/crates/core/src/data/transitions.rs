use super::episode::Episode;
use super::normalize::{normalize_action, NormStats};
use super::schema::{HybridAction, N_CONT, N_STATE};
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Flattened `(s, a, r, s', a', done)` tuples in normalized coordinates.
///
/// `next_*` action columns hold the dataset's next action (the same action
/// on terminal steps); they serve behavior-policy evaluation.
#[derive(Clone, Debug)]
pub struct Transitions {
    pub states: Matrix,
    pub next_states: Matrix,
    pub cont: Matrix,
    pub modes: Vec<usize>,
    pub next_cont: Matrix,
    pub next_modes: Vec<usize>,
    pub actions: Vec<HybridAction>,
    pub next_actions: Vec<HybridAction>,
    pub rewards: Vec<f32>,
    pub dones: Vec<f32>,
    /// Index of the source episode in the slice passed to [`Transitions::build`].
    pub episode: Vec<usize>,
    pub t: Vec<u32>,
    /// Rows at step 0.
    pub initial: Vec<usize>,
}

impl Transitions {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Requires imputed, reward-annotated episodes.
    pub fn build(episodes: &[&Episode], stats: &NormStats) -> Result<Transitions> {
        let n: usize = episodes.iter().map(|e| e.len()).sum();
        let mut states = Vec::with_capacity(n * N_STATE);
        let mut next_states = Vec::with_capacity(n * N_STATE);
        let mut cont = Vec::with_capacity(n * N_CONT);
        let mut next_cont = Vec::with_capacity(n * N_CONT);
        let mut out = Transitions {
            states: Matrix::zeros(0, 0),
            next_states: Matrix::zeros(0, 0),
            cont: Matrix::zeros(0, 0),
            modes: Vec::with_capacity(n),
            next_cont: Matrix::zeros(0, 0),
            next_modes: Vec::with_capacity(n),
            actions: Vec::with_capacity(n),
            next_actions: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            episode: Vec::with_capacity(n),
            t: Vec::with_capacity(n),
            initial: Vec::new(),
        };
        for (ei, ep) in episodes.iter().enumerate() {
            let acts: Vec<HybridAction> =
                ep.steps.iter().map(|s| s.hybrid_action()).collect::<Result<_>>()?;
            let zs: Vec<[f32; N_STATE]> =
                ep.steps.iter().map(|s| stats.normalize_state(&s.state)).collect();
            let last = ep.len() - 1;
            for (k, step) in ep.steps.iter().enumerate() {
                if !step.rewards.is_set() {
                    return Err(Error::InvalidArgument(format!(
                        "episode {} step {k} has no reward annotation",
                        ep.episode_id
                    )));
                }
                let kn = (k + 1).min(last);
                if k == 0 {
                    out.initial.push(out.rewards.len());
                }
                states.extend_from_slice(&zs[k]);
                next_states.extend_from_slice(&zs[kn]);
                cont.extend_from_slice(&normalize_action(&acts[k].continuous()));
                next_cont.extend_from_slice(&normalize_action(&acts[kn].continuous()));
                out.modes.push(acts[k].mode.index());
                out.next_modes.push(acts[kn].mode.index());
                out.actions.push(acts[k]);
                out.next_actions.push(acts[kn]);
                out.rewards.push(step.rewards.total());
                out.dones.push(if k == last { 1.0 } else { 0.0 });
                out.episode.push(ei);
                out.t.push(step.t);
            }
        }
        out.states = Matrix::from_vec(n, N_STATE, states)?;
        out.next_states = Matrix::from_vec(n, N_STATE, next_states)?;
        out.cont = Matrix::from_vec(n, N_CONT, cont)?;
        out.next_cont = Matrix::from_vec(n, N_CONT, next_cont)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::episode::{Outcome, RewardFields, Step};
    use crate::data::schema::{Mode, STATE_VARS};

    fn episode(id: u64, n: usize) -> Episode {
        Episode {
            patient_id: id,
            episode_id: id,
            start_h: 0.0,
            steps: (0..n)
                .map(|t| Step {
                    t: t as u32,
                    state: std::array::from_fn(|i| STATE_VARS[i].lo + t as f32),
                    action: HybridAction::from_parts(
                        if t % 2 == 0 { Mode::Vcv } else { Mode::Pcv },
                        [10.0 + t as f32, 6.0, 10.0, 5.0, 40.0],
                    )
                    .to_row(),
                    rewards: RewardFields { range: 0.5, tp: -1.0, outcome: t as f32 },
                })
                .collect(),
            outcome: Outcome::Extubated,
            dt_death_days: None,
            dt_re_days: None,
            split: None,
        }
    }

    #[test]
    fn layout() {
        let eps = [episode(0, 4), episode(1, 5)];
        let refs: Vec<&Episode> = eps.iter().collect();
        let stats = NormStats::fit(&eps).unwrap();
        let tr = Transitions::build(&refs, &stats).unwrap();
        assert_eq!(tr.len(), 9);
        assert_eq!(tr.initial, vec![0, 4]);
        assert_eq!(tr.dones, vec![0., 0., 0., 1., 0., 0., 0., 0., 1.]);
        assert_eq!(tr.rewards[2], 0.5 - 1.0 + 2.0);
        assert_eq!(tr.next_states.row(0), tr.states.row(1));
        assert_eq!(tr.next_states.row(3), tr.states.row(3));
        assert_eq!(tr.modes[..4], [0, 1, 0, 1]);
        assert_eq!(tr.next_modes[..4], [1, 0, 1, 1]);
        assert_eq!(tr.next_cont.row(0), tr.cont.row(1));
    }

    #[test]
    fn unannotated_rejected() {
        let mut e = episode(0, 4);
        e.steps[1].rewards = RewardFields::UNSET;
        let stats = NormStats::fit(std::slice::from_ref(&e)).unwrap();
        assert!(Transitions::build(&[&e], &stats).is_err());
    }
}
