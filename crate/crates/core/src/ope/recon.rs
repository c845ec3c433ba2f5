//! Coverage lost by discretizing a continuous policy and mapping bins back
//! to settings.

use crate::action_space::{discretize, DiscreteAction, ReconMethod, RestrictedActionSpace};
use crate::data::schema::CONT_ACTIONS;
use crate::data::HybridAction;
use crate::error::Result;
use crate::learners::{Policy, PolicyActions};
use crate::nn::Matrix;
use crate::rng::{stream, stream_rng};

use super::coverage::{coverage_score, CoverageModel, CoverageScore};

#[derive(Clone, Debug, PartialEq)]
pub struct ReconRow {
    /// `none` or a [`ReconMethod`] label.
    pub method: &'static str,
    pub score: CoverageScore,
    /// 1 for the highest `d_pi`.
    pub rank: usize,
    /// Reconstructed actions whose bins differ from the source bins.
    pub mismatches: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconStudy {
    /// In method order: `none` first, then [`ReconMethod::ALL`].
    pub rows: Vec<ReconRow>,
    pub states: usize,
}

impl ReconStudy {
    pub fn row(&self, method: &str) -> Option<&ReconRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// Rows sorted by rank.
    pub fn ranked(&self) -> Vec<&ReconRow> {
        let mut rows: Vec<&ReconRow> = self.rows.iter().collect();
        rows.sort_by_key(|r| r.rank);
        rows
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<18} {:>4} {:>10} {:>10}", "method", "rank", "d_pi", "state");
        for a in &CONT_ACTIONS {
            out.push_str(&format!(" {:>8}", a.name));
        }
        out.push_str(&format!(" {:>8} {:>8}\n", "mode", "mismatch"));
        for r in self.ranked() {
            out.push_str(&format!("{:<18} {:>4} {:>10.3} {:>10.3}", r.method, r.rank, r.score.d_pi, r.score.state));
            for c in r.score.cont {
                out.push_str(&format!(" {c:>8.3}"));
            }
            out.push_str(&format!(" {:>8.3} {:>8}\n", r.score.disc, r.mismatches));
        }
        out
    }
}

/// Scores `policy` on `states` as is and after a round trip through the
/// bins of `space` with every reconstruction method.
pub fn reconstruction_study(
    policy: &dyn Policy,
    model: &CoverageModel,
    states: &Matrix,
    space: &RestrictedActionSpace,
    seed: u64,
) -> Result<ReconStudy> {
    let acts = policy.act_batch(states)?;
    let source: Vec<HybridAction> = acts.to_hybrid()?.into_iter().map(clip_to_ranges).collect();
    let bins: Vec<DiscreteAction> =
        source.iter().map(|a| discretize(a, space.spec(), space.mask_vt())).collect::<Result<_>>()?;
    let mut rows = vec![ReconRow {
        method: "none",
        score: coverage_score(model, states, &PolicyActions::from_hybrid(&source)?)?,
        rank: 0,
        mismatches: 0,
    }];
    let mut rng = stream_rng(seed, stream::RECONSTRUCT);
    for method in ReconMethod::ALL {
        let mut recon = Vec::with_capacity(bins.len());
        let mut mismatches = 0;
        for d in &bins {
            let a = space.reconstruct(d, method, &mut rng)?;
            if discretize(&a, space.spec(), space.mask_vt())? != *d {
                mismatches += 1;
            }
            recon.push(a);
        }
        rows.push(ReconRow {
            method: method.label(),
            score: coverage_score(model, states, &PolicyActions::from_hybrid(&recon)?)?,
            rank: 0,
            mismatches,
        });
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[b].score.d_pi.total_cmp(&rows[a].score.d_pi).then(a.cmp(&b)));
    for (rank, i) in order.into_iter().enumerate() {
        rows[i].rank = rank + 1;
    }
    Ok(ReconStudy { rows, states: states.rows() })
}

/// Guards against rounding just past a range end after denormalization.
pub(crate) fn clip_to_ranges(a: HybridAction) -> HybridAction {
    let mut cont = a.continuous();
    for (v, r) in cont.iter_mut().zip(CONT_ACTIONS.iter()) {
        *v = v.clamp(r.lo, r.hi);
    }
    HybridAction::from_parts(a.mode, cont)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action_space::BinSpec;
    use crate::learners::UniformPolicy;
    use crate::ope::coverage::CoverageConfig;
    use crate::data::N_STATE;

    #[test]
    fn round_trip_preserves_bins_and_ranks_every_method() {
        let policy = UniformPolicy { seed: 4 };
        let states = Matrix::zeros(64, N_STATE);
        let acts = policy.act_batch(&states).unwrap().to_hybrid().unwrap();
        let acts: Vec<HybridAction> = acts.into_iter().map(clip_to_ranges).collect();
        let space = RestrictedActionSpace::build(&acts, BinSpec::default(), false).unwrap();
        let cfg = CoverageConfig { hidden: vec![8], ..CoverageConfig::desk() };
        let model = CoverageModel::new(&cfg, &mut stream_rng(1, 1));
        let study = reconstruction_study(&policy, &model, &states, &space, 9).unwrap();
        assert_eq!(study.rows.len(), 5);
        assert!(study.rows.iter().all(|r| r.mismatches == 0));
        let mut ranks: Vec<usize> = study.rows.iter().map(|r| r.rank).collect();
        ranks.sort();
        assert_eq!(ranks, vec![1, 2, 3, 4, 5]);
        assert!(study.to_text().lines().count() == 6);
    }
}
