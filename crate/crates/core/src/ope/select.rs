//! Checkpoint selection: keep the best-covered tenth, then take the
//! highest estimated value.

use crate::error::{Error, Result};

/// Fraction of checkpoints kept by the coverage filter.
pub const TOP_FRACTION: f64 = 0.1;
/// Below this many checkpoints the filter keeps only the best-covered one.
pub const MIN_CHECKPOINTS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointMetrics {
    pub id: String,
    pub step: u64,
    pub v_pi: f64,
    pub d_pi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// Index into the slice passed to [`select_policy`].
    pub index: usize,
    pub id: String,
    pub step: u64,
    /// Number of checkpoints that passed the coverage filter.
    pub candidates: usize,
    /// Set when fewer than [`MIN_CHECKPOINTS`] were offered.
    pub fallback: bool,
}

/// The `ceil(10%)` best checkpoints by `d_pi` (every checkpoint tied with
/// the last admitted one is admitted too), then the highest `v_pi` among
/// them. Remaining ties go to the earliest step, then the smallest id.
/// With fewer than 10 checkpoints only the best `d_pi` is admitted.
pub fn select_policy(metrics: &[CheckpointMetrics]) -> Result<Selection> {
    if metrics.is_empty() {
        return Err(Error::InvalidArgument("no checkpoints to select from".into()));
    }
    if metrics.iter().any(|m| !m.v_pi.is_finite() || !m.d_pi.is_finite()) {
        return Err(Error::NonFinite("checkpoint metrics"));
    }
    let fallback = metrics.len() < MIN_CHECKPOINTS;
    let keep = if fallback { 1 } else { (metrics.len() as f64 * TOP_FRACTION).ceil() as usize };
    if fallback {
        log::warn!(
            "only {} checkpoints; selecting the best-covered one without the value filter",
            metrics.len()
        );
    }
    let earlier = |a: &CheckpointMetrics, b: &CheckpointMetrics| (a.step, &a.id) < (b.step, &b.id);
    let mut by_cover: Vec<usize> = (0..metrics.len()).collect();
    by_cover.sort_by(|&a, &b| {
        let (ma, mb) = (&metrics[a], &metrics[b]);
        mb.d_pi.total_cmp(&ma.d_pi).then(ma.step.cmp(&mb.step)).then(ma.id.cmp(&mb.id))
    });
    let threshold = metrics[by_cover[keep - 1]].d_pi;
    let admitted: Vec<usize> = if fallback {
        vec![by_cover[0]]
    } else {
        by_cover.into_iter().filter(|&i| metrics[i].d_pi >= threshold).collect()
    };
    let mut best = admitted[0];
    for &i in &admitted[1..] {
        let (m, b) = (&metrics[i], &metrics[best]);
        if m.v_pi > b.v_pi || (m.v_pi == b.v_pi && earlier(m, b)) {
            best = i;
        }
    }
    Ok(Selection {
        index: best,
        id: metrics[best].id.clone(),
        step: metrics[best].step,
        candidates: admitted.len(),
        fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;

    fn ck(step: u64, v_pi: f64, d_pi: f64) -> CheckpointMetrics {
        CheckpointMetrics { id: format!("ck{step:06}"), step, v_pi, d_pi }
    }

    #[test]
    fn best_value_with_poor_coverage_is_never_chosen() {
        let mut m: Vec<_> = (1..=20).map(|i| ck(i * 100, i as f64, -(i as f64))).collect();
        m.push(ck(2100, 1000.0, -500.0));
        let s = select_policy(&m).unwrap();
        assert_ne!(s.step, 2100);
        // 21 checkpoints keep ceil(2.1) = 3: d = -1, -2, -3, best value at step 300
        assert_eq!((s.candidates, s.step), (3, 300));
    }

    #[test]
    fn equal_coverage_reduces_to_value_argmax() {
        let m: Vec<_> = (0..12).map(|i| ck(i, ((i * 7) % 12) as f64, -1.0)).collect();
        let s = select_policy(&m).unwrap();
        assert_eq!(s.candidates, 12);
        assert_eq!(m[s.index].v_pi, 11.0);
    }

    #[test]
    fn value_ties_go_to_the_earliest_step() {
        let m: Vec<_> = (0..10).map(|i| ck(1000 - i * 10, 5.0, 0.0)).collect();
        assert_eq!(select_policy(&m).unwrap().step, 910);
    }

    #[test]
    fn few_checkpoints_fall_back_to_best_coverage() {
        let m = vec![ck(1, 10.0, -5.0), ck(2, 0.0, -1.0), ck(3, 3.0, -2.0)];
        let s = select_policy(&m).unwrap();
        assert!(s.fallback);
        assert_eq!(s.step, 2);
    }

    #[test]
    fn empty_and_non_finite_are_rejected() {
        assert!(select_policy(&[]).is_err());
        assert!(select_policy(&[ck(1, f64::NAN, 0.0)]).is_err());
    }

    proptest! {
        #[test]
        fn invariant_to_ordering(
            vals in proptest::collection::vec((0i32..5, 0i32..5), 1..40),
            seed in any::<u64>(),
        ) {
            let m: Vec<_> = vals.iter().enumerate().map(|(i, &(v, d))| ck(i as u64, v as f64, d as f64)).collect();
            let mut shuffled = m.clone();
            shuffled.shuffle(&mut stream_rng(seed, 0));
            let a = select_policy(&m).unwrap();
            let b = select_policy(&shuffled).unwrap();
            prop_assert_eq!(a.id, b.id);
            prop_assert_eq!(a.candidates, b.candidates);
        }
    }
}
