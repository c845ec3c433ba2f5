//! Rank correlation and the reward-effectiveness check.

use crate::data::{Episode, Transitions};
use crate::error::{Error, Result};
use crate::rewards::{range_reward, RangeSpec};

/// Ranks starting at 1; tied values share the mean of their ranks.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Spearman correlation. `undefined` is set when either input has no
/// variation, in which case `rho` is 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correlation {
    pub rho: f64,
    pub undefined: bool,
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::dim("spearman", x.len(), y.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spearman input"));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if x.len() < 2 || sxx == 0.0 || syy == 0.0 {
        return Ok(Correlation { rho: 0.0, undefined: true });
    }
    Ok(Correlation { rho: sxy / (sxx * syy).sqrt(), undefined: false })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Effectiveness {
    /// Episode-mean Q against episode-mean range reward.
    pub range: Correlation,
    /// Episode-mean Q against episode length.
    pub length: Correlation,
    pub episodes: usize,
}

/// Per-episode means of `q` (one value per row of `tr`) correlated with
/// the episodes' mean range reward and length. `episodes` must be the
/// slice `tr` was built from. The range reward is scored on each step's
/// own state with `ranges`, independently of the reward used for
/// training.
pub fn reward_effectiveness(
    q: &[f32],
    tr: &Transitions,
    episodes: &[&Episode],
    ranges: &RangeSpec,
) -> Result<Effectiveness> {
    if q.len() != tr.len() {
        return Err(Error::dim("reward_effectiveness", tr.len(), q.len()));
    }
    let mut sum = vec![0.0f64; episodes.len()];
    let mut count = vec![0usize; episodes.len()];
    for (i, &e) in tr.episode.iter().enumerate() {
        if e >= episodes.len() {
            return Err(Error::dim("reward_effectiveness", episodes.len(), e + 1));
        }
        sum[e] += q[i] as f64;
        count[e] += 1;
    }
    let mut mean_q = Vec::new();
    let mut mean_range = Vec::new();
    let mut length = Vec::new();
    for (e, ep) in episodes.iter().enumerate() {
        if count[e] == 0 {
            continue;
        }
        mean_q.push(sum[e] / count[e] as f64);
        mean_range.push(ep.steps.iter().map(|s| range_reward(&s.state, ranges)).sum::<f64>() / ep.len() as f64);
        length.push(ep.len() as f64);
    }
    Ok(Effectiveness {
        range: spearman(&mean_q, &mean_range)?,
        length: spearman(&mean_q, &length)?,
        episodes: mean_q.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ties_share_average_rank() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn identity_and_reversal() {
        let x = [0.3, -1.0, 2.5, 7.0, 0.0];
        let y: Vec<f64> = x.iter().map(|v| v * 3.0 + 1.0).collect();
        let z: Vec<f64> = x.iter().map(|v| -v.powi(3)).collect();
        assert!((spearman(&x, &y).unwrap().rho - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &z).unwrap().rho + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_input_is_flagged() {
        let c = spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(c, Correlation { rho: 0.0, undefined: true });
    }

    #[test]
    fn textbook_value_with_ties() {
        // Pearson correlation of the rank vectors computed by hand.
        let x = [1.0, 2.0, 2.0, 3.0];
        let y = [1.0, 3.0, 2.0, 4.0];
        // ranks x = [1, 2.5, 2.5, 4], y = [1, 3, 2, 4]; covariance 4.5,
        // variances 4.5 and 5.
        let want = 4.5 / (4.5f64 * 5.0).sqrt();
        assert!((spearman(&x, &y).unwrap().rho - want).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn bounded_and_symmetric(v in proptest::collection::vec((-100i32..100, -100i32..100), 2..30)) {
            let x: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = v.iter().map(|p| p.1 as f64).collect();
            let a = spearman(&x, &y).unwrap();
            let b = spearman(&y, &x).unwrap();
            prop_assert!(a.rho.abs() <= 1.0 + 1e-12);
            prop_assert!((a.rho - b.rho).abs() < 1e-12);
        }

        #[test]
        fn invariant_to_monotone_transforms(v in proptest::collection::vec(-50.0f64..50.0, 2..30)) {
            let y: Vec<f64> = v.iter().enumerate().map(|(i, _)| i as f64).collect();
            let t: Vec<f64> = v.iter().map(|x| x.exp()).collect();
            let a = spearman(&v, &y).unwrap();
            let b = spearman(&t, &y).unwrap();
            prop_assert!((a.rho - b.rho).abs() < 1e-9);
        }
    }
}
