use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::episode::{Episode, Split};
use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

/// Summary of a split: episode counts per stratum `(length quartile,
/// mortality)` as `(train, test)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SplitReport {
    pub strata: BTreeMap<(usize, bool), (usize, usize)>,
    /// Strata holding a single patient, assigned wholly to train.
    pub singleton_strata: usize,
}

fn quartile_edges(lengths: &mut [usize]) -> [usize; 3] {
    lengths.sort_unstable();
    let q = |p: f64| lengths[((lengths.len() - 1) as f64 * p).round() as usize];
    [q(0.25), q(0.5), q(0.75)]
}

fn quartile(edges: &[usize; 3], len: usize) -> usize {
    edges.iter().filter(|&&e| len > e).count()
}

/// Patient-level stratified split. A patient's stratum is the length
/// quartile and mortality flag of its first episode; all of a patient's
/// episodes land in the same split. Within each stratum patients are
/// shuffled and moved to test while that brings the stratum's test episode
/// count closer to `test_frac` of its episodes.
pub fn stratified_split(
    episodes: &mut [Episode],
    test_frac: f64,
    seed: u64,
) -> Result<SplitReport> {
    if episodes.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "stratified split needs at least 10 episodes, got {}",
            episodes.len()
        )));
    }
    if !(0.0..1.0).contains(&test_frac) {
        return Err(Error::InvalidArgument(format!("test fraction {test_frac}")));
    }
    let mut lengths: Vec<usize> = episodes.iter().map(Episode::len).collect();
    let edges = quartile_edges(&mut lengths);

    // patient -> (first episode start, stratum, episode count)
    let mut patients: BTreeMap<u64, (f64, (usize, bool), usize)> = BTreeMap::new();
    for ep in episodes.iter() {
        let key = (quartile(&edges, ep.len()), ep.died());
        let e = patients.entry(ep.patient_id).or_insert((ep.start_h, key, 0));
        if ep.start_h < e.0 {
            *e = (ep.start_h, key, e.2);
        }
        e.2 += 1;
    }
    let mut strata: BTreeMap<(usize, bool), Vec<(u64, usize)>> = BTreeMap::new();
    for (&pid, &(_, key, n)) in &patients {
        strata.entry(key).or_default().push((pid, n));
    }

    let mut rng = stream_rng(seed, stream::SPLIT);
    let mut assign: BTreeMap<u64, Split> = BTreeMap::new();
    let mut report = SplitReport::default();
    for (key, mut members) in strata {
        let total: usize = members.iter().map(|m| m.1).sum();
        if members.len() == 1 {
            log::warn!("stratum {key:?} has a single patient; assigned to train");
            report.singleton_strata += 1;
            assign.insert(members[0].0, Split::Train);
            report.strata.insert(key, (total, 0));
            continue;
        }
        members.shuffle(&mut rng);
        let target = test_frac * total as f64;
        let mut n_test = 0usize;
        for (pid, n) in members {
            let closer = ((n_test + n) as f64 - target).abs() < (n_test as f64 - target).abs();
            if closer {
                n_test += n;
                assign.insert(pid, Split::Test);
            } else {
                assign.insert(pid, Split::Train);
            }
        }
        report.strata.insert(key, (total - n_test, n_test));
    }
    for ep in episodes.iter_mut() {
        ep.split = Some(assign[&ep.patient_id]);
    }
    Ok(report)
}

pub fn select(episodes: &[Episode], split: Split) -> Vec<&Episode> {
    episodes.iter().filter(|e| e.split == Some(split)).collect()
}
