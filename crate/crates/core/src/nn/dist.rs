use super::Matrix;
use crate::error::{Error, Result};

pub const LOG_2PI: f64 = 1.837_877_066_409_345_5;

/// Stabilizer inside `log(1 − tanh² + ε)`.
pub const TANH_EPS: f64 = 1e-6;

/// Row-wise `log Σ exp`, shifted by the row maximum.
pub fn logsumexp_rows(m: &Matrix) -> Vec<f32> {
    (0..m.rows())
        .map(|r| {
            let row = m.row(r);
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            if !max.is_finite() {
                return max;
            }
            let s: f64 = row.iter().map(|&v| ((v - max) as f64).exp()).sum();
            (max as f64 + s.ln()) as f32
        })
        .collect()
}

pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..m.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut s = 0.0f64;
        for v in row.iter_mut() {
            let e = ((*v - max) as f64).exp();
            *v = e as f32;
            s += e;
        }
        for v in row.iter_mut() {
            *v = (*v as f64 / s) as f32;
        }
    }
    out
}

/// Row-wise log-softmax.
pub fn categorical_log_probs(logits: &Matrix) -> Matrix {
    let lse = logsumexp_rows(logits);
    let mut out = logits.clone();
    for (r, l) in lse.iter().enumerate() {
        out.row_mut(r).iter_mut().for_each(|v| *v -= l);
    }
    out
}

/// `log N(x; mean, exp(log_std)²)`.
#[inline]
pub fn gaussian_log_prob(x: f64, mean: f64, log_std: f64) -> f64 {
    let z = (x - mean) * (-log_std).exp();
    -0.5 * z * z - log_std - 0.5 * LOG_2PI
}

/// Diagonal Gaussian with clamped log standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianHead {
    pub mean: Vec<f32>,
    pub log_std: Vec<f32>,
}

impl GaussianHead {
    /// IQL actor clamp.
    pub const IQL_LOG_STD: (f32, f32) = (-20.0, 2.0);
    /// EDAC actor clamp.
    pub const EDAC_LOG_STD: (f32, f32) = (-3.0, 1.0);

    pub fn new(mean: Vec<f32>, log_std: Vec<f32>, bounds: (f32, f32)) -> Result<Self> {
        if mean.len() != log_std.len() {
            return Err(Error::dim("GaussianHead::new", mean.len(), log_std.len()));
        }
        let (lo, hi) = bounds;
        if lo >= hi {
            return Err(Error::InvalidArgument(format!("log-std bounds [{lo}, {hi}]")));
        }
        let log_std = log_std.into_iter().map(|v| v.clamp(lo, hi)).collect();
        Ok(GaussianHead { mean, log_std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std(&self) -> Vec<f32> {
        self.log_std.iter().map(|v| v.exp()).collect()
    }

    /// Reparameterized sample `mean + std · noise`.
    pub fn sample_with(&self, noise: &[f32]) -> Vec<f32> {
        self.mean
            .iter()
            .zip(&self.log_std)
            .zip(noise)
            .map(|((m, l), e)| m + l.exp() * e)
            .collect()
    }

    pub fn log_prob(&self, x: &[f32]) -> f64 {
        x.iter()
            .zip(&self.mean)
            .zip(&self.log_std)
            .map(|((&x, &m), &l)| gaussian_log_prob(x as f64, m as f64, l as f64))
            .sum()
    }
}

/// Squashes a pre-tanh sample and returns its log-density after the
/// change of variables, summed over dimensions.
pub fn tanh_gaussian_log_prob(head: &GaussianHead, raw: &[f32]) -> Result<(Vec<f32>, f64)> {
    if raw.len() != head.dim() {
        return Err(Error::dim("tanh_gaussian_log_prob", head.dim(), raw.len()));
    }
    let mut squashed = Vec::with_capacity(raw.len());
    let mut lp = head.log_prob(raw);
    for &u in raw {
        let a = (u as f64).tanh();
        lp -= (1.0 - a * a + TANH_EPS).ln();
        squashed.push(a as f32);
    }
    Ok((squashed, lp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn logsumexp_cases() {
        let m = Matrix::from_rows(&[vec![0.0, 0.0], vec![3.5], vec![1000.0, 1000.0]].map(|r| {
            let mut r = r;
            r.resize(2, f32::NEG_INFINITY);
            r
        }))
        .unwrap();
        let l = logsumexp_rows(&m);
        assert!((l[0] - std::f32::consts::LN_2).abs() < 1e-6);
        assert_eq!(l[1], 3.5);
        assert!((l[2] - (1000.0 + std::f32::consts::LN_2)).abs() < 1e-3);
    }

    #[test]
    fn softmax_and_log_probs_agree() {
        let m = Matrix::from_rows(&[vec![1.0, -2.0, 0.5]]).unwrap();
        let p = softmax_rows(&m);
        let lp = categorical_log_probs(&m);
        let s: f32 = p.row(0).iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
        for (a, b) in p.row(0).iter().zip(lp.row(0)) {
            assert!((a.ln() - b).abs() < 1e-5);
            assert!(*b <= 0.0);
        }
    }

    #[test]
    fn standard_normal_at_mode() {
        let head = GaussianHead::new(vec![0.0], vec![0.0], GaussianHead::EDAC_LOG_STD).unwrap();
        let (a, lp) = tanh_gaussian_log_prob(&head, &[0.0]).unwrap();
        assert_eq!(a, vec![0.0]);
        let expected = -0.5 * LOG_2PI - (1.0f64 + 1e-6).ln();
        assert!((lp - expected).abs() < 1e-12);
        assert!((lp + 0.9189).abs() < 1e-4);
    }

    #[test]
    fn large_raw_sample_stays_finite() {
        let head = GaussianHead::new(vec![0.0; 2], vec![0.0; 2], GaussianHead::EDAC_LOG_STD).unwrap();
        let (a, lp) = tanh_gaussian_log_prob(&head, &[40.0, -40.0]).unwrap();
        assert!(lp.is_finite());
        assert!(a.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn clamp_bounds() {
        let head = GaussianHead::new(vec![0.0; 3], vec![-50.0, 0.0, 9.0], GaussianHead::EDAC_LOG_STD)
            .unwrap();
        assert_eq!(head.log_std, vec![-3.0, 0.0, 1.0]);
        let iql = GaussianHead::new(vec![0.0], vec![-50.0], GaussianHead::IQL_LOG_STD).unwrap();
        assert_eq!(iql.log_std, vec![-20.0]);
    }

    #[test]
    fn squashed_density_matches_histogram() {
        // Monte-Carlo check of the change-of-variables density.
        let head = GaussianHead::new(vec![0.3], vec![-0.4], GaussianHead::EDAC_LOG_STD).unwrap();
        let mut rng = stream_rng(11, 0);
        let n = 1_000_000;
        let bins = 40;
        let mut counts = vec![0usize; bins];
        for _ in 0..n {
            let e: f32 = StandardNormal.sample(&mut rng);
            let a = head.sample_with(&[e])[0].tanh();
            let idx = (((a + 1.0) / 2.0) * bins as f32).floor() as usize;
            counts[idx.min(bins - 1)] += 1;
        }
        let width = 2.0 / bins as f64;
        let mut checked = 0;
        for (i, &c) in counts.iter().enumerate() {
            let empirical = c as f64 / (n as f64 * width);
            if empirical < 0.2 {
                continue;
            }
            // average the analytic density over the bin with a fine grid
            let lo = -1.0 + i as f64 * width;
            let grid = 200;
            let analytic: f64 = (0..grid)
                .map(|k| {
                    let a = lo + (k as f64 + 0.5) * width / grid as f64;
                    let u = a.atanh() as f32;
                    tanh_gaussian_log_prob(&head, &[u]).unwrap().1.exp()
                })
                .sum::<f64>()
                / grid as f64;
            assert!(
                (empirical - analytic).abs() / analytic < 0.02,
                "bin {i}: empirical {empirical} analytic {analytic}"
            );
            checked += 1;
        }
        assert!(checked > 10);
    }
}
