use super::Matrix;
use crate::error::{Error, Result};

/// Asymmetric squared loss `mean(|tau − 1{diff < 0}| · diff²)`.
pub fn expectile_loss(diff: &[f32], tau: f32) -> f64 {
    if diff.is_empty() {
        return 0.0;
    }
    diff.iter()
        .map(|&d| {
            let w = if d < 0.0 { 1.0 - tau } else { tau } as f64;
            w * (d as f64) * (d as f64)
        })
        .sum::<f64>()
        / diff.len() as f64
}

/// Derivative of [`expectile_loss`] with respect to each `diff` entry.
pub fn expectile_loss_grad(diff: &[f32], tau: f32) -> Vec<f32> {
    let n = diff.len().max(1) as f32;
    diff.iter()
        .map(|&d| {
            let w = if d < 0.0 { 1.0 - tau } else { tau };
            2.0 * w * d / n
        })
        .collect()
}

/// Quantile fractions `(i + 0.5) / n`.
pub fn quantile_midpoints(n: usize) -> Vec<f32> {
    (0..n).map(|i| (i as f32 + 0.5) / n as f32).collect()
}

/// Quantile-Huber loss averaged over batch rows and all
/// (predicted quantile, target sample) pairs.
///
/// `pred` is `batch x N`, `target` is `batch x M`. Returns the loss and
/// its gradient with respect to `pred`.
pub fn quantile_huber_loss(
    pred: &Matrix,
    target: &Matrix,
    taus: &[f32],
    kappa: f32,
) -> Result<(f64, Matrix)> {
    if pred.cols() != taus.len() {
        return Err(Error::dim("quantile_huber_loss", taus.len(), pred.cols()));
    }
    if pred.rows() != target.rows() {
        return Err(Error::dim("quantile_huber_loss", pred.rows(), target.rows()));
    }
    if kappa <= 0.0 {
        return Err(Error::InvalidArgument(format!("huber kappa {kappa}")));
    }
    let (b, n, m) = (pred.rows(), pred.cols(), target.cols());
    let norm = (b * n * m).max(1) as f64;
    let kappa = kappa as f64;
    let mut grad = Matrix::zeros(b, n);
    let mut total = 0.0f64;
    for r in 0..b {
        for (i, &tau) in taus.iter().enumerate() {
            let p = pred.get(r, i) as f64;
            let mut g = 0.0f64;
            for &t in target.row(r) {
                let u = t as f64 - p;
                let w = (tau as f64 - if u < 0.0 { 1.0 } else { 0.0 }).abs();
                let (h, dh) = if u.abs() <= kappa {
                    (0.5 * u * u, u)
                } else {
                    (kappa * (u.abs() - 0.5 * kappa), kappa * u.signum())
                };
                total += w * h / kappa;
                g -= w * dh / kappa;
            }
            grad.set(r, i, (g / norm) as f32);
        }
    }
    Ok((total / norm, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    #[test]
    fn expectile_cases() {
        let d = [0.5f32, -1.5, 2.0];
        let mse: f64 = d.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / 3.0;
        assert!((expectile_loss(&d, 0.5) - 0.5 * mse).abs() < 1e-12);
        assert!((expectile_loss(&[1.0], 0.8) - 0.8).abs() < 1e-7);
        assert!((expectile_loss(&[-1.0], 0.8) - 0.2).abs() < 1e-7);
        assert_eq!(expectile_loss(&[0.0, 0.0], 0.7), 0.0);
    }

    #[test]
    fn expectile_grad_matches_difference() {
        let d = [0.3f32, -0.7, 1.1];
        let g = expectile_loss_grad(&d, 0.8);
        for i in 0..3 {
            let mut p = d;
            p[i] += 1e-3;
            let mut m = d;
            m[i] -= 1e-3;
            let num = (expectile_loss(&p, 0.8) - expectile_loss(&m, 0.8)) / 2e-3;
            assert!((num - g[i] as f64).abs() < 1e-4);
        }
    }

    #[test]
    fn zero_when_prediction_equals_target() {
        let pred = Matrix::filled(1, 4, 2.5);
        let target = Matrix::filled(1, 1, 2.5);
        let (l, g) = quantile_huber_loss(&pred, &target, &quantile_midpoints(4), 1.0).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    fn fit(samples: &[f32], n: usize, kappa: f32, steps: usize, lr: f32) -> Vec<f32> {
        let taus = quantile_midpoints(n);
        let mut q = Matrix::zeros(1, n);
        let target = Matrix::from_vec(1, samples.len(), samples.to_vec()).unwrap();
        for _ in 0..steps {
            let (_, g) = quantile_huber_loss(&q, &target, &taus, kappa).unwrap();
            // normalise the per-quantile step so every quantile moves at the same rate
            for (v, gr) in q.data_mut().iter_mut().zip(g.data()) {
                *v -= lr * gr * n as f32;
            }
        }
        q.into_vec()
    }

    #[test]
    fn two_quantiles_converge_to_constant() {
        let q = fit(&[3.0], 2, 1.0, 4000, 0.05);
        for v in q {
            assert!((v - 3.0).abs() < 1e-3, "{v}");
        }
    }

    #[test]
    fn recovers_uniform_quantiles() {
        let mut rng = stream_rng(21, 0);
        let samples: Vec<f32> = (0..2000).map(|_| rng.random::<f32>()).collect();
        let q = fit(&samples, 32, 0.01, 4000, 0.02);
        for (i, v) in q.iter().enumerate() {
            let expected = (i as f32 + 0.5) / 32.0;
            assert!((v - expected).abs() < 0.05, "quantile {i}: {v} vs {expected}");
        }
    }

    #[test]
    fn unit_kappa_on_unit_support_gives_expectiles() {
        // With every residual inside the Huber threshold the loss is the
        // asymmetric square, whose minimizer for U(0,1) is
        // sqrt(tau) / (sqrt(tau) + sqrt(1 - tau)).
        let mut rng = stream_rng(22, 0);
        let samples: Vec<f32> = (0..2000).map(|_| rng.random::<f32>()).collect();
        let q = fit(&samples, 8, 1.0, 6000, 0.05);
        for (i, v) in q.iter().enumerate() {
            let tau = (i as f64 + 0.5) / 8.0;
            let e = tau.sqrt() / (tau.sqrt() + (1.0 - tau).sqrt());
            assert!((*v as f64 - e).abs() < 0.03, "tau {tau}: {v} vs {e}");
        }
    }
}
