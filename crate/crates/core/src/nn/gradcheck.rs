//! Central finite differences for checking hand-written gradients.
//!
//! ReLU networks are only piecewise smooth. A probe whose `±h` perturbation
//! flips any activation pattern straddles a kink, where a central difference
//! does not estimate the derivative; such entries are reported as NaN and
//! left out of the comparison.

use super::mlp::with_mask_trace;
use super::ParamSet;

/// Numeric gradient of `loss` with respect to every parameter of `params`.
/// Entries whose probes cross a ReLU kink are NaN.
pub fn finite_difference<P, F>(params: &P, h: f32, mut loss: F) -> P
where
    P: ParamSet + Clone,
    F: FnMut(&P) -> f64,
{
    let mut probe = params.clone();
    let mut out = params.clone();
    let (_, base) = with_mask_trace(|| loss(&probe));
    let n_tensors = params.tensors().len();
    for t in 0..n_tensors {
        let len = params.tensors()[t].data().len();
        for i in 0..len {
            let orig = probe.tensors()[t].data()[i];
            probe.tensors_mut()[t].data_mut()[i] = orig + h;
            let (plus, tp) = with_mask_trace(|| loss(&probe));
            probe.tensors_mut()[t].data_mut()[i] = orig - h;
            let (minus, tm) = with_mask_trace(|| loss(&probe));
            probe.tensors_mut()[t].data_mut()[i] = orig;
            let value = if tp == base && tm == base {
                ((plus - minus) / (2.0 * h as f64)) as f32
            } else {
                f32::NAN
            };
            out.tensors_mut()[t].data_mut()[i] = value;
        }
    }
    out
}

/// Comparison summary between analytic and numeric gradients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    /// Largest absolute disagreement divided by the largest gradient
    /// magnitude (infinity-norm relative error).
    pub relative_error: f64,
    pub compared: usize,
    pub skipped: usize,
}

pub fn compare<P: ParamSet>(analytic: &P, numeric: &P) -> GradCheck {
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    let mut compared = 0;
    let mut skipped = 0;
    for (a, n) in analytic.tensors().iter().zip(numeric.tensors()) {
        for (&x, &y) in a.data().iter().zip(n.data()) {
            if y.is_nan() {
                skipped += 1;
                continue;
            }
            compared += 1;
            diff = diff.max((x as f64 - y as f64).abs());
            scale = scale.max((x as f64).abs()).max((y as f64).abs());
        }
    }
    let relative_error = if scale == 0.0 { diff } else { diff / scale };
    GradCheck {
        relative_error,
        compared,
        skipped,
    }
}

pub fn max_relative_error<P: ParamSet>(analytic: &P, numeric: &P) -> f64 {
    compare(analytic, numeric).relative_error
}

/// Panics when the relative error reaches `tol` or more than 10% of the
/// entries sit on kinks.
pub fn assert_grads_close<P: ParamSet>(analytic: &P, numeric: &P, tol: f64) {
    let c = compare(analytic, numeric);
    assert!(
        c.relative_error < tol,
        "gradient check failed: relative error {:.3e} >= {tol:e}",
        c.relative_error
    );
    assert!(
        c.skipped * 10 <= c.compared + c.skipped,
        "gradient check inconclusive: {} of {} entries on kinks",
        c.skipped,
        c.compared + c.skipped
    );
}
