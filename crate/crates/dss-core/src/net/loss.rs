//! Tukey biweight loss with median-absolute-deviation residual scaling.
//!
//! rho(r) = (c^2/6)(1 - (1 - (r/c)^2)^3) for |r| <= c, else c^2/6, with
//! c = 4.685. The gradient redescends to exactly zero outside |r| <= c, so
//! gross outliers contribute nothing to the update. The residual scale sigma
//! is estimated per batch as 1.4826 * MAD and treated as a constant during
//! differentiation.

pub const TUKEY_C: f64 = 4.685;
const MAD_TO_SIGMA: f64 = 1.4826;

/// Median of a slice (average of the middle two for even lengths).
fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Robust residual scale: 1.4826 * median(|r - median(r)|). Falls back to 1
/// when the MAD vanishes (all residuals identical).
pub fn tukey_scale(residuals: &[f64]) -> f64 {
    if residuals.is_empty() {
        return 1.0;
    }
    let mut v = residuals.to_vec();
    let med = median(&mut v);
    let mut dev: Vec<f64> = residuals.iter().map(|r| (r - med).abs()).collect();
    let mad = median(&mut dev);
    let sigma = MAD_TO_SIGMA * mad;
    if sigma > 0.0 {
        sigma
    } else {
        1.0
    }
}

/// Loss and gradient w.r.t. `pred` for a fixed scale. The loss is the mean of
/// rho over coordinates; gradient entries for |r| > c are bitwise zero.
pub fn tukey_loss_with_scale(pred: &[f64], target: &[f64], sigma: f64) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len());
    let n = pred.len() as f64;
    let c = TUKEY_C;
    let cap = c * c / 6.0;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for (i, (&p, &t)) in pred.iter().zip(target).enumerate() {
        let r = (p - t) / sigma;
        if r.abs() <= c {
            let u = 1.0 - (r / c) * (r / c);
            loss += cap * (1.0 - u * u * u);
            // d rho / d r = r * u^2 ; d r / d pred = 1/sigma ; mean over n
            grad[i] = r * u * u / (sigma * n);
        } else {
            loss += cap;
            // grad[i] stays exactly 0.0
        }
    }
    (loss / n, grad)
}

/// Convenience wrapper: estimates sigma from the residuals of this pair, then
/// evaluates the loss with that scale held fixed.
pub fn tukey_biweight_loss(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let residuals: Vec<f64> = pred.iter().zip(target).map(|(p, t)| p - t).collect();
    let sigma = tukey_scale(&residuals);
    tukey_loss_with_scale(pred, target, sigma)
}
