//! Binary soft-margin SVM trained by sequential minimal optimization.
//!
//! Solves min_a 1/2 a'Qa - 1'a subject to 0 <= a <= C, y'a = 0 with
//! Q_ij = y_i y_j K(x_i, x_j), using maximal-KKT-violating-pair working-set
//! selection. Ties scan in index order, so training is deterministic.

use serde::{Deserialize, Serialize};

use super::{gaussian_kernel, SvmHyperparams};
use crate::{DssError, Result};

/// Trained binary decision function sign(sum_i coef_i K(sv_i, x) + bias),
/// where coef_i = alpha_i y_i.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinaryModel {
    pub support_vectors: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
    pub bias: f64,
    /// Dual objective value at convergence: sum(alpha) - 1/2 a'Qa.
    pub dual_objective: f64,
}

impl BinaryModel {
    pub fn decision(&self, x: &[f64], gamma: f64) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, c)| c * gaussian_kernel(sv, x, gamma))
            .sum::<f64>()
            + self.bias
    }
}

/// Result of a KKT audit over the training set.
#[derive(Debug, Clone)]
pub struct KktAudit {
    pub max_violation: f64,
    pub passed: bool,
}

/// Trains on (vector, +-1 label) pairs. Both classes must be present.
pub fn train_binary(data: &[(Vec<f64>, f64)], hp: &SvmHyperparams) -> Result<BinaryModel> {
    hp.validate()?;
    let n = data.len();
    if n == 0 {
        return Err(DssError::Training("empty binary training set".into()));
    }
    let has_pos = data.iter().any(|(_, y)| *y > 0.0);
    let has_neg = data.iter().any(|(_, y)| *y < 0.0);
    if !has_pos || !has_neg {
        return Err(DssError::Training(
            "binary training requires both classes".into(),
        ));
    }
    let y: Vec<f64> = data.iter().map(|(_, l)| *l).collect();
    let c = hp.c;
    let tol = hp.kkt_tolerance;

    // full kernel matrix (problems stay small enough)
    let mut k = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i..n {
            let v = gaussian_kernel(&data[i].0, &data[j].0, hp.gamma);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }

    let mut alpha = vec![0.0f64; n];
    // gradient of 1/2 a'Qa - 1'a, starting at a = 0
    let mut grad = vec![-1.0f64; n];

    let max_iter = 10_000 + 200 * n * n;
    let mut converged = false;
    for _ in 0..max_iter {
        // maximal violating pair
        let mut i_up: Option<(usize, f64)> = None;
        let mut j_low: Option<(usize, f64)> = None;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let in_up = (y[t] > 0.0 && alpha[t] < c - 1e-12) || (y[t] < 0.0 && alpha[t] > 1e-12);
            let in_low = (y[t] < 0.0 && alpha[t] < c - 1e-12) || (y[t] > 0.0 && alpha[t] > 1e-12);
            if in_up && i_up.map_or(true, |(_, best)| v > best) {
                i_up = Some((t, v));
            }
            if in_low && j_low.map_or(true, |(_, best)| v < best) {
                j_low = Some((t, v));
            }
        }
        let (i, m_up) = match i_up {
            Some(v) => v,
            None => break,
        };
        let (j, m_low) = match j_low {
            Some(v) => v,
            None => break,
        };
        if m_up - m_low <= tol {
            converged = true;
            break;
        }

        // two-variable analytic step
        let kii = k[i * n + i];
        let kjj = k[j * n + j];
        let kij = k[i * n + j];
        let eta = (kii + kjj - 2.0 * kij).max(1e-12);
        let delta = (m_up - m_low) / eta;
        // alpha_i moves by +y_i * d, alpha_j by -y_j * d; clip to the box
        let mut d = delta;
        if y[i] > 0.0 {
            d = d.min(c - alpha[i]);
        } else {
            d = d.min(alpha[i]);
        }
        if y[j] > 0.0 {
            d = d.min(alpha[j]);
        } else {
            d = d.min(c - alpha[j]);
        }
        if d <= 0.0 {
            converged = true;
            break;
        }
        let da_i = y[i] * d;
        let da_j = -y[j] * d;
        alpha[i] += da_i;
        alpha[j] += da_j;
        // gradient update: grad_t += Q_ti da_i + Q_tj da_j
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k[t * n + i] * da_i + y[j] * k[t * n + j] * da_j);
        }
    }
    if !converged {
        // recheck the gap; very tight tolerances may exhaust iterations
        let (m_up, m_low) = violating_extremes(&alpha, &grad, &y, c);
        if m_up - m_low > tol.max(1e-6) {
            return Err(DssError::Training(format!(
                "SMO did not converge: gap {}",
                m_up - m_low
            )));
        }
    }

    // bias from the violating extremes midpoint: free vectors have
    // y_t f(x_t) = 1, i.e. b = -y_t grad_t
    let (m_up, m_low) = violating_extremes(&alpha, &grad, &y, c);
    let bias = (m_up + m_low) / 2.0;

    // dual objective: sum(alpha) - 1/2 a'Qa = sum(alpha) + 1/2 sum(a * (grad - Qa - ... ))
    // grad = Qa - 1  =>  a'Qa = a'(grad + 1)
    let aqa: f64 = alpha
        .iter()
        .zip(&grad)
        .map(|(a, g)| a * (g + 1.0))
        .sum();
    let dual = alpha.iter().sum::<f64>() - 0.5 * aqa;

    let mut support_vectors = Vec::new();
    let mut coefficients = Vec::new();
    for t in 0..n {
        if alpha[t] > 1e-12 {
            support_vectors.push(data[t].0.clone());
            coefficients.push(alpha[t] * y[t]);
        }
    }
    Ok(BinaryModel {
        support_vectors,
        coefficients,
        bias,
        dual_objective: dual,
    })
}

fn violating_extremes(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> (f64, f64) {
    let mut m_up = f64::NEG_INFINITY;
    let mut m_low = f64::INFINITY;
    for t in 0..alpha.len() {
        let v = -y[t] * grad[t];
        let in_up = (y[t] > 0.0 && alpha[t] < c - 1e-12) || (y[t] < 0.0 && alpha[t] > 1e-12);
        let in_low = (y[t] < 0.0 && alpha[t] < c - 1e-12) || (y[t] > 0.0 && alpha[t] > 1e-12);
        if in_up {
            m_up = m_up.max(v);
        }
        if in_low {
            m_low = m_low.min(v);
        }
    }
    (m_up, m_low)
}

/// Audits the KKT conditions of a trained model on its training set: for every
/// point, y f(x) >= 1 - tol when alpha = 0, y f(x) <= 1 + tol when alpha = C,
/// and |y f(x) - 1| <= tol for free vectors. Reports the worst violation.
pub fn kkt_audit(
    model: &BinaryModel,
    data: &[(Vec<f64>, f64)],
    hp: &SvmHyperparams,
) -> KktAudit {
    // recover alpha per training point by matching support vectors
    let mut max_violation = 0.0f64;
    for (x, y) in data {
        let f = model.decision(x, hp.gamma);
        let yf = y * f;
        let alpha = model
            .support_vectors
            .iter()
            .zip(&model.coefficients)
            .find(|(sv, _)| sv.as_slice() == x.as_slice())
            .map(|(_, c)| (c * y).abs())
            .unwrap_or(0.0);
        let viol = if alpha <= 1e-9 {
            (1.0 - yf).max(0.0)
        } else if alpha >= hp.c - 1e-9 {
            (yf - 1.0).max(0.0)
        } else {
            (yf - 1.0).abs()
        };
        max_violation = max_violation.max(viol);
    }
    KktAudit {
        max_violation,
        passed: max_violation <= hp.kkt_tolerance * (1.0 + hp.c),
    }
}
