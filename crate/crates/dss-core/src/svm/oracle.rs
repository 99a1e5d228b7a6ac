//! Brute-force reference solver for the SVM dual, used by the verification
//! suites to audit the SMO trainer. Accelerated projected gradient with exact
//! projection onto the feasible set {0 <= a <= C, y'a = 0}; shares no code or
//! algorithmic structure with the SMO path it checks.

use super::{gaussian_kernel, SvmHyperparams};

/// Projects v onto {0 <= a <= C, y'a = 0} by bisection on the shift of the
/// equality multiplier: h(l) = y' clip(v - l y) is monotone in l.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let h = |l: f64| -> f64 {
        v.iter()
            .zip(y)
            .map(|(&vi, &yi)| yi * (vi - l * yi).clamp(0.0, c))
            .sum()
    };
    let bound = v.iter().fold(0.0f64, |m, &x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let l = 0.5 * (lo + hi);
    v.iter()
        .zip(y)
        .map(|(&vi, &yi)| (vi - l * yi).clamp(0.0, c))
        .collect()
}

/// Solves the dual to high precision and returns its objective
/// sum(a) - 1/2 a'Qa.
pub fn solve_dual_reference(data: &[(Vec<f64>, f64)], hp: &SvmHyperparams) -> f64 {
    let n = data.len();
    let y: Vec<f64> = data.iter().map(|(_, l)| *l).collect();
    let mut q = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            q[i * n + j] = y[i] * y[j] * gaussian_kernel(&data[i].0, &data[j].0, hp.gamma);
        }
    }
    // Lipschitz bound: max row sum of |Q|
    let lip = (0..n)
        .map(|i| (0..n).map(|j| q[i * n + j].abs()).sum::<f64>())
        .fold(1e-12, f64::max);
    let step = 1.0 / lip;

    let f = |a: &[f64]| -> f64 {
        let mut quad = 0.0;
        for i in 0..n {
            let mut qi = 0.0;
            for j in 0..n {
                qi += q[i * n + j] * a[j];
            }
            quad += a[i] * qi;
        }
        0.5 * quad - a.iter().sum::<f64>()
    };
    let grad = |a: &[f64], g: &mut [f64]| {
        for i in 0..n {
            let mut gi = -1.0;
            for j in 0..n {
                gi += q[i * n + j] * a[j];
            }
            g[i] = gi;
        }
    };

    // FISTA with monotone restart
    let mut x = vec![0.0f64; n];
    let mut x_prev = x.clone();
    let mut t = 1.0f64;
    let mut g = vec![0.0f64; n];
    let mut best = f(&x);
    for it in 0..30_000 {
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let yk: Vec<f64> = x
            .iter()
            .zip(&x_prev)
            .map(|(&xi, &xp)| xi + beta * (xi - xp))
            .collect();
        grad(&yk, &mut g);
        let cand: Vec<f64> = yk.iter().zip(&g).map(|(&yi, &gi)| yi - step * gi).collect();
        let next = project(&cand, &y, hp.c);
        let fv = f(&next);
        x_prev = std::mem::replace(&mut x, next);
        t = t_next;
        if fv > best + 1e-14 {
            // restart momentum
            t = 1.0;
            x_prev = x.clone();
        } else {
            best = best.min(fv);
        }
        if it % 500 == 499 {
            // plain projected-gradient polish step for stability
            grad(&x, &mut g);
            let cand: Vec<f64> = x.iter().zip(&g).map(|(&xi, &gi)| xi - step * gi).collect();
            let polished = project(&cand, &y, hp.c);
            let fp = f(&polished);
            if fp < best {
                best = fp;
                x_prev = x.clone();
                x = polished;
            }
        }
    }
    -f(&x).min(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_is_feasible_and_idempotent() {
        let v = vec![0.3, -2.0, 5.0, 1.2];
        let y = vec![1.0, -1.0, 1.0, -1.0];
        let c = 2.0;
        let p = project(&v, &y, c);
        let balance: f64 = p.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!(balance.abs() < 1e-9);
        assert!(p.iter().all(|&a| (-1e-12..=c + 1e-12).contains(&a)));
        let p2 = project(&p, &y, c);
        for (a, b) in p.iter().zip(&p2) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn tiny_symmetric_problem_has_known_solution() {
        // two points at +-1, large C: dual optimum alpha_1 = alpha_2 = a*,
        // objective 2a - a^2 (1 - K12) maximized at a = 1/(1 - K12).
        let data = vec![(vec![-1.0], -1.0), (vec![1.0], 1.0)];
        let hp = SvmHyperparams {
            c: 1000.0,
            gamma: 0.25,
            kkt_tolerance: 1e-9,
        };
        let k12 = gaussian_kernel(&[1.0], &[-1.0], 0.25);
        let a = 1.0 / (1.0 - k12);
        let expect = 2.0 * a - a * a * (1.0 - k12);
        let got = solve_dual_reference(&data, &hp);
        assert!((got - expect).abs() < 1e-8, "{got} vs {expect}");
    }
}
