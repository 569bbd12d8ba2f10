//! Batch-mean training losses and their derivatives with respect to the
//! network outputs.

use ndarray::Array2;

/// Probabilities are clamped into `[PROB_CLAMP, 1 − PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-12;

#[inline]
fn clamp_prob(p: f64) -> (f64, bool) {
    if p < PROB_CLAMP {
        (PROB_CLAMP, true)
    } else if p > 1.0 - PROB_CLAMP {
        (1.0 - PROB_CLAMP, true)
    } else {
        (p, false)
    }
}

/// Binary cross-entropy of presence probabilities `q` against labels `t`.
pub fn loss_td(q: &[f64], t: &[bool]) -> f64 {
    assert_eq!(q.len(), t.len());
    if q.is_empty() {
        return 0.0;
    }
    let sum: f64 = q
        .iter()
        .zip(t)
        .map(|(&q, &t)| {
            let (q, _) = clamp_prob(q);
            if t {
                -q.ln()
            } else {
                -(1.0 - q).ln()
            }
        })
        .sum();
    sum / q.len() as f64
}

/// dL/dq of [`loss_td`]; zero where the clamp is active.
pub fn loss_td_grad(q: &[f64], t: &[bool]) -> Vec<f64> {
    let n = q.len() as f64;
    q.iter()
        .zip(t)
        .map(|(&q, &t)| {
            let (qc, clamped) = clamp_prob(q);
            if clamped {
                0.0
            } else if t {
                -1.0 / (qc * n)
            } else {
                1.0 / ((1.0 - qc) * n)
            }
        })
        .collect()
}

fn present_count(present: &[bool]) -> usize {
    present.iter().filter(|p| **p).count()
}

/// Gaussian negative log-likelihood of the angle estimate, averaged over the
/// target-present entries: `mean(log σ + (θ − θ̂)²/(2σ²))`. Zero when no
/// target is present.
pub fn loss_tr(theta_hat: &[f64], sigma: &[f64], theta: &[f64], present: &[bool]) -> f64 {
    let n = present_count(present);
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = (0..theta.len())
        .filter(|&i| present[i])
        .map(|i| {
            let d = theta[i] - theta_hat[i];
            sigma[i].ln() + d * d / (2.0 * sigma[i] * sigma[i])
        })
        .sum();
    sum / n as f64
}

/// Derivatives of [`loss_tr`] with respect to `(θ̂, σ)`.
pub fn loss_tr_grad(theta_hat: &[f64], sigma: &[f64], theta: &[f64], present: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let n = present_count(present);
    let mut g_theta = vec![0.0; theta.len()];
    let mut g_sigma = vec![0.0; theta.len()];
    if n == 0 {
        return (g_theta, g_sigma);
    }
    let w = 1.0 / n as f64;
    for i in (0..theta.len()).filter(|&i| present[i]) {
        let d = theta_hat[i] - theta[i];
        let s2 = sigma[i] * sigma[i];
        g_theta[i] = w * d / s2;
        g_sigma[i] = w * (1.0 / sigma[i] - d * d / (s2 * sigma[i]));
    }
    (g_theta, g_sigma)
}

/// Angle mean-squared error over the target-present entries.
pub fn loss_mse(theta_hat: &[f64], theta: &[f64], present: &[bool]) -> f64 {
    let n = present_count(present);
    if n == 0 {
        return 0.0;
    }
    (0..theta.len())
        .filter(|&i| present[i])
        .map(|i| (theta_hat[i] - theta[i]).powi(2))
        .sum::<f64>()
        / n as f64
}

pub fn loss_mse_grad(theta_hat: &[f64], theta: &[f64], present: &[bool]) -> Vec<f64> {
    let n = present_count(present);
    let mut g = vec![0.0; theta.len()];
    if n == 0 {
        return g;
    }
    for i in (0..theta.len()).filter(|&i| present[i]) {
        g[i] = 2.0 * (theta_hat[i] - theta[i]) / n as f64;
    }
    g
}

/// Categorical cross-entropy of probability rows against message indices.
pub fn loss_cce(probs: &Array2<f64>, messages: &[usize]) -> f64 {
    assert_eq!(probs.nrows(), messages.len());
    if messages.is_empty() {
        return 0.0;
    }
    let sum: f64 = messages
        .iter()
        .enumerate()
        .map(|(i, &m)| -clamp_prob(probs[[i, m]]).0.ln())
        .sum();
    sum / messages.len() as f64
}

pub fn loss_cce_grad(probs: &Array2<f64>, messages: &[usize]) -> Array2<f64> {
    let n = messages.len() as f64;
    let mut g = Array2::zeros(probs.raw_dim());
    for (i, &m) in messages.iter().enumerate() {
        let (p, clamped) = clamp_prob(probs[[i, m]]);
        if !clamped {
            g[[i, m]] = -1.0 / (p * n);
        }
    }
    g
}

/// `ω·radar + (1 − ω)·communication`.
pub fn loss_isac(radar: f64, comm: f64, omega_r: f64) -> f64 {
    if omega_r == 0.0 {
        comm
    } else if omega_r == 1.0 {
        radar
    } else {
        omega_r * radar + (1.0 - omega_r) * comm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn detection_analytic_values() {
        assert!((loss_td(&[0.5], &[true]) - std::f64::consts::LN_2).abs() < 1e-15);
        let t = [true, false, true, false];
        let q = [1.0, 0.0, 1.0, 0.0];
        assert!(loss_td(&q, &t) <= 1e-6);
    }

    // Straight summation in a different order, no shared helpers.
    fn bce_oracle(q: &[f64], t: &[bool]) -> f64 {
        let mut acc = 0.0;
        for i in (0..q.len()).rev() {
            let c = q[i].clamp(1e-12, 1.0 - 1e-12);
            let y = if t[i] { 1.0 } else { 0.0 };
            acc -= y * c.ln() + (1.0 - y) * (1.0 - c).ln();
        }
        acc / q.len() as f64
    }

    #[test]
    fn detection_matches_loop_oracle() {
        let mut rng = Rng::new(1, 0);
        let n = 10_000;
        let q: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let t: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.5)).collect();
        assert!((loss_td(&q, &t) - bce_oracle(&q, &t)).abs() < 1e-12);
    }

    #[test]
    fn regression_analytic_values() {
        assert_eq!(loss_tr(&[0.2], &[1.0], &[0.2], &[true]), 0.0);
        assert!((loss_tr(&[1.2], &[1.0], &[0.2], &[true]) - 0.5).abs() < 1e-15);
        let th = [0.1, -0.3, 0.25];
        let est = [0.4, -0.1, 0.2];
        let sig: Vec<f64> = th.iter().zip(&est).map(|(a, b): (&f64, &f64)| (a - b).abs()).collect();
        let expected = sig.iter().map(|s| s.ln() + 0.5).sum::<f64>() / 3.0;
        assert!((loss_tr(&est, &sig, &th, &[true; 3]) - expected).abs() < 1e-12);
        assert_eq!(loss_tr(&est, &sig, &th, &[false; 3]), 0.0);
        // absent entries are ignored
        let l = loss_tr(&[1.2, 9.0], &[1.0, 0.1], &[0.2, 0.0], &[true, false]);
        assert!((l - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cce_analytic_values() {
        let onehot = Array2::from_shape_vec((2, 4), vec![0., 1., 0., 0., 0., 0., 0., 1.]).unwrap();
        assert!(loss_cce(&onehot, &[1, 3]) <= 1e-6);
        let uniform = Array2::from_elem((3, 4), 0.25);
        assert!((loss_cce(&uniform, &[0, 2, 3]) - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cce_matches_loop_oracle() {
        let mut rng = Rng::new(2, 0);
        let n = 2_000;
        let mut p = Array2::zeros((n, 4));
        let mut m = Vec::with_capacity(n);
        for i in 0..n {
            let raw: Vec<f64> = (0..4).map(|_| rng.uniform() + 1e-3).collect();
            let s: f64 = raw.iter().sum();
            for j in 0..4 {
                p[[i, j]] = raw[j] / s;
            }
            m.push(rng.below(4));
        }
        let mut oracle = 0.0;
        for i in 0..n {
            for j in 0..4 {
                let enc = if j == m[i] { 1.0 } else { 0.0 };
                oracle -= enc * p[[i, j]].max(1e-12).ln();
            }
        }
        oracle /= n as f64;
        assert!((loss_cce(&p, &m) - oracle).abs() < 1e-12);
    }

    #[test]
    fn isac_combination_endpoints() {
        assert_eq!(loss_isac(7.0, 1.2, 0.0), 1.2);
        assert_eq!(loss_isac(7.0, 1.2, 1.0), 7.0);
        assert!((loss_isac(7.0, 1.2, 0.5) - 4.1).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_differences() {
        let mut rng = Rng::new(3, 0);
        let n = 6;
        let q: Vec<f64> = (0..n).map(|_| 0.1 + 0.8 * rng.uniform()).collect();
        let t: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let th: Vec<f64> = (0..n).map(|_| rng.normal() * 0.3).collect();
        let est: Vec<f64> = (0..n).map(|_| rng.normal() * 0.3).collect();
        let sig: Vec<f64> = (0..n).map(|_| 0.05 + rng.uniform()).collect();
        let h = 1e-6;
        let fd = |f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize| {
            let mut a = x.to_vec();
            a[i] += h;
            let up = f(&a);
            a[i] -= 2.0 * h;
            (up - f(&a)) / (2.0 * h)
        };
        let gq = loss_td_grad(&q, &t);
        let (gth, gs) = loss_tr_grad(&est, &sig, &th, &t);
        let gm = loss_mse_grad(&est, &th, &t);
        for i in 0..n {
            assert!((gq[i] - fd(&|x| loss_td(x, &t), &q, i)).abs() < 1e-6);
            assert!((gth[i] - fd(&|x| loss_tr(x, &sig, &th, &t), &est, i)).abs() < 1e-6);
            assert!((gs[i] - fd(&|x| loss_tr(&est, x, &th, &t), &sig, i)).abs() < 1e-6);
            assert!((gm[i] - fd(&|x| loss_mse(x, &th, &t), &est, i)).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn losses_bounded_below(q in 0.0f64..=1.0, t: bool, p in 0.0f64..=1.0, sigma in 1e-4f64..10.0, d in -2.0f64..2.0) {
            prop_assert!(loss_td(&[q], &[t]) >= 0.0);
            let probs = Array2::from_shape_vec((1, 2), vec![p, 1.0 - p]).unwrap();
            prop_assert!(loss_cce(&probs, &[0]) >= 0.0);
            prop_assert!(loss_tr(&[d], &[sigma], &[0.0], &[true]) >= sigma.ln() - 1e-15);
            prop_assert!(loss_tr(&[d], &[sigma], &[0.0], &[true]) >= crate::neural::RELU_FLOOR.ln());
        }

        #[test]
        fn isac_monotone(r1 in 0.0f64..10.0, r2 in 0.0f64..10.0, c in 0.0f64..10.0, w in 0.0f64..=1.0) {
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            prop_assert!(loss_isac(lo, c, w) <= loss_isac(hi, c, w));
            prop_assert!(loss_isac(c, lo, w) <= loss_isac(c, hi, w));
        }
    }
}
