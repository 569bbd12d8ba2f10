//! Small statistical tests used to validate Monte-Carlo results.

use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{IsacError, Result};

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample KS critical coefficients `c(α)`.
fn ks_coefficient(alpha: f64) -> Result<f64> {
    const TABLE: [(f64, f64); 6] = [
        (0.10, 1.224),
        (0.05, 1.358),
        (0.025, 1.480),
        (0.01, 1.628),
        (0.005, 1.731),
        (0.001, 1.949),
    ];
    TABLE
        .iter()
        .find(|(a, _)| (a - alpha).abs() < 1e-12)
        .map(|(_, c)| *c)
        .ok_or_else(|| IsacError::InvalidArgument(format!("no KS critical value tabulated for alpha {alpha}")))
}

/// True when the two samples are consistent with one distribution at level `alpha`.
pub fn ks_same_distribution(a: &[f64], b: &[f64], alpha: f64) -> Result<bool> {
    if a.is_empty() || b.is_empty() {
        return Err(IsacError::InvalidArgument("KS test needs two nonempty samples".into()));
    }
    let (n, m) = (a.len() as f64, b.len() as f64);
    let critical = ks_coefficient(alpha)? * ((n + m) / (n * m)).sqrt();
    Ok(ks_statistic(a, b) <= critical)
}

/// Exact (Clopper–Pearson) interval for a binomial proportion.
pub fn binomial_interval(successes: u64, trials: u64, confidence: f64) -> Result<(f64, f64)> {
    if trials == 0 || successes > trials || !(0.0..1.0).contains(&confidence) {
        return Err(IsacError::InvalidArgument(format!(
            "binomial interval for {successes}/{trials} at {confidence}"
        )));
    }
    let tail = (1.0 - confidence) / 2.0;
    let (k, n) = (successes as f64, trials as f64);
    let beta = |a: f64, b: f64| Beta::new(a, b).map_err(|e| IsacError::InvalidArgument(e.to_string()));
    let lo = if successes == 0 {
        0.0
    } else {
        beta(k, n - k + 1.0)?.inverse_cdf(tail)
    };
    let hi = if successes == trials {
        1.0
    } else {
        beta(k + 1.0, n - k)?.inverse_cdf(1.0 - tail)
    };
    Ok((lo, hi))
}

/// Interval of observed rates that a true rate `p` produces with the given
/// confidence over `trials` draws (equal-tailed, exact binomial quantiles).
pub fn binomial_acceptance(p: f64, trials: u64, confidence: f64) -> Result<(f64, f64)> {
    use statrs::distribution::{Binomial, DiscreteCDF};
    let dist = Binomial::new(p, trials).map_err(|e| IsacError::InvalidArgument(e.to_string()))?;
    let tail = (1.0 - confidence) / 2.0;
    let lo = dist.inverse_cdf(tail) as f64;
    let hi = dist.inverse_cdf(1.0 - tail) as f64;
    Ok((lo / trials as f64, hi / trials as f64))
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(IsacError::InvalidArgument(
            "spearman needs two equal samples of size ≥ 2".into(),
        ));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(IsacError::InvalidArgument(
            "spearman undefined for a constant sample".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}
