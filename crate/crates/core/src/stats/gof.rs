//! Goodness-of-fit statistics.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// One-sample Kolmogorov-Smirnov distance `sup |F_N - F|`.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let v = sorted(xs);
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    d
}

/// KS distance to the standard normal.
pub fn ks_standard_normal(xs: &[f64]) -> f64 {
    let normal = Normal::standard();
    ks_one_sample(xs, |x| normal.cdf(x))
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> f64 {
    let (a, b) = (sorted(xs), sorted(ys));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
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

/// Asymptotic Kolmogorov tail `P(√N D > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Chi-square goodness-of-fit result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square of `observed` counts against cell probabilities.
///
/// Cells are taken in order and pooled until each pooled cell expects at
/// least `min_expected` counts; a short remainder joins the last pool.
/// Observations in a zero-probability cell give `p_value = 0`.
pub fn chi_square(observed: &[u64], probs: &[f64], min_expected: f64) -> ChiSquare {
    assert_eq!(observed.len(), probs.len());
    let total: u64 = observed.iter().sum();
    let total_f = total as f64;
    if observed.iter().zip(probs).any(|(&o, &p)| p == 0.0 && o > 0) {
        return ChiSquare { statistic: f64::INFINITY, dof: 0, p_value: 0.0 };
    }
    let mut pools: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        o_acc += o as f64;
        e_acc += p * total_f;
        if e_acc >= min_expected {
            pools.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        match pools.last_mut() {
            Some(last) => {
                last.0 += o_acc;
                last.1 += e_acc;
            }
            None => pools.push((o_acc, e_acc)),
        }
    }
    let statistic: f64 = pools.iter().map(|&(o, e)| (o - e).powi(2) / e).sum();
    let dof = pools.len().saturating_sub(1);
    let p_value = if dof == 0 { 1.0 } else { ChiSquared::new(dof as f64).unwrap().sf(statistic) };
    ChiSquare { statistic, dof, p_value }
}
