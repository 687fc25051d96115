//! Sample moments with standard errors.
//!
//! Standard errors come from the empirical influence function: for an
//! estimator `T` with influence values `ψ_i`, `SE(T) = sd(ψ) / √N`.

use serde::Serialize;

use crate::oracle::CompensatedSum;

/// An estimate and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// Distance to `reference` in units of standard error.
    pub fn z(&self, reference: f64) -> f64 {
        (self.value - reference) / self.se
    }
}

pub fn sum(xs: &[f64]) -> f64 {
    let mut s = CompensatedSum::default();
    xs.iter().for_each(|&x| s.add(x));
    s.value()
}

pub fn mean(xs: &[f64]) -> f64 {
    sum(xs) / xs.len() as f64
}

/// Central moment `(1/N) Σ (x - μ)^k`.
pub fn central_moment(xs: &[f64], mu: f64, k: i32) -> f64 {
    let mut s = CompensatedSum::default();
    xs.iter().for_each(|&x| s.add((x - mu).powi(k)));
    s.value() / xs.len() as f64
}

/// Unbiased variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    central_moment(xs, mean(xs), 2) * n / (n - 1.0)
}

fn se_from_influence(psi: impl Iterator<Item = f64>, n: usize) -> f64 {
    let psi: Vec<f64> = psi.collect();
    (variance(&psi) / n as f64).sqrt()
}

/// Sample mean.
pub fn mean_estimate(xs: &[f64]) -> Estimate {
    let n = xs.len();
    Estimate { value: mean(xs), se: (variance(xs) / n as f64).sqrt() }
}

/// Unbiased sample variance.
pub fn variance_estimate(xs: &[f64]) -> Estimate {
    let mu = mean(xs);
    let m2 = central_moment(xs, mu, 2);
    let n = xs.len();
    let se = se_from_influence(xs.iter().map(|&x| (x - mu).powi(2) - m2), n);
    Estimate { value: variance(xs), se }
}

/// Sample excess kurtosis `m4 / m2² - 3`.
pub fn excess_kurtosis_estimate(xs: &[f64]) -> Estimate {
    let mu = mean(xs);
    let m2 = central_moment(xs, mu, 2);
    let m3 = central_moment(xs, mu, 3);
    let m4 = central_moment(xs, mu, 4);
    let psi = xs.iter().map(|&x| {
        let c = x - mu;
        (c.powi(4) - m4 - 4.0 * m3 * c) / (m2 * m2) - 2.0 * m4 * (c * c - m2) / m2.powi(3)
    });
    Estimate { value: m4 / (m2 * m2) - 3.0, se: se_from_influence(psi, xs.len()) }
}

/// Pearson correlation with the delta-method standard error.
pub fn correlation_estimate(xs: &[f64], ys: &[f64]) -> Estimate {
    assert_eq!(xs.len(), ys.len());
    let (mx, my) = (mean(xs), mean(ys));
    let sxx = central_moment(xs, mx, 2);
    let syy = central_moment(ys, my, 2);
    let mut sxy = CompensatedSum::default();
    xs.iter().zip(ys).for_each(|(&x, &y)| sxy.add((x - mx) * (y - my)));
    let sxy = sxy.value() / xs.len() as f64;
    let rho = sxy / (sxx * syy).sqrt();
    let psi = xs.iter().zip(ys).map(|(&x, &y)| {
        let (u, v) = ((x - mx) / sxx.sqrt(), (y - my) / syy.sqrt());
        u * v - 0.5 * rho * (u * u + v * v)
    });
    Estimate { value: rho, se: se_from_influence(psi, xs.len()) }
}
