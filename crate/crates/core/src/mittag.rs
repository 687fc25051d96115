//! Mittag-Leffler function, density, moments and sampler.
//!
//! `ML(α)` is the law on `(0, ∞)` with Laplace transform `E_α(t)` and
//! moments `m! / Γ(1 + mα)`. `ML(1/2)` is the law of `|Z|`, `Z ~ N(0, 2)`,
//! and `ML(1)` is the point mass at 1.

use std::f64::consts::PI;

use rand::RngCore;
use serde::Serialize;

use statrs::function::gamma::gamma;

use crate::coefficients::log_gamma;
use crate::error::{Error, Result};
use crate::rng::open_unit_f64;

/// Default bound on `|t|` for [`ml_function`].
pub const T_MAX: f64 = 50.0;
/// Term cap for the density series.
pub const PDF_TERM_CAP: usize = 500;
const FUNCTION_TERM_CAP: usize = 20_000;
const FUNCTION_TAIL_TOL: f64 = 1e-12;
const FUNCTION_ROUNDING_TOL: f64 = 1e-9;
const PDF_TOL: f64 = 1e-10;

/// Relative error carried by one term evaluated as `exp(log-magnitude)`.
fn term_rounding(log_mag: f64) -> f64 {
    f64::EPSILON * (4.0 + log_mag.abs())
}

/// `Γ(1 + x)` for `0 <= x < 169` as `Γ(1 + f) (f + 1) ... (f + k)` with
/// `x = k + f`. Exact at the integers while `x!` fits in 53 bits.
fn gamma_one_plus(x: f64) -> f64 {
    let k = x.floor();
    let f = x - k;
    let mut value = if f == 0.0 { 1.0 } else { gamma(1.0 + f) };
    for j in 1..=(k as u32) {
        value *= f + j as f64;
    }
    value
}

/// `|t|^n / Γ(1 + nα)` and its relative rounding error. Direct evaluation
/// is used while it stays in range; the log route covers the rest.
fn power_over_gamma(abs_t: f64, n: usize, alpha: f64) -> (f64, f64) {
    let g = 1.0 + n as f64 * alpha;
    let ln_pow = n as f64 * abs_t.ln();
    if g < 170.0 && ln_pow.abs() < 700.0 {
        let rel = f64::EPSILON * (6.0 + 0.5 * (n as f64).sqrt() + g.sqrt());
        (abs_t.powi(n as i32) / gamma_one_plus(g - 1.0), rel)
    } else {
        let lm = ln_pow - log_gamma(g).unwrap();
        (lm.exp(), term_rounding(lm))
    }
}

/// `sin(πx)` with exact zeros at the integers.
fn sin_pi(x: f64) -> f64 {
    let r = x.rem_euclid(2.0);
    if r == 0.0 || r == 1.0 {
        return 0.0;
    }
    if r > 1.0 {
        return -sin_pi(r - 1.0);
    }
    let r = if r > 0.5 { 1.0 - r } else { r };
    (PI * r).sin()
}

fn check_alpha(alpha: f64, allow_one: bool) -> Result<()> {
    let ok = alpha > 0.0 && (alpha < 1.0 || (allow_one && alpha == 1.0));
    if ok {
        Ok(())
    } else {
        Err(Error::OutOfEvaluationRange(format!("alpha = {alpha} outside the supported range")))
    }
}

/// `E_α(t) = Σ t^n / Γ(1 + nα)` for `α ∈ (0, 1]` and `|t| <= T_MAX`.
///
/// Terms are added until the ratio bound certifies an absolute tail below
/// `1e-12`. Since `log Γ` is convex, the term ratios
/// `|t| Γ(1 + nα) / Γ(1 + (n+1)α)` decrease in `n`, so once a ratio drops
/// below one the remaining tail is dominated by a geometric series. The
/// value is refused if cancellation between terms could exceed `1e-9`
/// relative error.
pub fn ml_function(alpha: f64, t: f64) -> Result<f64> {
    check_alpha(alpha, true)?;
    if !(t.abs() <= T_MAX) {
        return Err(Error::OutOfEvaluationRange(format!("|t| = {} exceeds {T_MAX}", t.abs())));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let abs_t = t.abs();
    let ln_t = abs_t.ln();
    let negative = t < 0.0;
    let log_term = |n: usize| n as f64 * ln_t - log_gamma(1.0 + n as f64 * alpha).unwrap();

    let (mut sum, mut comp) = (1.0f64, 0.0f64);
    let mut abs_sum = 1.0;
    let mut rounding = 0.0;
    for n in 1..FUNCTION_TERM_CAP {
        let (mag, rel) = power_over_gamma(abs_t, n, alpha);
        let term = if negative && n % 2 == 1 { -mag } else { mag };
        let y = term - comp;
        let s = sum + y;
        comp = (s - sum) - y;
        sum = s;
        abs_sum += mag;
        rounding += mag * rel;

        let next = log_term(n + 1);
        let ratio = (log_term(n + 2) - next).exp();
        if ratio < 1.0 {
            let tail = next.exp() / (1.0 - ratio);
            if tail < FUNCTION_TAIL_TOL {
                rounding += abs_sum * f64::EPSILON;
                if rounding > FUNCTION_ROUNDING_TOL * sum.abs().max(1.0) {
                    return Err(Error::OutOfEvaluationRange(format!(
                        "cancellation in E_{alpha}({t}): rounding bound {rounding:e}"
                    )));
                }
                return Ok(sum);
            }
        }
    }
    Err(Error::OutOfEvaluationRange(format!(
        "E_{alpha}({t}) did not converge in {FUNCTION_TERM_CAP} terms"
    )))
}

/// Outcome of the density series: the value or the reason it was refused.
fn pdf_series(alpha: f64, x: f64) -> std::result::Result<f64, String> {
    let ln_x = x.ln();
    // log of |term n| without the sine factor
    let log_major = |n: usize| {
        let nf = n as f64;
        log_gamma(1.0 + alpha * nf).unwrap() + (nf - 1.0) * ln_x - log_gamma(nf + 1.0).unwrap()
    };
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let mut abs_sum = 0.0;
    let mut rounding = 0.0;
    let scale = 1.0 / (PI * alpha);
    for n in 1..=PDF_TERM_CAP {
        let lm = log_major(n);
        let mag = lm.exp();
        let sign = if (n - 1) % 2 == 1 { -1.0 } else { 1.0 };
        let term = sign * mag * sin_pi(alpha * n as f64);
        let y = term - comp;
        let s = sum + y;
        comp = (s - sum) - y;
        sum = s;
        abs_sum += mag;
        rounding += mag * term_rounding(lm);

        let next = log_major(n + 1);
        let ratio = (log_major(n + 2) - next).exp();
        if ratio < 1.0 {
            let tail = next.exp() / (1.0 - ratio);
            if tail * scale < 0.1 * PDF_TOL {
                let err = (rounding + abs_sum * f64::EPSILON + tail) * scale;
                if err > PDF_TOL {
                    return Err(format!("series cancellation bound {err:e} at x = {x}"));
                }
                return Ok((sum * scale).max(0.0));
            }
        }
    }
    Err(format!("series tail not certified within {PDF_TERM_CAP} terms at x = {x}"))
}

/// Density through the one-sided stable law: with
/// `A(φ) = (sin αφ / sin φ)^(1/(1-α)) sin((1-α)φ) / sin αφ`,
/// `f_α(x) = x^(α/(1-α)) / (π (1-α)) ∫_0^π A(φ) exp(-x^(1/(1-α)) A(φ)) dφ`.
/// The integrand is nonnegative, so there is no cancellation.
fn pdf_integral(alpha: f64, x: f64) -> std::result::Result<f64, String> {
    let inv = 1.0 / (1.0 - alpha);
    let c = x.powf(inv);
    let integrand = |phi: f64| {
        let ln_a = inv * ((alpha * phi).sin().ln() - phi.sin().ln()) + ((1.0 - alpha) * phi).sin().ln()
            - (alpha * phi).sin().ln();
        let a = ln_a.exp();
        if !a.is_finite() {
            return 0.0;
        }
        (ln_a - c * a).exp()
    };
    let out = quadrature::double_exponential::integrate(integrand, 0.0, PI, 1e-14);
    let prefactor = x.powf(alpha * inv) / (PI * (1.0 - alpha));
    let err = out.error_estimate * prefactor;
    if !(err <= PDF_TOL) || !out.integral.is_finite() {
        return Err(format!("integral route error estimate {err:e} at x = {x}"));
    }
    Ok(out.integral * prefactor)
}

/// Density `f_α(x) = (1/(πα)) Σ_{n>=1} Γ(1+αn) sin(αnπ) (-x)^(n-1) / n!`
/// for `α ∈ (0, 1)`, `x > 0`.
///
/// The series is used wherever its truncation and rounding bounds certify
/// an absolute error below `1e-10`. Past that point its terms cancel
/// catastrophically, and the stable-law integral representation takes over.
pub fn ml_pdf(alpha: f64, x: f64) -> Result<f64> {
    check_alpha(alpha, false)?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::OutOfEvaluationRange(format!("x = {x} must be positive and finite")));
    }
    match pdf_series(alpha, x) {
        Ok(v) => Ok(v),
        Err(series_reason) => pdf_integral(alpha, x)
            .map_err(|reason| Error::OutOfEvaluationRange(format!("{series_reason}; {reason}"))),
    }
}

/// `m! / Γ(1 + mα)`.
pub fn ml_moment(alpha: f64, m: u32) -> f64 {
    let mf = m as f64;
    if mf < 170.0 {
        return gamma_one_plus(mf) / gamma_one_plus(mf * alpha);
    }
    (log_gamma(mf + 1.0).unwrap() - log_gamma(1.0 + mf * alpha).unwrap()).exp()
}

/// One `ML(α)` draw for `α ∈ (0, 1)` (`α = 1` returns the point mass 1).
///
/// With `U` uniform on `(0, π)` and `E ~ Exp(1)`, Kanter's representation
/// of the one-sided stable variate with Laplace transform `exp(-λ^α)` is
/// `S = sin(αU) / sin(U)^(1/α) * (sin((1-α)U) / E)^((1-α)/α)`. The draw
/// is `S^(-α)`, which simplifies to
/// `E^(1-α) sin U / (sin(αU)^α sin((1-α)U)^(1-α))`.
pub fn ml_sample<R: RngCore + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    debug_assert!(alpha > 0.0 && alpha <= 1.0);
    if alpha >= 1.0 {
        return 1.0;
    }
    let u = PI * open_unit_f64(rng);
    let e = -open_unit_f64(rng).ln();
    let beta = 1.0 - alpha;
    let ln_m = beta * e.ln() + u.sin().ln() - alpha * (alpha * u).sin().ln() - beta * (beta * u).sin().ln();
    ln_m.exp()
}

/// The law `ML(α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MLDistribution {
    alpha: f64,
}

impl MLDistribution {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha, true)?;
        Ok(MLDistribution { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn laplace(&self, t: f64) -> Result<f64> {
        ml_function(self.alpha, t)
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        ml_pdf(self.alpha, x)
    }

    pub fn moment(&self, m: u32) -> f64 {
        ml_moment(self.alpha, m)
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        ml_sample(self.alpha, rng)
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    pub fn variance(&self) -> f64 {
        self.moment(2) - self.mean().powi(2)
    }
}
