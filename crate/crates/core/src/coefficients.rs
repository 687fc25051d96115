//! Deterministic normalising sequences.
//!
//! For a parameter `x > -1` the normaliser is `x_1 = 1` and
//! `x_{n+1} = x_n * n / (n + x)`, i.e. `Γ(n) Γ(x + 1) / Γ(n + x)`. With
//! `x = a` it turns the position into the martingale `a_n S_n`; with `x = b`
//! it turns the number of moves into the martingale `b_n σ_n²`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ModelParams, Regime};

/// Horizon above which [`CoeffTable::new`] switches to the compensated product.
pub const COMPENSATED_THRESHOLD: usize = 10_000_000;

/// Natural log of the gamma function for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::NonPositiveArgument(x));
    }
    if x == 1.0 || x == 2.0 {
        return Ok(0.0);
    }
    Ok(statrs::function::gamma::ln_gamma(x))
}

/// `Γ(x)` for moderate positive `x`, via [`log_gamma`].
pub fn gamma(x: f64) -> f64 {
    log_gamma(x).map(f64::exp).unwrap_or(f64::NAN)
}

/// Normaliser `x_n` for a single `n`, by the multiplicative recurrence.
pub fn normalizer(x: f64, n: u64) -> f64 {
    let mut value = 1.0;
    for k in 1..n {
        let k = k as f64;
        value *= k / (k + x);
    }
    value
}

/// `(x)^(n) / (n - 1)!` by recurrence, which is `x / x_n` for `x != 0` and
/// stays finite at `x = 0`.
pub fn rising_ratio(x: f64, n: u64) -> f64 {
    let mut value = x;
    for k in 1..n {
        let k = k as f64;
        value *= (x + k) / k;
    }
    value
}

/// Double-double helpers for the compensated recurrence.
mod dd {
    #[derive(Debug, Clone, Copy)]
    pub struct Dd(pub f64, pub f64);

    fn quick_two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        Dd(s, b - (s - a))
    }

    pub fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd(s, (a - (s - bb)) + (b - bb))
    }

    fn mul_f64(a: Dd, f: f64) -> Dd {
        let p = a.0 * f;
        let e = a.0.mul_add(f, -p) + a.1 * f;
        quick_two_sum(p, e)
    }

    fn sub(a: Dd, b: Dd) -> Dd {
        let s = two_sum(a.0, -b.0);
        quick_two_sum(s.0, s.1 + a.1 - b.1)
    }

    fn mul(a: Dd, b: Dd) -> Dd {
        let p = a.0 * b.0;
        let e = a.0.mul_add(b.0, -p) + (a.0 * b.1 + a.1 * b.0);
        quick_two_sum(p, e)
    }

    pub fn div(a: Dd, b: Dd) -> Dd {
        let q1 = a.0 / b.0;
        let r = sub(a, mul(b, Dd(q1, 0.0)));
        let q2 = r.0 / b.0;
        let r = sub(r, mul(b, Dd(q2, 0.0)));
        let q3 = r.0 / b.0;
        let q = quick_two_sum(q1, q2);
        let s = two_sum(q.0, q3);
        quick_two_sum(s.0, s.1 + q.1)
    }

    /// `v * k / (k + x)` with `k + x` held exactly.
    pub fn step(v: Dd, k: f64, x: f64) -> Dd {
        div(mul_f64(v, k), two_sum(k, x))
    }
}

fn sequence(x: f64, horizon: usize, compensated: bool) -> Vec<f64> {
    let mut out = Vec::with_capacity(horizon);
    if horizon == 0 {
        return out;
    }
    out.push(1.0);
    if compensated {
        let mut v = dd::Dd(1.0, 0.0);
        for k in 1..horizon {
            v = dd::step(v, k as f64, x);
            out.push(v.0 + v.1);
        }
    } else {
        let mut v = 1.0f64;
        for k in 1..horizon {
            let kf = k as f64;
            v *= kf / (kf + x);
            out.push(v);
        }
    }
    out
}

/// Normalisers `a_n`, `b_n` and `α_n = 1 + a/n` for `n = 1..=horizon`.
///
/// Index `n - 1` holds the value at time `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTable {
    pub a: f64,
    pub b: f64,
    pub a_seq: Vec<f64>,
    pub b_seq: Vec<f64>,
    pub alpha_seq: Vec<f64>,
}

impl CoeffTable {
    /// Builds the table, using the compensated product past
    /// [`COMPENSATED_THRESHOLD`].
    pub fn new(a: f64, b: f64, horizon: usize) -> Self {
        Self::build(a, b, horizon, horizon > COMPENSATED_THRESHOLD)
    }

    pub fn build(a: f64, b: f64, horizon: usize, compensated: bool) -> Self {
        assert!(a > -1.0, "memory parameter must exceed -1");
        assert!(b > -1.0, "second parameter must exceed -1");
        CoeffTable {
            a,
            b,
            a_seq: sequence(a, horizon, compensated),
            b_seq: sequence(b, horizon, compensated),
            alpha_seq: (1..=horizon).map(|n| 1.0 + a / n as f64).collect(),
        }
    }

    pub fn for_params(params: &ModelParams, horizon: usize) -> Self {
        Self::new(params.a, params.b, horizon)
    }

    pub fn horizon(&self) -> usize {
        self.a_seq.len()
    }

    pub fn a_n(&self, n: u64) -> f64 {
        self.a_seq[n as usize - 1]
    }

    pub fn b_n(&self, n: u64) -> f64 {
        self.b_seq[n as usize - 1]
    }

    pub fn alpha_n(&self, n: u64) -> f64 {
        self.alpha_seq[n as usize - 1]
    }
}

/// Builds a coefficient table; `a > -1`, `b` in `(0, 1)`, `horizon >= 1`.
pub fn coeff_table(a: f64, b: f64, horizon: usize) -> CoeffTable {
    CoeffTable::new(a, b, horizon)
}

/// Limit behaviour of `v_n` in each regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "regime", rename_all = "lowercase")]
pub enum VnAsymptote {
    /// `v_n / n^(b - 2a) -> ell_d`.
    Diffusive { ell_d: f64, ratio: f64 },
    /// `v_n / log n -> ell_c`.
    Critical { ell_c: f64, ratio: f64 },
    /// `v_n -> v_inf`; the tail beyond the horizon is at most `tail_bound`.
    Superdiffusive { v_inf: f64, tail_bound: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VnReport {
    /// `v_1..=v_N`.
    pub values: Vec<f64>,
    pub asymptote: VnAsymptote,
}

impl VnReport {
    pub fn last(&self) -> f64 {
        *self.values.last().expect("non-empty horizon")
    }
}

/// `ℓ_D = Γ²(a+1) / ((b - 2a) Γ(b+1))`.
pub fn ell_diffusive(a: f64, b: f64) -> f64 {
    let lg = 2.0 * log_gamma(a + 1.0).unwrap() - log_gamma(b + 1.0).unwrap();
    lg.exp() / (b - 2.0 * a)
}

/// `ℓ_C = Γ²(a+1) / Γ(2a+1)`.
pub fn ell_critical(a: f64) -> f64 {
    (2.0 * log_gamma(a + 1.0).unwrap() - log_gamma(2.0 * a + 1.0).unwrap()).exp()
}

/// Upper bound on `Σ_{m > N} a_m² / (m b_m)` when `0 < a < 1`, `0 < b < 1`
/// and `2a > b`.
///
/// Wendel's inequality gives `a_m <= Γ(a+1) m^-a (1 + a/m)^(1-a)` and
/// `1 / b_m <= m^b / Γ(b+1)`, so the terms are dominated by
/// `C (1 + a/(N+1))^(2(1-a)) m^-(1+δ)` with `δ = 2a - b`, whose tail is at
/// most `N^-δ / δ`.
pub fn superdiffusive_tail_bound(a: f64, b: f64, horizon: u64) -> f64 {
    let delta = 2.0 * a - b;
    let c = (2.0 * log_gamma(a + 1.0).unwrap() - log_gamma(b + 1.0).unwrap()).exp();
    let n = horizon as f64;
    c * (1.0 + a / (n + 1.0)).powf(2.0 * (1.0 - a)) * n.powf(-delta) / delta
}

/// Partial sums `v_n = Σ_{k<=n} a_k² / (k b_k)` and the regime asymptote.
pub fn vn_sequence(params: &ModelParams, horizon: usize) -> VnReport {
    assert!(horizon >= 1, "horizon must be at least 1");
    let (a, b) = (params.a, params.b);
    let mut values = Vec::with_capacity(horizon);
    let (mut an, mut bn) = (1.0f64, 1.0f64);
    let mut sum = 0.0;
    let mut comp = 0.0;
    for n in 1..=horizon {
        if n > 1 {
            let k = (n - 1) as f64;
            an *= k / (k + a);
            bn *= k / (k + b);
        }
        let term = an * an / (n as f64 * bn);
        // Kahan summation
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        values.push(sum);
    }
    let nf = horizon as f64;
    let asymptote = match params.regime {
        Regime::Diffusive => VnAsymptote::Diffusive {
            ell_d: ell_diffusive(a, b),
            ratio: sum / nf.powf(b - 2.0 * a),
        },
        Regime::Critical => VnAsymptote::Critical {
            ell_c: ell_critical(a),
            ratio: if horizon > 1 { sum / nf.ln() } else { f64::NAN },
        },
        Regime::Superdiffusive => {
            let tail_bound = superdiffusive_tail_bound(a, b, horizon as u64);
            VnAsymptote::Superdiffusive {
                v_inf: sum + 0.5 * tail_bound,
                tail_bound,
            }
        }
    };
    VnReport { values, asymptote }
}

/// Running `w_n`, `v_n` and the trace of the predictable quadratic variation
/// along one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct QVState {
    /// Last observed time.
    pub n: u64,
    /// `a_n` at the last observed time.
    pub a_n: f64,
    /// `b_n` at the last observed time.
    pub b_n: f64,
    /// `w_n = Σ_{k<=n} a_k² σ_k² / k`.
    pub w: f64,
    /// `v_n = Σ_{k<=n} a_k² / (k b_k)`.
    pub v: f64,
    /// `Tr⟨M⟩_n - 1 = Σ_{k<n} a_{k+1}² Tr E[ε_{k+1} ε_{k+1}ᵀ | F_k]`.
    pub qv_trace: f64,
    /// Contribution of time `n`, added once time `n + 1` is observed.
    pub pending: f64,
}

impl QVState {
    pub fn new() -> Self {
        QVState::default()
    }

    /// `Tr⟨M⟩_n`.
    pub fn qv_total(&self) -> f64 {
        1.0 + self.qv_trace
    }
}

/// Folds the state of a trajectory at time `n` (`sigma2 = σ_n²`,
/// `s_norm2 = ||S_n||²`) into `state`, which must hold time `n - 1`.
///
/// The increment `a_{n+1}² [(b/n) σ_n² - (a/n)² ||S_n||²]` is the trace of
/// the conditional covariance of the next martingale increment and must be
/// nonnegative.
pub fn qv_trace_step(state: &QVState, n: u64, sigma2: u64, s_norm2: u64, a: f64, b: f64) -> Result<QVState> {
    assert_eq!(state.n + 1, n, "qv state observed out of order");
    let nf = n as f64;
    let (a_n, b_n) = if n == 1 {
        (1.0, 1.0)
    } else {
        let k = nf - 1.0;
        (state.a_n * k / (k + a), state.b_n * k / (k + b))
    };
    let a_next = a_n * nf / (nf + a);
    let sigma2 = sigma2 as f64;
    let positive = b / nf * sigma2;
    let increment = a_next * a_next * (positive - (a / nf).powi(2) * s_norm2 as f64);
    if increment < -1e-12 * a_next * a_next * positive.max(1.0) {
        return Err(Error::NegativeIncrement(increment));
    }
    Ok(QVState {
        n,
        a_n,
        b_n,
        w: state.w + a_n * a_n * sigma2 / nf,
        v: state.v + a_n * a_n / (nf * b_n),
        qv_trace: state.qv_trace + state.pending,
        pending: increment.max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::derive_params;

    /// lnΓ(x) at 40 digits (mpmath), for doubles exactly as written.
    const LOG_GAMMA_REFS: &[(f64, f64)] = &[
        (0.1, 2.252712651734205902),
        (0.25, 1.2880225246980774574),
        (0.5, 0.57236494292470008707),
        (0.75, 0.20328095143129537148),
        (1.25, -0.098271836421813161464),
        (1.5, -0.12078223763524522235),
        (1.8, -0.071083872914372154332),
        (1.9, -0.038984275923083361674),
        (2.5, 0.28468287047291915963),
        (3.0, 0.69314718055994530942),
        (4.5, 2.4537365708424422205),
        (7.25, 7.0521854507385394449),
        (10.0, 12.801827480081469611),
        (25.5, 56.389167643719946744),
        (50.0, 144.56574394634488601),
        (99.9, 358.67423945197756376),
        (150.0, 600.00947055532742811),
        (200.0, 857.93366982585743682),
    ];

    #[test]
    fn log_gamma_reference_grid() {
        for &(x, want) in LOG_GAMMA_REFS {
            let got = log_gamma(x).unwrap();
            assert!(((got - want) / want).abs() < 1e-13, "x = {x}: {got} vs {want}");
        }
    }

    #[test]
    fn log_gamma_identities() {
        assert_eq!(log_gamma(1.0).unwrap(), 0.0);
        assert_eq!(log_gamma(2.0).unwrap(), 0.0);
        let sqrt_pi = std::f64::consts::PI.sqrt().ln();
        assert!((log_gamma(0.5).unwrap() - sqrt_pi).abs() < 1e-15);
        let fact10: f64 = (1..=10).map(|k| (k as f64).ln()).sum();
        assert!((log_gamma(11.0).unwrap() - fact10).abs() / fact10 < 1e-14);
        assert_eq!(log_gamma(0.0), Err(Error::NonPositiveArgument(0.0)));
        assert!(log_gamma(-1.5).is_err());
        assert!(log_gamma(f64::NAN).is_err());
    }

    #[test]
    fn trivial_sequences() {
        let t = coeff_table(0.0, 0.5, 100);
        assert!(t.a_seq.iter().all(|&x| x == 1.0));
        for &a in &[-0.7, -0.2, 0.3, 0.9] {
            let t = coeff_table(a, 0.5, 3);
            assert!((t.a_n(2) - 1.0 / (1.0 + a)).abs() < 1e-15);
            assert_eq!(t.a_n(1), 1.0);
        }
    }

    #[test]
    fn recurrence_identities() {
        let t = coeff_table(0.35, 0.8, 1000);
        for n in 1..1000u64 {
            let lhs = t.a_n(n);
            let rhs = t.a_n(n + 1) * t.alpha_n(n);
            assert!((lhs - rhs).abs() <= 1e-15 * lhs);
        }
    }

    #[test]
    fn recurrence_matches_gamma_ratio() {
        for &x in &[-0.6, -0.1, 0.27, 0.8, 0.95] {
            let t = coeff_table(x, 0.5, 1000);
            for n in 1..=1000u64 {
                let nf = n as f64;
                let lg = log_gamma(nf).unwrap() + log_gamma(x + 1.0).unwrap() - log_gamma(nf + x).unwrap();
                let want = lg.exp();
                assert!((t.a_n(n) - want).abs() <= 1e-10 * want, "x = {x}, n = {n}");
            }
        }
    }

    #[test]
    fn monotonicity_by_sign() {
        let up = coeff_table(-0.4, 0.5, 500);
        let down = coeff_table(0.4, 0.5, 500);
        assert!(up.a_seq.windows(2).all(|w| w[1] > w[0]));
        assert!(down.a_seq.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn asymptote_to_gamma() {
        let t = coeff_table(0.8, 0.8, 1_000_000);
        let n = 1_000_000f64;
        let g = gamma(1.8);
        assert!((n.powf(0.8) * t.b_n(1_000_000) - g).abs() < 1e-4 * g);
        for &x in &[-0.5, 0.3, 0.8] {
            let t = coeff_table(x, 0.5, 20_000);
            let slack = 2.0 * (x * (x - 1.0)).abs() + 1.0;
            let g = gamma(x + 1.0);
            for n in (100..=20_000u64).step_by(97) {
                let nf = n as f64;
                assert!((nf.powf(x) * t.a_n(n) - g).abs() < g * slack / nf, "x = {x}, n = {n}");
            }
        }
    }

    /// Normalisers at 25 digits (mpmath gamma ratios).
    const NORMALIZER_REFS: &[(f64, usize, f64)] = &[
        (0.8, 1_000_000, 0.00001476143916286843319860532),
        (0.8, 10_000, 0.0005876681321088793891847298),
        (-0.3, 100_000, 41.04803375698073803815015),
        (0.8833333333333333, 1_000_000, 0.000004792177232688037695158786),
        (0.26666666666666666, 100_000, 0.04191925847775958061373097),
    ];

    #[test]
    fn plain_and_compensated_products_match_references() {
        for &(x, n, want) in NORMALIZER_REFS {
            let plain = sequence(x, n, false)[n - 1];
            let comp = sequence(x, n, true)[n - 1];
            let plain_err = ((plain - want) / want).abs();
            let comp_err = ((comp - want) / want).abs();
            assert!(plain_err < 1e-10, "plain x = {x}: {plain_err:e}");
            assert!(comp_err < 1e-14, "compensated x = {x}: {comp_err:e}");
            assert!((normalizer(x, n as u64) - plain).abs() <= 1e-15 * plain.abs());
        }
    }

    #[test]
    fn rising_ratio_consistency() {
        for &x in &[0.3, 0.8, 1.7] {
            for n in [1u64, 2, 10, 1000] {
                let direct = rising_ratio(x, n);
                let via = x / normalizer(x, n);
                assert!((direct - via).abs() <= 1e-12 * direct);
            }
        }
        assert_eq!(rising_ratio(0.0, 50), 0.0);
    }

    #[test]
    fn vn_first_term_is_one() {
        for (d, p, r) in [(1, 0.4, 0.2), (2, 0.5, 0.2), (2, 0.9, 0.05)] {
            let params = derive_params(d, p, r).unwrap();
            assert_eq!(vn_sequence(&params, 1).values, vec![1.0]);
        }
    }

    #[test]
    fn vn_diffusive_asymptote() {
        let params = derive_params(1, 0.4, 0.2).unwrap();
        let report = vn_sequence(&params, 1_000_000);
        let VnAsymptote::Diffusive { ell_d, ratio } = report.asymptote else {
            panic!("expected diffusive report");
        };
        assert!((ratio - ell_d).abs() < 0.01 * ell_d, "{ratio} vs {ell_d}");
        assert!(report.values.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn vn_critical_asymptote() {
        let params = derive_params(2, 0.5, 0.2).unwrap();
        let report = vn_sequence(&params, 1_000_000);
        let VnAsymptote::Critical { ell_c, ratio } = report.asymptote else {
            panic!("expected critical report");
        };
        // convergence is only logarithmic: v_n = ell_c log n + O(1)
        assert!((ratio - ell_c).abs() < 0.1 * ell_c, "{ratio} vs {ell_c}");
        let early = report.values[999] / 1000f64.ln();
        assert!((ratio - ell_c).abs() < (early - ell_c).abs());
    }

    #[test]
    fn vn_superdiffusive_tail() {
        let params = derive_params(2, 0.9, 0.05).unwrap();
        let short = vn_sequence(&params, 100_000);
        let VnAsymptote::Superdiffusive { tail_bound, .. } = short.asymptote else {
            panic!("expected superdiffusive report");
        };
        let long = vn_sequence(&params, 10_000_000);
        let gap = long.last() - short.last();
        assert!(gap > 0.0 && gap <= tail_bound, "gap {gap:e} bound {tail_bound:e}");
        // the bound is not vacuous
        assert!(gap > 0.1 * tail_bound, "gap {gap:e} bound {tail_bound:e}");
    }

    #[test]
    fn qv_first_increment() {
        let (a, b) = (0.3, 0.7);
        let s = qv_trace_step(&QVState::new(), 1, 1, 1, a, b).unwrap();
        let a2 = 1.0 / (1.0 + a);
        assert!((s.pending - a2 * a2 * (b - a * a)).abs() < 1e-15);
        assert_eq!(s.qv_trace, 0.0);
        assert_eq!(s.w, 1.0);
        assert_eq!(s.v, 1.0);
    }

    #[test]
    fn qv_rejects_corrupt_state() {
        let s = qv_trace_step(&QVState::new(), 1, 1, 1, 0.3, 0.7).unwrap();
        // ||S_2||² = 100 is impossible after two unit steps.
        assert!(matches!(
            qv_trace_step(&s, 2, 1, 100, 0.3, 0.7),
            Err(Error::NegativeIncrement(_))
        ));
    }
}
