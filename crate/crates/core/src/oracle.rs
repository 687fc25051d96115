//! Exact finite-n moments and the exact law of the walk at small horizons.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::coefficients::{log_gamma, rising_ratio};
use crate::error::{Error, Result};
use crate::model::{ModelParams, Regime};

/// Exact moments at time `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentTable {
    pub n: u64,
    /// `E[σ_n²] = 1 / b_n`
    pub e_sigma2: f64,
    /// `E[σ_n²(i)]`, the same for every axis
    pub e_gram_diag: f64,
    /// Diagonal entry of `E[S_n S_nᵀ]`; off-diagonal entries vanish.
    pub e_outer_diag: f64,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `E[σ_n²] = 1 / b_n`, for `n >= 1`.
pub fn expected_sigma2(params: &ModelParams, n: u64) -> f64 {
    assert!(n >= 1, "time starts at 1");
    let mut inv_b = 1.0;
    for k in 1..n {
        let k = k as f64;
        inv_b *= (k + params.b) / k;
    }
    inv_b
}

/// Moment tables at each of the increasing times in `grid` (all `>= 1`).
///
/// Runs the diagonal recursion `s_1 = 1/d`,
/// `s_{n+1} = (1 + 2a/n) s_n + (a/n) / (d b_n) + (2q/n) / b_n`
/// alongside `1/b_{n+1} = (1 + b/n) / b_n`.
pub fn expected_outer_grid(params: &ModelParams, grid: &[u64]) -> Vec<MomentTable> {
    assert!(grid.windows(2).all(|w| w[0] < w[1]), "grid must increase");
    assert!(grid.first().is_none_or(|&n| n >= 1), "time starts at 1");
    let d = params.d as f64;
    let (a, b, q) = (params.a, params.b, params.q);
    let mut out = Vec::with_capacity(grid.len());
    let mut s = 1.0 / d;
    let mut inv_b = 1.0;
    let mut n = 1u64;
    for &target in grid {
        while n < target {
            let nf = n as f64;
            s = (1.0 + 2.0 * a / nf) * s + (a / nf) * inv_b / d + (2.0 * q / nf) * inv_b;
            inv_b *= (nf + b) / nf;
            n += 1;
        }
        out.push(MomentTable { n, e_sigma2: inv_b, e_gram_diag: inv_b / d, e_outer_diag: s });
    }
    out
}

/// Exact moments at time `n >= 1`.
pub fn expected_outer(params: &ModelParams, n: u64) -> MomentTable {
    expected_outer_grid(params, &[n])[0]
}

/// Closed form `s_n = ((2a)^(n) - (b)^(n)) / ((n-1)! d (2a - b))`, which is
/// singular at `2a = b`. Returns `None` there.
pub fn outer_closed_form(params: &ModelParams, n: u64) -> Option<f64> {
    let gap = 2.0 * params.a - params.b;
    if gap.abs() <= 1e-9 {
        return None;
    }
    let d = params.d as f64;
    Some((rising_ratio(2.0 * params.a, n) - rising_ratio(params.b, n)) / (d * gap))
}

/// Covariance `c I_d` of the almost-sure limit `L` of `S_n / n^a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LCovariance {
    pub d: usize,
    pub diagonal: f64,
}

/// `ϑ² / ((1 - r) Γ(2a)) I_d` in the superdiffusive regime.
pub fn expected_l_covariance(params: &ModelParams) -> Result<LCovariance> {
    params.require(Regime::Superdiffusive)?;
    let theta2 = params.superdiffusive_variance()?;
    let lg = log_gamma(2.0 * params.a)?;
    Ok(LCovariance { d: params.d, diagonal: theta2 / ((1.0 - params.r) * lg.exp()) })
}

/// The same covariance written as `1 / (d (2a - b) Γ(2a))`, the limit of
/// `n^{-2a} s_n`.
pub fn l_covariance_from_moments(params: &ModelParams) -> Result<f64> {
    params.require(Regime::Superdiffusive)?;
    let lg = log_gamma(2.0 * params.a)?;
    Ok(1.0 / (params.d as f64 * (2.0 * params.a - params.b) * lg.exp()))
}

/// Largest dimension the enumerator accepts.
pub const ENUM_MAX_DIM: usize = 2;
/// Largest horizon the enumerator accepts.
pub const ENUM_MAX_STEPS: u64 = 6;

/// One atom of the exact law at time `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointAtom {
    pub position: Vec<i64>,
    pub gram_diag: Vec<u64>,
    pub sigma2: u64,
    pub probability: f64,
}

/// Exact joint law of `(S_n, σ_n²(1..d), σ_n²)`, atoms sorted by key.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointLaw {
    pub d: usize,
    pub n: u64,
    pub atoms: Vec<JointAtom>,
}

/// Moments computed from an exact law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LawMoments {
    pub total_mass: f64,
    pub e_sigma2: f64,
    pub e_gram_diag: Vec<f64>,
    /// Row-major `E[S_n S_nᵀ]`.
    pub e_outer: Vec<Vec<f64>>,
}

impl JointLaw {
    pub fn moments(&self) -> LawMoments {
        let d = self.d;
        let mut mass = CompensatedSum::default();
        let mut sigma2 = CompensatedSum::default();
        let mut gram = vec![CompensatedSum::default(); d];
        let mut outer = vec![vec![CompensatedSum::default(); d]; d];
        for atom in &self.atoms {
            let w = atom.probability;
            mass.add(w);
            sigma2.add(w * atom.sigma2 as f64);
            for i in 0..d {
                gram[i].add(w * atom.gram_diag[i] as f64);
                for j in 0..d {
                    outer[i][j].add(w * (atom.position[i] * atom.position[j]) as f64);
                }
            }
        }
        LawMoments {
            total_mass: mass.value(),
            e_sigma2: sigma2.value(),
            e_gram_diag: gram.iter().map(CompensatedSum::value).collect(),
            e_outer: outer.iter().map(|row| row.iter().map(CompensatedSum::value).collect()).collect(),
        }
    }

    /// Law of `(S_n, σ_n²)` with the per-axis counts summed out.
    pub fn position_sigma2(&self) -> Vec<(Vec<i64>, u64, f64)> {
        let mut merged: BTreeMap<(Vec<i64>, u64), CompensatedSum> = BTreeMap::new();
        for atom in &self.atoms {
            merged.entry((atom.position.clone(), atom.sigma2)).or_default().add(atom.probability);
        }
        merged.into_iter().map(|((s, v), p)| (s, v, p.value())).collect()
    }
}

/// Exact law of the walk at time `n` for `d <= 2`, `1 <= n <= 6`.
///
/// The remembered step is uniform over the history, so the next step depends
/// on the history only through how many times each of the `2d + 1` step
/// types occurs. The enumerator propagates the exact distribution of these
/// counts. From a count vector `c` at time `k`, the next step is direction
/// `j` with probability `Σ_t (c_t / k) K(t, j)`, where `K` repeats a
/// remembered direction with probability `p`, turns it into each other
/// signed direction with probability `q`, stops with probability `r`, and
/// maps a remembered stop to a stop.
pub fn enumerate_distribution(params: &ModelParams, n: u64) -> Result<JointLaw> {
    let d = params.d;
    if d > ENUM_MAX_DIM || n > ENUM_MAX_STEPS || n == 0 {
        return Err(Error::TooLarge(format!(
            "exact enumeration supports d <= {ENUM_MAX_DIM} and 1 <= n <= {ENUM_MAX_STEPS}, got d = {d}, n = {n}"
        )));
    }
    let dirs = 2 * d;
    let stop = dirs;
    // counts[t] for t < 2d is direction t = 2 * axis + (negative as usize)
    let mut state: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    for t in 0..dirs {
        let mut c = vec![0u32; dirs + 1];
        c[t] = 1;
        state.insert(c, 1.0 / dirs as f64);
    }
    for k in 1..n {
        let kf = k as f64;
        let mut next: BTreeMap<Vec<u32>, CompensatedSum> = BTreeMap::new();
        for (counts, &prob) in &state {
            let mut step_prob = vec![0.0; dirs + 1];
            step_prob[stop] = counts[stop] as f64 / kf;
            for t in 0..dirs {
                let w = counts[t] as f64 / kf;
                if w == 0.0 {
                    continue;
                }
                for (j, sp) in step_prob.iter_mut().enumerate().take(dirs) {
                    *sp += w * if j == t { params.p } else { params.q };
                }
                step_prob[stop] += w * params.r;
            }
            for (j, &sp) in step_prob.iter().enumerate() {
                if sp == 0.0 {
                    continue;
                }
                let mut c = counts.clone();
                c[j] += 1;
                next.entry(c).or_default().add(prob * sp);
            }
        }
        state = next.into_iter().map(|(c, s)| (c, s.value())).collect();
    }

    let mut atoms: BTreeMap<(Vec<i64>, Vec<u64>), CompensatedSum> = BTreeMap::new();
    for (counts, prob) in state {
        let position: Vec<i64> = (0..d).map(|i| counts[2 * i] as i64 - counts[2 * i + 1] as i64).collect();
        let gram: Vec<u64> = (0..d).map(|i| (counts[2 * i] + counts[2 * i + 1]) as u64).collect();
        atoms.entry((position, gram)).or_default().add(prob);
    }
    let atoms = atoms
        .into_iter()
        .map(|((position, gram_diag), p)| JointAtom {
            sigma2: gram_diag.iter().sum(),
            position,
            gram_diag,
            probability: p.value(),
        })
        .collect();
    Ok(JointLaw { d, n, atoms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::normalizer;
    use crate::model::{derive_params, params_for_regime};

    fn default_sets() -> Vec<ModelParams> {
        vec![
            derive_params(2, 0.4, 0.2).unwrap(),
            derive_params(2, 0.5, 0.2).unwrap(),
            derive_params(2, 0.9, 0.05).unwrap(),
        ]
    }

    #[test]
    fn sigma2_small_n() {
        let params = derive_params(2, 0.55, 0.2).unwrap();
        assert_eq!(expected_sigma2(&params, 1), 1.0);
        assert!((expected_sigma2(&params, 2) - 1.8).abs() < 1e-15);
    }

    #[test]
    fn sigma2_matches_gamma_ratio() {
        let params = derive_params(2, 0.55, 0.2).unwrap();
        let n = 10_000u64;
        // 1/b_n = Γ(n + b) / (Γ(n) Γ(b + 1))
        let lg = log_gamma(n as f64 + 0.8).unwrap() - log_gamma(n as f64).unwrap() - log_gamma(1.8).unwrap();
        let want = lg.exp();
        assert!(((expected_sigma2(&params, n) - want) / want).abs() < 1e-8);
        assert!((expected_sigma2(&params, n) * normalizer(0.8, n) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn outer_first_values() {
        for d in 1..=4 {
            let params = derive_params(d, 0.3, 0.1).unwrap();
            let t = expected_outer(&params, 1);
            assert_eq!(t.e_outer_diag, 1.0 / d as f64);
            assert_eq!(t.e_sigma2, 1.0);
        }
        let params = derive_params(1, 0.45, 0.25).unwrap();
        let want = 1.0 + 3.0 * params.p - params.q;
        assert!((expected_outer(&params, 2).e_outer_diag - want).abs() < 1e-15);
    }

    #[test]
    fn table_consistency() {
        for params in default_sets() {
            for t in expected_outer_grid(&params, &[1, 2, 10, 100, 1000]) {
                assert!((t.e_sigma2 - params.d as f64 * t.e_gram_diag).abs() <= 1e-15 * t.e_sigma2);
            }
        }
    }

    #[test]
    fn grid_matches_single_calls() {
        let params = derive_params(3, 0.6, 0.1).unwrap();
        let grid = [1, 5, 17, 400];
        for (t, &n) in expected_outer_grid(&params, &grid).iter().zip(&grid) {
            assert_eq!(*t, expected_outer(&params, n));
        }
    }

    #[test]
    fn recursion_matches_closed_form() {
        let mut sets = default_sets();
        sets.remove(1);
        sets.push(derive_params(1, 0.2, 0.3).unwrap());
        sets.push(derive_params(3, 0.05, 0.1).unwrap());
        sets.push(derive_params(1, 0.95, 0.01).unwrap());
        sets.push(params_for_regime(4, 0.5, Regime::Superdiffusive).unwrap());
        for params in sets {
            let grid: Vec<u64> = (1..=1000).collect();
            for t in expected_outer_grid(&params, &grid) {
                let closed = outer_closed_form(&params, t.n).unwrap();
                let rel = ((t.e_outer_diag - closed) / closed).abs();
                assert!(rel < 1e-9, "p {} r {} n {}: {rel:e}", params.p, params.r, t.n);
            }
        }
    }

    #[test]
    fn recursion_with_vanishing_memory() {
        // a = 0: uncorrelated steps, so s_n = E[σ_n²] / d.
        let d = 2;
        let r = 0.2;
        let p = (1.0 - r) / (2 * d) as f64;
        let params = derive_params(d, p, r).unwrap();
        assert!(params.a.abs() < 1e-15);
        let t = expected_outer(&params, 500);
        assert!((t.e_outer_diag - t.e_gram_diag).abs() < 1e-12 * t.e_gram_diag);
    }

    #[test]
    fn closed_form_singular_at_critical() {
        let params = derive_params(2, 0.5, 0.2).unwrap();
        assert!(outer_closed_form(&params, 10).is_none());
    }

    #[test]
    fn critical_recursion_matches_harmonic_form() {
        // s_n b_n = 1/d + (b/d) Σ_{k<n} 1 / (k + b) when 2a = b.
        let params = derive_params(2, 0.5, 0.2).unwrap();
        let n = 2000u64;
        let t = expected_outer(&params, n);
        let mut h = CompensatedSum::default();
        for k in 1..n {
            h.add(1.0 / (k as f64 + params.b));
        }
        let want = (1.0 + params.b * h.value()) / 2.0;
        assert!((t.e_outer_diag / t.e_sigma2 - want).abs() < 1e-11 * want);
    }

    #[test]
    fn superdiffusive_scaling_limit() {
        let params = derive_params(2, 0.9, 0.05).unwrap();
        let n = 100_000u64;
        let t = expected_outer(&params, n);
        let scaled = t.e_outer_diag / (n as f64).powf(2.0 * params.a);
        let limit = l_covariance_from_moments(&params).unwrap();
        assert!(((scaled - limit) / limit).abs() < 0.005);
    }

    #[test]
    fn l_covariance_forms_agree() {
        let params = derive_params(2, 0.9, 0.05).unwrap();
        let c = expected_l_covariance(&params).unwrap();
        let alt = l_covariance_from_moments(&params).unwrap();
        assert!(((c.diagonal - alt) / alt).abs() < 1e-12);
        assert_eq!(c.d, 2);

        let compat = crate::model::derive_params_compat(1, 1.0 - 1e-6, 1e-6).unwrap();
        let c = expected_l_covariance(&compat).unwrap();
        assert!(c.diagonal.is_finite() && c.diagonal > 0.0);

        let diffusive = derive_params(2, 0.4, 0.2).unwrap();
        assert!(matches!(expected_l_covariance(&diffusive), Err(Error::WrongRegime { .. })));
    }

    #[test]
    fn enumerate_one_step() {
        let params = derive_params(1, 0.4, 0.2).unwrap();
        let law = enumerate_distribution(&params, 1).unwrap();
        assert_eq!(law.atoms.len(), 2);
        for atom in &law.atoms {
            assert_eq!(atom.sigma2, 1);
            assert_eq!(atom.probability, 0.5);
        }
    }

    #[test]
    fn enumerate_two_steps_one_dim() {
        let params = derive_params(1, 0.4, 0.2).unwrap();
        let m = enumerate_distribution(&params, 2).unwrap().moments();
        assert!((m.e_sigma2 - (2.0 - params.r)).abs() < 1e-15);
        assert!((m.e_outer[0][0] - (1.0 + 3.0 * params.p - params.q)).abs() < 1e-15);
    }

    #[test]
    fn enumeration_matches_recursion() {
        for params in default_sets().into_iter().chain([derive_params(1, 0.7, 0.1).unwrap()]) {
            for n in 1..=ENUM_MAX_STEPS {
                let law = enumerate_distribution(&params, n).unwrap();
                let m = law.moments();
                let t = expected_outer(&params, n);
                assert!((m.total_mass - 1.0).abs() < 1e-12);
                assert!((m.e_sigma2 - t.e_sigma2).abs() < 1e-12);
                for i in 0..params.d {
                    assert!((m.e_gram_diag[i] - t.e_gram_diag).abs() < 1e-12);
                    for j in 0..params.d {
                        let want = if i == j { t.e_outer_diag } else { 0.0 };
                        assert!((m.e_outer[i][j] - want).abs() < 1e-12, "n {n} ({i},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn enumeration_is_symmetric() {
        let params = derive_params(2, 0.6, 0.15).unwrap();
        let law = enumerate_distribution(&params, 4).unwrap();
        let lookup: BTreeMap<_, _> =
            law.atoms.iter().map(|a| ((a.position.clone(), a.gram_diag.clone()), a.probability)).collect();
        for atom in &law.atoms {
            let flipped = vec![-atom.position[0], atom.position[1]];
            let swapped = vec![atom.position[1], atom.position[0]];
            let swapped_gram = vec![atom.gram_diag[1], atom.gram_diag[0]];
            let p1 = lookup[&(flipped, atom.gram_diag.clone())];
            let p2 = lookup[&(swapped, swapped_gram)];
            assert!((p1 - atom.probability).abs() < 1e-15);
            assert!((p2 - atom.probability).abs() < 1e-15);
        }
    }

    #[test]
    fn enumeration_refuses_large_cases() {
        let params = derive_params(3, 0.4, 0.2).unwrap();
        assert!(matches!(enumerate_distribution(&params, 3), Err(Error::TooLarge(_))));
        let params = derive_params(2, 0.4, 0.2).unwrap();
        assert!(matches!(enumerate_distribution(&params, 7), Err(Error::TooLarge(_))));
    }

    #[test]
    fn position_sigma2_marginal() {
        let params = derive_params(2, 0.5, 0.2).unwrap();
        let law = enumerate_distribution(&params, 3).unwrap();
        let marginal = law.position_sigma2();
        let total: f64 = marginal.iter().map(|(_, _, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(marginal.len() <= law.atoms.len());
    }
}
