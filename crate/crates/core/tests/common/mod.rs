#![allow(dead_code)]

use std::collections::BTreeMap;

use merws::oracle::enumerate_distribution;
use merws::stats::ensemble_run;
use merws::stats::gof::{chi_square, ChiSquare};
use merws::ModelParams;

/// Chi-square of Monte Carlo `(S_n, σ_n²)` counts against the enumerated law.
pub fn joint_law_chi_square(params: &ModelParams, n: u64, n_traj: u64, seed: u64) -> ChiSquare {
    let law = enumerate_distribution(params, n).unwrap().position_sigma2();
    let summary = ensemble_run(params, n, n_traj, seed, &[n], 0).unwrap();
    let c = summary.last();
    let d = params.d;
    let mut counts: BTreeMap<(Vec<i64>, u64), u64> = BTreeMap::new();
    for (pos, &s) in c.position.chunks(d).zip(&c.sigma2) {
        *counts.entry((pos.to_vec(), s)).or_default() += 1;
    }
    let mut observed = Vec::with_capacity(law.len());
    let mut probs = Vec::with_capacity(law.len());
    for (pos, s, p) in &law {
        observed.push(counts.remove(&(pos.clone(), *s)).unwrap_or(0));
        probs.push(*p);
    }
    // Keys the enumerator never produces go into a zero-probability cell.
    observed.push(counts.values().sum());
    probs.push(0.0);
    chi_square(&observed, &probs, 5.0)
}
