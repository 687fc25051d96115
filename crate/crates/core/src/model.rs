//! Parameter validation, derived constants and regime classification.
//!
//! The walk is parameterised by the dimension `d`, the probability `p` of
//! repeating the remembered direction and the stop probability `r`. The
//! probability `q` of each of the `2d - 1` other directions follows from
//! `p + (2d - 1) q + r = 1`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used for the simplex check and critical detection.
pub const TOLERANCE: f64 = 1e-12;

/// Largest dimension whose steps fit the one-byte history encoding.
pub const MAX_DIM: usize = 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Diffusive,
    Critical,
    Superdiffusive,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Diffusive => "diffusive",
            Regime::Critical => "critical",
            Regime::Superdiffusive => "superdiffusive",
        })
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diffusive" => Ok(Regime::Diffusive),
            "critical" => Ok(Regime::Critical),
            "superdiffusive" => Ok(Regime::Superdiffusive),
            other => Err(Error::ConfigInvalid {
                field: "regime".into(),
                message: format!("unknown regime `{other}`"),
            }),
        }
    }
}

/// Validated model parameters with every derived constant.
///
/// Immutable once built; share freely between trajectory workers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub d: usize,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    /// Memory parameter `p - q`.
    pub a: f64,
    /// Activity parameter `1 - r`.
    pub b: f64,
    /// Critical value of `p` for this `(d, r)`.
    pub p_crit: f64,
    pub regime: Regime,
}

/// Critical memory value `(2d + 1)(1 - r) / (4d)`.
pub fn critical_p(d: usize, r: f64) -> f64 {
    let d = d as f64;
    (2.0 * d + 1.0) * (1.0 - r) / (4.0 * d)
}

/// Builds parameters from `(d, p, r)`, recovering `q` from the simplex.
pub fn derive_params(d: usize, p: f64, r: f64) -> Result<ModelParams> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::RejectsStop(r));
    }
    build(d, p, r)
}

/// Like [`derive_params`] but also accepts `r = 0`, the classical walk
/// without stops. Only meant for cross-checks against the stop-free model.
pub fn derive_params_compat(d: usize, p: f64, r: f64) -> Result<ModelParams> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::RejectsStop(r));
    }
    build(d, p, r)
}

fn build(d: usize, p: f64, r: f64) -> Result<ModelParams> {
    if d == 0 || d > MAX_DIM {
        return Err(Error::RejectsDimension(d));
    }
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(Error::RejectsSimplex(format!("p = {p} outside [0, 1]")));
    }
    let others = (2 * d - 1) as f64;
    let mut q = (1.0 - p - r) / others;
    // Snap rounding noise so that p = 1 - r gives q = 0 exactly.
    if q.abs() <= TOLERANCE {
        q = 0.0;
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::RejectsSimplex(format!(
            "implied q = (1 - {p} - {r}) / {others} = {q} outside [0, 1]"
        )));
    }
    let a = p - q;
    let b = 1.0 - r;
    let p_crit = critical_p(d, r);
    let mut params = ModelParams {
        d,
        p,
        q,
        r,
        a,
        b,
        p_crit,
        regime: Regime::Critical,
    };
    params.regime = classify_regime(&params);
    Ok(params)
}

/// Solves `p` for a regime shortcut at fixed `(d, r)`.
///
/// Critical returns `p_crit`; diffusive and superdiffusive return the
/// midpoint between `p_crit` and the nearest end of the admissible range of `p`.
pub fn p_for_regime(d: usize, r: f64, regime: Regime) -> f64 {
    let p_crit = critical_p(d, r);
    let lowest = (1.0 - r - (2 * d - 1) as f64).max(0.0);
    let highest = 1.0 - r;
    match regime {
        Regime::Critical => p_crit,
        Regime::Diffusive => 0.5 * (lowest + p_crit),
        Regime::Superdiffusive => 0.5 * (p_crit + highest),
    }
}

/// Builds parameters whose `p` is solved from the requested regime.
pub fn params_for_regime(d: usize, r: f64, regime: Regime) -> Result<ModelParams> {
    let mut params = derive_params(d, p_for_regime(d, r, regime), r)?;
    if regime == Regime::Critical {
        // 2a - b can miss zero by a few ulps after the round trip through p.
        params.regime = Regime::Critical;
    }
    Ok(params)
}

/// Classifies by the sign of `2a - b`.
pub fn classify_regime(params: &ModelParams) -> Regime {
    let gap = 2.0 * params.a - params.b;
    if gap.abs() <= TOLERANCE {
        Regime::Critical
    } else if gap < 0.0 {
        Regime::Diffusive
    } else {
        Regime::Superdiffusive
    }
}

/// Classifies by comparing `p` with `p_crit`; agrees with [`classify_regime`].
///
/// `2a - b = 4d (p - p_crit) / (2d - 1)`, so the tolerance is rescaled.
pub fn classify_by_critical_p(params: &ModelParams) -> Regime {
    let d = params.d as f64;
    let tol = TOLERANCE * (2.0 * d - 1.0) / (4.0 * d);
    let gap = params.p - params.p_crit;
    if gap.abs() <= tol {
        Regime::Critical
    } else if gap < 0.0 {
        Regime::Diffusive
    } else {
        Regime::Superdiffusive
    }
}

/// Asymptotic variance in the diffusive (`v²`) or superdiffusive (`ϑ²`) regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AsymptoticVariance {
    Diffusive(f64),
    Superdiffusive(f64),
}

impl AsymptoticVariance {
    pub fn value(self) -> f64 {
        match self {
            AsymptoticVariance::Diffusive(v) | AsymptoticVariance::Superdiffusive(v) => v,
        }
    }
}

impl ModelParams {
    /// `v² = b / (d (b - 2a))`, defined in the diffusive regime.
    pub fn diffusive_variance(&self) -> Result<f64> {
        self.require(Regime::Diffusive)?;
        Ok(self.b / (self.d as f64 * (self.b - 2.0 * self.a)))
    }

    /// `ϑ² = b / (d (2a - b))`, defined in the superdiffusive regime.
    pub fn superdiffusive_variance(&self) -> Result<f64> {
        self.require(Regime::Superdiffusive)?;
        Ok(self.b / (self.d as f64 * (2.0 * self.a - self.b)))
    }

    pub fn require(&self, regime: Regime) -> Result<()> {
        if self.regime == regime {
            Ok(())
        } else {
            Err(Error::WrongRegime {
                required: regime.to_string(),
                actual: self.regime.to_string(),
            })
        }
    }

    /// Number of signed directions, `2d`.
    pub fn directions(&self) -> usize {
        2 * self.d
    }
}

/// The regime-appropriate asymptotic variance; errors in the critical regime.
pub fn asymptotic_variances(params: &ModelParams) -> Result<AsymptoticVariance> {
    match params.regime {
        Regime::Diffusive => params.diffusive_variance().map(AsymptoticVariance::Diffusive),
        Regime::Superdiffusive => params
            .superdiffusive_variance()
            .map(AsymptoticVariance::Superdiffusive),
        Regime::Critical => Err(Error::WrongRegime {
            required: "diffusive or superdiffusive".into(),
            actual: Regime::Critical.to_string(),
        }),
    }
}
