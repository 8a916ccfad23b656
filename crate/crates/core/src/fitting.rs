//! Choosing PBDP parameters for a target process by moment matching.
//!
//! Overdispersed targets (`Var >= mean`) get a birth-rate fit with no
//! killing; underdispersed targets get a kill-rate fit with no per-particle
//! births.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::carrier::{CarrierSpace, DiscreteMeasure};
use crate::chain::BirthDeathParams;
use crate::error::{Error, Result};
use crate::models::{MomentSummary, ModelSpec};
use crate::process::PbdpSpec;
use crate::stats::compensated_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Overdispersed,
    Underdispersed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub spec: PbdpSpec,
    pub regime: Regime,
    pub diagnostics: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct FitJson<'a> {
    a: f64,
    b: f64,
    beta: f64,
    nu: &'a [(f64, f64)],
    regime: Regime,
    diagnostics: &'a BTreeMap<String, f64>,
}

impl FitResult {
    pub fn params(&self) -> &BirthDeathParams {
        self.spec.params()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let p = self.spec.params();
        serde_json::to_value(FitJson {
            a: p.a(),
            b: p.b(),
            beta: p.beta(),
            nu: self.spec.nu().atoms(),
            regime: self.regime,
            diagnostics: &self.diagnostics,
        })
        .expect("fit serializes")
    }
}

fn positive_mean(m: &MomentSummary) -> Result<()> {
    if !(m.total_mean > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "target mean must be positive, got {}",
            m.total_mean
        )));
    }
    Ok(())
}

/// `b = (Var - mean) / Var`, `a = (1 - b) |λ|`, `ν = λ / |λ|`, `β = 0`.
pub fn fit_overdispersed(space: &CarrierSpace, moments: &MomentSummary, mean_measure: &DiscreteMeasure) -> Result<FitResult> {
    positive_mean(moments)?;
    let (m, v) = (moments.total_mean, moments.variance);
    if v < m {
        return Err(Error::Underdispersed { mean: m, variance: v });
    }
    let b = (v - m) / v;
    let a = (1.0 - b) * m;
    let params = BirthDeathParams::new(a, b, 0.0)?;
    let nu = mean_measure.normalized()?;
    let spec = PbdpSpec::new(space.clone(), params, nu)?;
    let diagnostics = BTreeMap::from([
        ("a".to_string(), a),
        ("b".to_string(), b),
        ("beta".to_string(), 0.0),
        ("dispersion_ratio".to_string(), v / m),
    ]);
    Ok(FitResult {
        spec,
        regime: Regime::Overdispersed,
        diagnostics,
    })
}

/// `β = (|λ| - Var) / (|λ| - Var + E|Ξ|^3 - (|λ| + 1) E|Ξ|^2)`,
/// `a = |λ| + β (E|Ξ|^2 - |λ|)`, `ν = (λ + β λ^[2] marginal) / a`, `b = 0`.
pub fn fit_underdispersed(
    space: &CarrierSpace,
    moments: &MomentSummary,
    mean_measure: &DiscreteMeasure,
    second_factorial_marginals: &DiscreteMeasure,
) -> Result<FitResult> {
    positive_mean(moments)?;
    let (m, v) = (moments.total_mean, moments.variance);
    if v >= m {
        return Err(Error::Overdispersed { mean: m, variance: v });
    }
    let (e2, e3) = (moments.second_moment, moments.third_moment);
    let denom = m - v + e3 - (m + 1.0) * e2;
    let beta = (m - v) / denom;
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::NegativeKillRate {
            beta: if beta.is_finite() { beta } else { f64::NEG_INFINITY },
        });
    }
    let a = m + beta * (e2 - m);
    let params = BirthDeathParams::new(a, 0.0, beta)?;
    let mut atoms: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for &(x, w) in mean_measure.atoms() {
        atoms.entry(x.to_bits()).or_insert((x, 0.0)).1 += w;
    }
    for &(x, w) in second_factorial_marginals.atoms() {
        atoms.entry(x.to_bits()).or_insert((x, 0.0)).1 += beta * w;
    }
    let raw = DiscreteMeasure::new(atoms.into_values().map(|(x, w)| (x, w / a)).collect())?;
    let mass = raw.total();
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::MassMismatch { left: mass, right: 1.0 });
    }
    let nu = raw.normalized()?;
    let spec = PbdpSpec::new(space.clone(), params, nu)?;
    let diagnostics = BTreeMap::from([
        ("a".to_string(), a),
        ("b".to_string(), 0.0),
        ("beta".to_string(), beta),
        ("dispersion_ratio".to_string(), v / m),
        ("nu_mass_before_normalization".to_string(), mass),
    ]);
    Ok(FitResult {
        spec,
        regime: Regime::Underdispersed,
        diagnostics,
    })
}

/// Model-specific closed forms `(a, b, beta)`, where the model has one.
pub fn closed_form_parameters(model: &ModelSpec) -> Option<(f64, f64, f64)> {
    match model {
        ModelSpec::Bernoulli { p } => {
            let l1 = compensated_sum(p.iter().copied());
            let l2 = compensated_sum(p.iter().map(|q| q * q));
            let l3 = compensated_sum(p.iter().map(|q| q * q * q));
            let beta = l2 / (l1 * l1 - l2 - 2.0 * l1 * l2 + 2.0 * l3);
            // a = |λ| + β E|Ξ|(|Ξ| - 1), with E|Ξ|(|Ξ| - 1) = |λ|^2 - λ2
            let a = l1 + beta * (l1 * l1 - l2);
            Some((a, 0.0, beta))
        }
        ModelSpec::Runs { n, k, p } => {
            if *n < 2 * k - 1 {
                return None;
            }
            let kf = *k as f64;
            let pk = p.powi(*k as i32);
            let d = 1.0 + p - (2.0 * kf + 1.0) * pk + (2.0 * kf - 1.0) * pk * p;
            let a = (1.0 - p) * *n as f64 * pk / d;
            let b = p * (2.0 - (2.0 * kf + 1.0) * p.powi(*k as i32 - 1) + (2.0 * kf - 1.0) * pk) / d;
            Some((a, b, 0.0))
        }
        ModelSpec::CompoundPoisson { mus, .. } => {
            let s = |f: &dyn Fn(f64) -> f64| compensated_sum(mus.iter().enumerate().map(|(i, m)| f((i + 1) as f64) * m.total()));
            let lam = s(&|i| i);
            let sq = s(&|i| i * i);
            Some((lam * lam / sq, s(&|i| i * (i - 1.0)) / sq, 0.0))
        }
    }
}

/// Route on the sign of `Var - mean` and fit; where a closed form exists
/// its largest relative disagreement is recorded as `closed_form_gap`.
pub fn fit_model(model: &ModelSpec) -> Result<FitResult> {
    let moments = model.moments();
    let lambda = model.mean_measure();
    let space = model.space();
    let mut fit = if moments.variance >= moments.total_mean {
        fit_overdispersed(&space, &moments, &lambda)?
    } else {
        let marginals = model.second_factorial_marginals()?;
        fit_underdispersed(&space, &moments, &lambda, &marginals)?
    };
    if let Some((a, b, beta)) = closed_form_parameters(model) {
        let p = fit.spec.params();
        let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1.0);
        let gap = rel(p.a(), a).max(rel(p.b(), b)).max(rel(p.beta(), beta));
        fit.diagnostics.insert("closed_form_gap".into(), gap);
    }
    Ok(fit)
}

/// Poisson process with the target's mean measure.
pub fn poisson_fit(model: &ModelSpec) -> Result<PbdpSpec> {
    let lambda = model.mean_measure();
    let params = BirthDeathParams::poisson(lambda.total())?;
    PbdpSpec::new(model.space(), params, lambda.normalized()?)
}
