use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::ap_field::{Bounds, CoefficientSet, ForcingLaw, TrigPolynomial};
use crate::error::Result;

fn default_scale() -> f64 {
    0.02
}

fn default_density_amplitude() -> f64 {
    0.2
}

fn default_p() -> f64 {
    3.0
}

/// Named coefficient families, or an explicit set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSpec {
    /// `a = s(2 + cos 2πy₁)I`, `b = s(1 + ½cos 2πy₁)`, `ρ = 1 + δ cos 2πy₂`.
    Laminate {
        #[serde(default = "default_scale")]
        viscosity_scale: f64,
        #[serde(default = "default_density_amplitude")]
        density_amplitude: f64,
        #[serde(default = "default_p")]
        p: f64,
    },
    /// `a = nu0·I`, `b = nu1`, constant density.
    Constant { nu0: f64, nu1: f64, rho: f64, p: f64 },
    Custom { coefficients: CoefficientSet },
}

impl ScenarioSpec {
    pub fn laminate() -> Self {
        ScenarioSpec::Laminate {
            viscosity_scale: default_scale(),
            density_amplitude: default_density_amplitude(),
            p: default_p(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioSpec::Laminate { .. } => "laminate",
            ScenarioSpec::Constant { .. } => "constant",
            ScenarioSpec::Custom { .. } => "custom",
        }
    }

    pub fn coefficients(&self) -> Result<CoefficientSet> {
        match self {
            ScenarioSpec::Laminate {
                viscosity_scale,
                density_amplitude,
                p,
            } => laminate(*viscosity_scale, *density_amplitude, *p),
            ScenarioSpec::Constant { nu0, nu1, rho, p } => CoefficientSet::constant(*nu0, *nu1, *rho, *p),
            ScenarioSpec::Custom { coefficients } => Ok(coefficients.clone()),
        }
    }
}

/// Laminate in `y₁` for the viscosities and in `y₂` for the density, with
/// tight certified bounds `ν₀ = s`, `ν₁ = s/2`, `ν₂ = 3s/2`.
pub fn laminate(scale: f64, density_amplitude: f64, p: f64) -> Result<CoefficientSet> {
    let k = 2.0 * PI;
    let a = TrigPolynomial::constant(3, 2.0 * scale).add(&TrigPolynomial::cosine(&[k, 0.0, 0.0], scale))?;
    let b = TrigPolynomial::constant(3, scale).add(&TrigPolynomial::cosine(&[k, 0.0, 0.0], 0.5 * scale))?;
    let rho = TrigPolynomial::constant(2, 1.0).add(&TrigPolynomial::cosine(&[0.0, k], density_amplitude))?;
    let lambda = (1.0 + density_amplitude).max(1.0 / (1.0 - density_amplitude.abs()));
    CoefficientSet::new(
        rho,
        [a.clone(), TrigPolynomial::zero(3), a],
        b,
        ForcingLaw::zero(),
        Bounds {
            nu0: scale * (1.0 - 1e-12),
            nu1: 0.5 * scale * (1.0 - 1e-12),
            nu2: 1.5 * scale * (1.0 + 1e-12),
            lambda: lambda * (1.0 + 1e-12),
            lipschitz_k: 1.0,
        },
        p,
    )
}
