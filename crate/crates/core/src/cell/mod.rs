//! Corrector problem on the periodic cell and the effective law built from it.

mod law;
mod solver;
mod torus;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::ap_field::CoefficientSet;
use crate::error::{Error, Result};
use crate::tensor::Tensor2;

pub use law::{EffectiveLaw, LawMode, LawSettings, MonotonicityReport, NodeValue, LAW_SCHEMA};
pub use solver::{flux_for_field, solve_corrector, solve_corrector_time_periodic, verify_uniqueness, UniquenessReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeMode {
    #[default]
    Steady,
    /// March the parabolic cell equation over periods of length `period`
    /// split into `steps` steps.
    TimePeriodic { period: f64, steps: usize },
}

/// Iteration controls shared by both modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Relative dual-norm residual (steady) or relative period drift.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Zero disables Anderson mixing.
    pub anderson_depth: usize,
    pub max_periods: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tolerance: 1e-10,
            max_iterations: 2000,
            anderson_depth: 5,
            max_periods: 200,
        }
    }
}

/// One corrector problem: a macroscopic gradient and `Q`-periodic
/// coefficients sampled on an `M × M` torus.
#[derive(Debug, Clone)]
pub struct CellProblemSpec {
    pub xi: Tensor2,
    pub coeffs: CoefficientSet,
    /// Spatial period `Q` of the coefficients.
    pub period: f64,
    pub resolution: usize,
    pub time_mode: TimeMode,
    pub settings: SolverSettings,
    /// Physical starting iterate `(π₁, π₂)`; projected before use.
    pub initial: Option<[Vec<f64>; 2]>,
}

impl CellProblemSpec {
    /// Coefficients must already be periodic with period `period` in `y`.
    pub fn new(xi: Tensor2, coeffs: CoefficientSet, period: f64, resolution: usize) -> Result<Self> {
        let spec = CellProblemSpec {
            xi,
            coeffs,
            period,
            resolution,
            time_mode: TimeMode::Steady,
            settings: SolverSettings::default(),
            initial: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Rounds the spatial frequencies of `coeffs` to multiples of `2π/Q` and
    /// returns the problem with the largest frequency perturbation.
    pub fn from_almost_periodic(xi: Tensor2, coeffs: &CoefficientSet, q: usize, resolution: usize) -> Result<(Self, f64)> {
        let (set, delta) = spatial_periodic_approximation(coeffs, q)?;
        Ok((CellProblemSpec::new(xi, set, q as f64, resolution)?, delta))
    }

    pub fn with_time_mode(mut self, mode: TimeMode) -> Self {
        self.time_mode = mode;
        self
    }

    pub fn with_settings(mut self, settings: SolverSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn with_initial(mut self, initial: [Vec<f64>; 2]) -> Self {
        self.initial = Some(initial);
        self
    }

    pub fn with_xi(mut self, xi: Tensor2) -> Self {
        self.xi = xi;
        self.initial = None;
        self
    }

    pub fn p(&self) -> f64 {
        self.coeffs.p()
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 16 || self.resolution % 2 != 0 {
            return Err(Error::arg(format!(
                "torus resolution {} must be even and at least 16",
                self.resolution
            )));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::arg("cell period must be positive"));
        }
        if !self.xi.is_finite() {
            return Err(Error::arg("macroscopic gradient is not finite"));
        }
        let quantum = 2.0 * PI / self.period;
        let polys = self.coeffs.a().iter().chain([self.coeffs.b()]);
        for poly in polys.chain([self.coeffs.rho()]) {
            for t in poly.terms() {
                for &k in &t.freq[..2] {
                    let r = k / quantum;
                    if (r - r.round()).abs() > 1e-9 * r.abs().max(1.0) {
                        return Err(Error::arg(format!(
                            "spatial frequency {k} is not a multiple of 2π/{}; use a periodic approximation",
                            self.period
                        )));
                    }
                }
            }
        }
        if let Some(init) = &self.initial {
            let n = self.resolution * self.resolution;
            if init[0].len() != n || init[1].len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: init[0].len().min(init[1].len()),
                });
            }
        }
        if let TimeMode::TimePeriodic { period, steps } = self.time_mode {
            if !(period > 0.0 && period.is_finite()) || steps < 4 {
                return Err(Error::arg("time-periodic mode needs a positive period and at least 4 steps"));
            }
        }
        Ok(())
    }
}

/// Rounds only `y`-frequencies; the fast time is left untouched.
pub fn spatial_periodic_approximation(coeffs: &CoefficientSet, q: usize) -> Result<(CoefficientSet, f64)> {
    let mask = [true, true, false];
    let (rho, d0) = coeffs.rho().periodic_approximation(q)?;
    let mut worst = d0;
    let mut round = |p: &crate::ap_field::TrigPolynomial| -> Result<crate::ap_field::TrigPolynomial> {
        let (r, d) = p.periodic_approximation_axes(q, &mask)?;
        worst = worst.max(d);
        Ok(r)
    };
    let a = coeffs.a();
    let a = [round(&a[0])?, round(&a[1])?, round(&a[2])?];
    let b = round(coeffs.b())?;
    let set = CoefficientSet::new(rho, a, b, coeffs.forcing().clone(), *coeffs.bounds(), coeffs.p())?;
    Ok((set, worst))
}

/// Corrector `π(ξ)` on the torus with its gradient and effective fluxes.
#[derive(Debug, Clone)]
pub struct CorrectorSolution {
    pub xi: Tensor2,
    pub resolution: usize,
    pub period: f64,
    /// Row-major samples of `(π₁, π₂)` with `y₁` fastest.
    pub pi: [Vec<f64>; 2],
    /// `∇_y π` at the torus points (at `τ = 0` in time-periodic mode).
    pub grad_pi: Vec<Tensor2>,
    /// Relative dual-norm residual (steady) or relative period drift.
    pub residual: f64,
    /// `𝔐(ρπ)` after normalization.
    pub gauge: [f64; 2],
    pub iterations: usize,
    pub history: Vec<f64>,
    /// `𝔐(a(ξ+∇π))`
    pub m_xi: Tensor2,
    /// `𝔐(b|ξ+∇π|^{p−2}(ξ+∇π))`
    pub big_m_xi: Tensor2,
}

impl CorrectorSolution {
    pub fn flux(&self) -> Tensor2 {
        self.m_xi + self.big_m_xi
    }

    /// `‖∇π‖₂` as a root mean square over the torus.
    pub fn grad_norm(&self) -> f64 {
        (self.grad_pi.iter().map(|g| g.norm_sq()).sum::<f64>() / self.grad_pi.len() as f64).sqrt()
    }

    /// Periodic bilinear interpolation of `∇π` at `y`.
    pub fn grad_at(&self, y: [f64; 2]) -> Tensor2 {
        self.gradient_sampler().at(y)
    }

    /// Interpolator precomputing the gradient components once.
    pub fn gradient_sampler(&self) -> GradientSampler {
        let comps = std::array::from_fn(|c| self.grad_pi.iter().map(|g| g.to_array()[c]).collect());
        GradientSampler {
            m: self.resolution,
            period: self.period,
            comps,
        }
    }
}

/// Bilinear sampler of a corrector gradient on the torus.
#[derive(Debug, Clone)]
pub struct GradientSampler {
    m: usize,
    period: f64,
    comps: [Vec<f64>; 4],
}

impl GradientSampler {
    pub fn at(&self, y: [f64; 2]) -> Tensor2 {
        Tensor2::from_array(std::array::from_fn(|c| torus::bilinear(self.m, self.period, &self.comps[c], y)))
    }
}

#[cfg(test)]
mod tests;
