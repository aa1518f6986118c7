//! Macroscopic problem with the effective law, mean density and mean forcing.

use std::sync::Arc;

use crate::ap_field::{saturation, CoefficientSet};
use crate::cell::EffectiveLaw;
use crate::error::{Error, Result};
use crate::grid::{FaceDensity, FlowState, MacGrid};
use crate::micro::{ensure_divergence_free, integrate, step_plan, BodyForce, Constitutive, Kernel, Trajectory};
use crate::tensor::Tensor2;

/// `𝔐_y(ρ)·[𝔐_τ(g) + k·sat(u)]`, componentwise saturation.
pub fn mean_forcing(coeffs: &CoefficientSet, u: [f64; 2]) -> [f64; 2] {
    let rho = coeffs.rho_mean();
    let g = coeffs.mean_g();
    let k = coeffs.forcing().saturation_gain;
    [rho * (g[0] + k * saturation(u[0])), rho * (g[1] + k * saturation(u[1]))]
}

#[derive(Debug, Clone)]
pub struct HomogenizedProblem {
    pub rho_bar: f64,
    pub law: Arc<EffectiveLaw>,
    /// `𝔐_τ(g)`
    pub g_bar: [f64; 2],
    pub saturation_gain: f64,
    pub grid: MacGrid,
    pub t_end: f64,
    pub dt: f64,
    pub u0: FlowState,
    pub gradient_cap: f64,
    pub cfl_safety: f64,
    pub snapshot_stride: usize,
}

/// Largest step with `dt ≤ cfl · min(1, ρ̄) h² / (2 L)`, `L` the a-priori
/// Lipschitz bound of the law on `|ξ| ≤ gradient_cap`.
pub fn max_stable_dt(law: &EffectiveLaw, rho_bar: f64, grid: &MacGrid, gradient_cap: f64, cfl_safety: f64) -> f64 {
    cfl_safety * rho_bar.min(1.0) * grid.h() * grid.h() / (2.0 * law.lipschitz_bound(gradient_cap))
}

impl HomogenizedProblem {
    /// Takes `ρ̄`, `𝔐_τ(g)` and the saturation gain from `coeffs`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        coeffs: &CoefficientSet,
        law: Arc<EffectiveLaw>,
        grid: MacGrid,
        t_end: f64,
        dt: f64,
        u0: FlowState,
        gradient_cap: f64,
        cfl_safety: f64,
    ) -> Result<Self> {
        let problem = HomogenizedProblem {
            rho_bar: coeffs.rho_mean(),
            law,
            g_bar: coeffs.mean_g(),
            saturation_gain: coeffs.forcing().saturation_gain,
            grid,
            t_end,
            dt,
            u0,
            gradient_cap,
            cfl_safety,
            snapshot_stride: 1,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn with_snapshot_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = stride.max(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho_bar > 0.0) {
            return Err(Error::arg("mean density must be positive"));
        }
        if self.law.p() < 2.0 {
            return Err(Error::arg("effective law exponent must be at least 2"));
        }
        if !(self.t_end >= 0.0) || !(self.dt > 0.0) {
            return Err(Error::arg("t_end must be non-negative and dt positive"));
        }
        if !(self.gradient_cap > 0.0) || !(self.cfl_safety > 0.0) {
            return Err(Error::arg("gradient cap and CFL safety must be positive"));
        }
        self.u0.check(&self.grid)?;
        let limit = max_stable_dt(&self.law, self.rho_bar, &self.grid, self.gradient_cap, self.cfl_safety);
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::arg(format!("dt = {:e} exceeds the stability bound {limit:e}", self.dt)));
        }
        Ok(())
    }

    fn kernel(&self, dt: f64) -> Result<Kernel<LawStress, MeanForce>> {
        Kernel::new(
            self.grid,
            dt,
            self.law.p(),
            self.gradient_cap,
            FaceDensity::uniform(&self.grid, self.rho_bar),
            LawStress { law: self.law.clone() },
            MeanForce {
                g: self.g_bar,
                gain: self.saturation_gain,
            },
        )
    }
}

struct LawStress {
    law: Arc<EffectiveLaw>,
}

impl Constitutive for LawStress {
    fn stresses(&mut self, _time: f64, grads: &[Tensor2], out: &mut [Tensor2]) -> Result<()> {
        self.law.fluxes(grads, out)
    }
}

struct MeanForce {
    g: [f64; 2],
    gain: f64,
}

impl BodyForce for MeanForce {
    fn g(&self, _time: f64) -> [f64; 2] {
        self.g
    }

    fn gain(&self) -> f64 {
        self.gain
    }
}

/// Integrates the homogenized problem with the stepping scheme of the
/// oscillating solver, `F` replacing the stress and `ρ̄` the density.
pub fn solve_homogenized(problem: &HomogenizedProblem) -> Result<Trajectory> {
    problem.validate()?;
    let (steps, dt) = step_plan(problem.t_end, problem.dt);
    let mut kernel = problem.kernel(dt)?;
    let u0 = ensure_divergence_free(&problem.u0, &problem.grid, &mut kernel)?;
    integrate(&mut kernel, u0, steps, problem.snapshot_stride)
}
