//! Explicit projection step shared by the oscillating and homogenized solvers.

use crate::ap_field::saturation;
use crate::error::{Error, Result};
use crate::grid::{
    advect_skew, cell_lr_norm, flux_divergence, quadrature_gradients, FaceDensity, FlowState, MacGrid, Projector,
};
use crate::tensor::Tensor2;

/// Stress law evaluated on the quadrature tensors of a whole grid.
pub trait Constitutive {
    /// Fills `out[k]` with the stress for the gradient `grads[k]` at `time`.
    fn stresses(&mut self, time: f64, grads: &[Tensor2], out: &mut [Tensor2]) -> Result<()>;
}

/// Momentum-forcing per unit density: `g(t) + k·sat(u)` componentwise.
pub trait BodyForce {
    fn g(&self, time: f64) -> [f64; 2];
    fn gain(&self) -> f64;
}

/// Diagnostics at one time level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticRow {
    pub t: f64,
    /// `Σ |u|² h²`
    pub energy: f64,
    /// `Σ ρ |u|² h²`
    pub energy_rho: f64,
    /// `‖∇u‖₂²`
    pub h1: f64,
    /// `‖∇u‖_p^p`
    pub wp: f64,
    /// `‖q‖_{L^{p'}}`
    pub q_norm: f64,
}

pub(crate) struct Kernel<C, F> {
    pub grid: MacGrid,
    pub dt: f64,
    pub p: f64,
    pub gradient_cap: f64,
    density: FaceDensity,
    inv_rho_u: Vec<f64>,
    inv_rho_v: Vec<f64>,
    projector: Projector,
    pub law: C,
    force: F,
    grads: Vec<Tensor2>,
    sigma: Vec<Tensor2>,
}

fn first_non_finite(xs: &[f64]) -> bool {
    xs.iter().any(|x| !x.is_finite())
}

impl<C: Constitutive, F: BodyForce> Kernel<C, F> {
    pub fn new(grid: MacGrid, dt: f64, p: f64, gradient_cap: f64, density: FaceDensity, law: C, force: F) -> Result<Self> {
        let projector = Projector::new(&grid, Some(&density))?;
        let inv_rho_u = density.u.iter().map(|r| 1.0 / r).collect();
        let inv_rho_v = density.v.iter().map(|r| 1.0 / r).collect();
        Ok(Kernel {
            grid,
            dt,
            p,
            gradient_cap,
            density,
            inv_rho_u,
            inv_rho_v,
            projector,
            law,
            force,
            grads: Vec::new(),
            sigma: Vec::new(),
        })
    }

    /// Projects an initial state, returning it with the potential discarded.
    pub fn project_initial(&mut self, state: &mut FlowState) -> Result<()> {
        self.projector.project(&mut state.u, &mut state.v)?;
        Ok(())
    }

    pub fn pressure_norm(&self, q: &[f64]) -> f64 {
        cell_lr_norm(&self.grid, q, self.p / (self.p - 1.0))
    }

    /// Energy, gradient norms and pressure norm at `state`.
    pub fn diagnostics(&self, state: &FlowState) -> DiagnosticRow {
        let g = quadrature_gradients(&self.grid, &state.u, &state.v);
        DiagnosticRow {
            t: state.time,
            energy: state.kinetic(&self.grid),
            energy_rho: state.weighted_kinetic(&self.grid, &self.density),
            h1: g.h1_seminorm_sq(),
            wp: g.lp_power(self.p),
            q_norm: self.pressure_norm(&state.q),
        }
    }

    /// One explicit step followed by the weighted projection. The returned
    /// state carries the pressure `q = φ/dt` of this step.
    pub fn step(&mut self, state: &FlowState) -> Result<FlowState> {
        let grid = self.grid;
        let t = state.time;
        let dt = self.dt;
        let gf = quadrature_gradients(&grid, &state.u, &state.v);
        self.grads = gf.tensors();
        let gmax = self.grads.iter().fold(0.0_f64, |m, g| m.max(g.norm()));
        if !gmax.is_finite() {
            return Err(Error::Instability { term: "velocity gradient", time: t });
        }
        if gmax > self.gradient_cap {
            return Err(Error::GradientCap {
                found: gmax,
                cap: self.gradient_cap,
                time: t,
            });
        }
        self.sigma.resize(self.grads.len(), Tensor2::ZERO);
        self.law.stresses(t, &self.grads, &mut self.sigma)?;
        let (fu, fv) = flux_divergence(&grid, &self.sigma);
        if first_non_finite(&fu) || first_non_finite(&fv) {
            return Err(Error::Instability { term: "viscous flux", time: t });
        }
        let (cu, cv) = advect_skew(state, &grid)?;
        if first_non_finite(&cu) || first_non_finite(&cv) {
            return Err(Error::Instability { term: "advection", time: t });
        }
        let g = self.force.g(t);
        let k = self.force.gain();
        let mut u = state.u.clone();
        let mut v = state.v.clone();
        for idx in 0..grid.len() {
            let fx = g[0] + k * saturation(state.u[idx]);
            let fy = g[1] + k * saturation(state.v[idx]);
            u[idx] += dt * ((fu[idx] - cu[idx]) * self.inv_rho_u[idx] + fx);
            v[idx] += dt * ((fv[idx] - cv[idx]) * self.inv_rho_v[idx] + fy);
        }
        if first_non_finite(&u) || first_non_finite(&v) {
            return Err(Error::Instability { term: "forcing", time: t });
        }
        let phi = self.projector.project(&mut u, &mut v)?;
        let q: Vec<f64> = phi.iter().map(|x| x / dt).collect();
        if first_non_finite(&q) || first_non_finite(&u) || first_non_finite(&v) {
            return Err(Error::Instability { term: "pressure projection", time: t });
        }
        Ok(FlowState { u, v, q, time: t + dt })
    }
}

/// Snapshots and per-step diagnostics of a run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: MacGrid,
    pub p: f64,
    pub states: Vec<FlowState>,
    pub diagnostics: Vec<DiagnosticRow>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.time).collect()
    }

    pub fn last(&self) -> &FlowState {
        self.states.last().expect("a trajectory holds at least the initial state")
    }
}

/// Runs `steps` steps of length `kernel.dt` from `u0`, keeping every
/// `stride`-th state and the final one. Each diagnostics row pairs the
/// velocity at `t_n` with the pressure of the step leaving `t_n`; the last
/// row reuses the final pressure.
pub(crate) fn integrate<C: Constitutive, F: BodyForce>(
    kernel: &mut Kernel<C, F>,
    u0: FlowState,
    steps: usize,
    stride: usize,
) -> Result<Trajectory> {
    let stride = stride.max(1);
    let dt = kernel.dt;
    let t0 = u0.time;
    let mut states = vec![u0.clone()];
    let mut diagnostics = Vec::with_capacity(steps + 1);
    let mut state = u0;
    for n in 0..steps {
        let mut row = kernel.diagnostics(&state);
        let mut next = kernel.step(&state)?;
        next.time = t0 + (n + 1) as f64 * dt;
        row.q_norm = kernel.pressure_norm(&next.q);
        diagnostics.push(row);
        if n == 0 {
            states[0].q.clone_from(&next.q);
        }
        state = next;
        if (n + 1) % stride == 0 || n + 1 == steps {
            states.push(state.clone());
        }
    }
    diagnostics.push(kernel.diagnostics(&state));
    Ok(Trajectory {
        grid: kernel.grid,
        p: kernel.p,
        states,
        diagnostics,
    })
}
