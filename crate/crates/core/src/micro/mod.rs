//! Explicit solver for the ε-scale problem with oscillating coefficients.

mod init;
mod kernel;

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::ap_field::{CoefficientSet, TrigPolynomial};
use crate::error::{Error, Result};
use crate::grid::{divergence, quadrature_points, stress, write_snapshot, FaceDensity, FlowState, MacGrid};
use crate::tensor::{Sym2, Tensor2};

pub use init::InitialCondition;
pub use kernel::{BodyForce, Constitutive, DiagnosticRow, Trajectory};
pub(crate) use kernel::{integrate, Kernel};

/// Largest step satisfying
/// `dt ≤ cfl · ρ_min · h² / (2(ν₂ max(1, G^{p−2}) + ‖a‖_∞))`.
pub fn max_stable_dt(coeffs: &CoefficientSet, grid: &MacGrid, gradient_cap: f64, cfl_safety: f64) -> f64 {
    let cert = coeffs.certify().expect("coefficient sets are certified on construction");
    let nl = coeffs.bounds().nu2 * gradient_cap.powf(coeffs.p() - 2.0).max(1.0);
    cfl_safety * cert.rho_min.min(1.0) * grid.h() * grid.h() / (2.0 * (nl + coeffs.a_sup()))
}

/// Step count and uniform step length covering `[0, t_end]` without
/// exceeding `dt`.
pub fn step_plan(t_end: f64, dt: f64) -> (usize, f64) {
    if t_end <= 0.0 {
        return (0, dt);
    }
    let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    (steps, t_end / steps as f64)
}

#[derive(Debug, Clone)]
pub struct MicroProblem {
    pub coeffs: CoefficientSet,
    pub eps: f64,
    pub grid: MacGrid,
    pub t_end: f64,
    pub dt: f64,
    pub u0: FlowState,
    pub gradient_cap: f64,
    pub cfl_safety: f64,
    /// Keep every `snapshot_stride`-th state.
    pub snapshot_stride: usize,
}

impl MicroProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        coeffs: CoefficientSet,
        eps: f64,
        grid: MacGrid,
        t_end: f64,
        dt: f64,
        u0: FlowState,
        gradient_cap: f64,
        cfl_safety: f64,
    ) -> Result<Self> {
        let problem = MicroProblem {
            coeffs,
            eps,
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
        if !(self.eps > 0.0) {
            return Err(Error::arg("eps must be positive"));
        }
        if !(self.t_end >= 0.0) || !(self.dt > 0.0) {
            return Err(Error::arg("t_end must be non-negative and dt positive"));
        }
        if !(self.gradient_cap > 0.0) || !(self.cfl_safety > 0.0) {
            return Err(Error::arg("gradient cap and CFL safety must be positive"));
        }
        self.u0.check(&self.grid)?;
        let limit = max_stable_dt(&self.coeffs, &self.grid, self.gradient_cap, self.cfl_safety);
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::arg(format!("dt = {:e} exceeds the stability bound {limit:e}", self.dt)));
        }
        if self.grid.h() > self.eps / 8.0 {
            log::warn!(
                "grid spacing {} does not resolve eps = {} (h > eps/8)",
                self.grid.h(),
                self.eps
            );
        }
        Ok(())
    }

    pub(crate) fn kernel(&self, dt: f64) -> Result<Kernel<MicroLaw, MicroForce>> {
        let rho = self.coeffs.rho();
        let eps = self.eps;
        let density = FaceDensity::from_fn(&self.grid, |x| rho.eval_real(&[x[0] / eps, x[1] / eps]));
        let law = MicroLaw::new(&self.coeffs, &self.grid, eps);
        let force = MicroForce {
            g: self.coeffs.forcing().g.clone(),
            gain: self.coeffs.forcing().saturation_gain,
            eps,
        };
        Kernel::new(self.grid, dt, self.coeffs.p(), self.gradient_cap, density, law, force)
    }

    /// Face density `ρ(x/ε)`.
    pub fn density(&self) -> FaceDensity {
        let rho = self.coeffs.rho();
        FaceDensity::from_fn(&self.grid, |x| rho.eval_real(&[x[0] / self.eps, x[1] / self.eps]))
    }
}

/// Values of one `(y, τ)` polynomial at fixed points `x/ε`, grouped by the
/// temporal frequency so that each step only needs one phase per group.
#[derive(Debug, Clone)]
pub(crate) struct OscillatingSamples {
    steady: Vec<f64>,
    waves: Vec<(f64, Vec<Complex64>)>,
}

impl OscillatingSamples {
    pub fn new(poly: &TrigPolynomial, points: &[[f64; 2]], eps: f64) -> Self {
        let mut steady = vec![0.0; points.len()];
        let mut waves: Vec<(f64, Vec<Complex64>)> = Vec::new();
        for t in poly.terms() {
            let (k1, k2, w) = (t.freq[0] / eps, t.freq[1] / eps, t.freq[2]);
            if w == 0.0 {
                for (s, x) in steady.iter_mut().zip(points) {
                    let (sn, cs) = (k1 * x[0] + k2 * x[1]).sin_cos();
                    *s += t.amp.re * cs - t.amp.im * sn;
                }
            } else {
                let slot = match waves.iter().position(|(f, _)| *f == w) {
                    Some(i) => i,
                    None => {
                        waves.push((w, vec![Complex64::new(0.0, 0.0); points.len()]));
                        waves.len() - 1
                    }
                };
                for (s, x) in waves[slot].1.iter_mut().zip(points) {
                    *s += t.amp * Complex64::from_polar(1.0, k1 * x[0] + k2 * x[1]);
                }
            }
        }
        OscillatingSamples { steady, waves }
    }

    pub fn is_steady(&self) -> bool {
        self.waves.is_empty()
    }

    pub fn fill(&self, tau: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.steady);
        for (w, vals) in &self.waves {
            let ph = Complex64::from_polar(1.0, w * tau);
            for (o, z) in out.iter_mut().zip(vals) {
                *o += (ph * z).re;
            }
        }
    }
}

/// Oscillating stress `a(x/ε, t/ε²)G + b(x/ε, t/ε²)|G|^{p−2}G` on the
/// quadrature points.
pub(crate) struct MicroLaw {
    fields: [OscillatingSamples; 4],
    values: [Vec<f64>; 4],
    eps: f64,
    p: f64,
    filled_at: Option<f64>,
}

impl MicroLaw {
    fn new(coeffs: &CoefficientSet, grid: &MacGrid, eps: f64) -> Self {
        let pts = quadrature_points(grid);
        let a = coeffs.a();
        let fields = [
            OscillatingSamples::new(&a[0], &pts, eps),
            OscillatingSamples::new(&a[1], &pts, eps),
            OscillatingSamples::new(&a[2], &pts, eps),
            OscillatingSamples::new(coeffs.b(), &pts, eps),
        ];
        let values = std::array::from_fn(|_| vec![0.0; pts.len()]);
        MicroLaw {
            fields,
            values,
            eps,
            p: coeffs.p(),
            filled_at: None,
        }
    }
}

impl Constitutive for MicroLaw {
    fn stresses(&mut self, time: f64, grads: &[Tensor2], out: &mut [Tensor2]) -> Result<()> {
        let steady = self.fields.iter().all(|f| f.is_steady());
        if self.filled_at.is_none() || (!steady && self.filled_at != Some(time)) {
            let tau = time / (self.eps * self.eps);
            for (f, v) in self.fields.iter().zip(self.values.iter_mut()) {
                f.fill(tau, v);
            }
            self.filled_at = Some(time);
        }
        let [a11, a12, a22, b] = &self.values;
        for k in 0..grads.len() {
            out[k] = stress(&Sym2::new(a11[k], a12[k], a22[k]), b[k], self.p, &grads[k]);
        }
        Ok(())
    }
}

pub(crate) struct MicroForce {
    g: [TrigPolynomial; 2],
    gain: f64,
    eps: f64,
}

impl BodyForce for MicroForce {
    fn g(&self, time: f64) -> [f64; 2] {
        let tau = time / (self.eps * self.eps);
        [self.g[0].eval_real(&[tau]), self.g[1].eval_real(&[tau])]
    }

    fn gain(&self) -> f64 {
        self.gain
    }
}

pub(crate) fn ensure_divergence_free<C: Constitutive, F: BodyForce>(
    u0: &FlowState,
    grid: &MacGrid,
    kernel: &mut Kernel<C, F>,
) -> Result<FlowState> {
    let mut u0 = u0.clone();
    let div = divergence(&u0, grid)?;
    let dmax = div.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if dmax > 1e-10 * (u0.max_velocity() + 1.0) {
        log::warn!("initial velocity has divergence {dmax:e}; projecting it once");
        kernel.project_initial(&mut u0)?;
    }
    u0.time = 0.0;
    Ok(u0)
}

/// One step of length `problem.dt` from `state`.
pub fn step(state: &FlowState, problem: &MicroProblem) -> Result<FlowState> {
    problem.validate()?;
    state.check(&problem.grid)?;
    let mut kernel = problem.kernel(problem.dt)?;
    kernel.step(state)
}

/// Integrates to `t_end` with the largest uniform step not exceeding `dt`.
pub fn solve(problem: &MicroProblem) -> Result<Trajectory> {
    problem.validate()?;
    let (steps, dt) = step_plan(problem.t_end, problem.dt);
    let mut kernel = problem.kernel(dt)?;
    let u0 = ensure_divergence_free(&problem.u0, &problem.grid, &mut kernel)?;
    integrate(&mut kernel, u0, steps, problem.snapshot_stride)
}

/// Time-integrated Lemma-type bounds of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct EnergyReport {
    /// `sup_t |u|²`
    pub sup_energy: f64,
    /// `∫ ‖∇u‖₂² dt`
    pub h1_integral: f64,
    /// `∫ ‖∇u‖_p^p dt`
    pub wp_integral: f64,
    /// `sup_t ‖q‖_{L^{p'}}`
    pub sup_pressure: f64,
}

pub fn energy_report(traj: &Trajectory) -> EnergyReport {
    let rows = &traj.diagnostics;
    let mut rep = EnergyReport::default();
    for r in rows {
        rep.sup_energy = rep.sup_energy.max(r.energy);
        rep.sup_pressure = rep.sup_pressure.max(r.q_norm);
    }
    for w in rows.windows(2) {
        let dt = w[1].t - w[0].t;
        rep.h1_integral += 0.5 * dt * (w[0].h1 + w[1].h1);
        rep.wp_integral += 0.5 * dt * (w[0].wp + w[1].wp);
    }
    rep
}

/// Writes numbered binary snapshots and `diagnostics.csv` into `dir`.
pub fn write_trajectory(traj: &Trajectory, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (k, s) in traj.states.iter().enumerate() {
        write_snapshot(&dir.join(format!("snapshot_{k:05}.bin")), &traj.grid, s)?;
    }
    let path = dir.join("diagnostics.csv");
    fs::write(&path, diagnostics_csv(&traj.diagnostics)).map_err(|e| Error::io(&path, e))
}

pub fn diagnostics_csv(rows: &[DiagnosticRow]) -> String {
    let mut out = String::from("t,E,E_rho,H1,Wp,q_norm\n");
    for r in rows {
        out.push_str(&format!(
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            r.t, r.energy, r.energy_rho, r.h1, r.wp, r.q_norm
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ap_field::{Bounds, ForcingLaw};
    use crate::grid::Boundary;
    use std::f64::consts::PI;

    fn constant_problem(n: usize, p: f64, t_end: f64, u0: InitialCondition, bc: Boundary) -> MicroProblem {
        let coeffs = CoefficientSet::constant(0.02, 0.01, 1.0, p).unwrap();
        let grid = MacGrid::new(n, bc).unwrap();
        let dt = max_stable_dt(&coeffs, &grid, 5.0, 0.2);
        MicroProblem::new(coeffs, 0.25, grid, t_end, dt, u0.build(&grid), 5.0, 0.2).unwrap()
    }

    #[test]
    fn rest_state_stays_at_rest() {
        let pb = constant_problem(16, 3.0, 0.05, InitialCondition::Zero, Boundary::Noslip);
        let tr = solve(&pb).unwrap();
        assert!(tr.states.iter().all(|s| s.max_velocity() == 0.0));
        let rep = energy_report(&tr);
        assert_eq!(rep, EnergyReport::default());
    }

    #[test]
    fn zero_horizon_keeps_only_initial_state() {
        let pb = constant_problem(16, 3.0, 0.0, InitialCondition::TaylorGreen { amplitude: 0.1, mode: 1 }, Boundary::Periodic);
        let tr = solve(&pb).unwrap();
        assert_eq!(tr.states.len(), 1);
        assert_eq!(tr.states[0].u, pb.u0.u);
    }

    #[test]
    fn taylor_green_decays_at_the_analytic_rate() {
        let pb = constant_problem(32, 2.0, 0.1, InitialCondition::TaylorGreen { amplitude: 0.5, mode: 1 }, Boundary::Periodic);
        let tr = solve(&pb).unwrap();
        let decay = (-8.0 * PI * PI * 0.03 * 0.1_f64).exp();
        let exact = InitialCondition::TaylorGreen { amplitude: 0.5 * decay, mode: 1 }.build(&pb.grid);
        let last = tr.last();
        let num: f64 = last.u.iter().zip(&exact.u).chain(last.v.iter().zip(&exact.v)).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = exact.u.iter().chain(&exact.v).map(|a| a * a).sum();
        assert!((num / den).sqrt() < 0.01, "relative error {}", (num / den).sqrt());
    }

    #[test]
    fn dt_above_the_bound_is_rejected() {
        let pb = constant_problem(16, 3.0, 0.1, InitialCondition::Zero, Boundary::Periodic);
        let err = MicroProblem::new(pb.coeffs.clone(), 0.25, pb.grid, 0.1, pb.dt * 1.5, pb.u0.clone(), 5.0, 0.2);
        assert!(matches!(err, Err(Error::Argument(_))));
    }

    #[test]
    fn oscillating_samples_match_direct_evaluation() {
        let poly = TrigPolynomial::constant(3, 1.0)
            .add(&TrigPolynomial::cosine(&[2.0, 1.0, 3.0], 0.3))
            .unwrap()
            .add(&TrigPolynomial::sine(&[0.0, 5.0, 0.0], 0.2))
            .unwrap();
        let pts = [[0.1, 0.2], [0.7, 0.4]];
        let eps = 0.125;
        let s = OscillatingSamples::new(&poly, &pts, eps);
        let mut out = [0.0; 2];
        let t = 0.013;
        s.fill(t / (eps * eps), &mut out);
        for (o, x) in out.iter().zip(&pts) {
            let direct = poly.scale_sample(eps, &[(*x, t)]).unwrap()[0];
            assert!((o - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn forced_energy_obeys_gronwall_bound() {
        let base = CoefficientSet::constant(0.05, 0.02, 1.0, 3.0).unwrap();
        let forcing = ForcingLaw {
            g: [TrigPolynomial::cosine(&[3.0], 0.3), TrigPolynomial::constant(1, 0.1)],
            saturation_gain: 0.2,
        };
        let coeffs = CoefficientSet::new(
            base.rho().clone(),
            base.a().clone(),
            base.b().clone(),
            forcing.clone(),
            Bounds { lipschitz_k: 1.0, ..*base.bounds() },
            3.0,
        )
        .unwrap();
        let grid = MacGrid::new(16, Boundary::Noslip).unwrap();
        let dt = max_stable_dt(&coeffs, &grid, 5.0, 0.2);
        let u0 = InitialCondition::Bump { amplitude: 0.05 }.build(&grid);
        let pb = MicroProblem::new(coeffs, 0.5, grid, 0.2, dt, u0, 5.0, 0.2).unwrap();
        let tr = solve(&pb).unwrap();
        // d|u|²/dt ≤ 2c∫(1+|u|)|u| ≤ c + 3c|u|² on the unit square
        let c = 3.0 * forcing.growth_constant();
        let e0 = tr.diagnostics[0].energy_rho;
        for r in &tr.diagnostics {
            assert!(r.energy_rho <= (e0 + c * r.t) * (c * r.t).exp() + 1e-14);
        }
        assert!(tr.diagnostics.last().unwrap().energy_rho > 0.0);
    }
}
