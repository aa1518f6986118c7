use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::ap_field::{CoefficientSet, TrigPolynomial};
use crate::cell::{solve_corrector, CellProblemSpec, EffectiveLaw, GradientSampler, TimeMode};
use crate::error::{Error, Result};
use crate::grid::{cell_gradients, quadrature_gradients, quadrature_points, remove_mean, Boundary, FlowState, MacGrid};
use crate::homogenized::{self, solve_homogenized, HomogenizedProblem};
use crate::micro::{self, energy_report, MicroProblem, Trajectory};
use crate::tensor::Tensor2;

use super::config::{Norm, StudyConfig};
use super::report::{ConvergenceReport, ErrorRow, MacroSummary, SigmaRow, Verdict, REPORT_SCHEMA};
use super::sigma::{sigma_test, trapezoid_weights};

/// Step length dividing `interval` into a whole number of steps no longer
/// than `limit`, and that number.
pub fn aligned_step(interval: f64, limit: f64) -> (f64, usize) {
    let stride = ((interval / limit) - 1e-9).ceil().max(1.0) as usize;
    (interval / stride as f64, stride)
}

/// `‖u_a − u_b‖_{L²(Q_T)}` with both trajectories restricted to the coarser
/// grid and the trapezoid rule over the shared snapshot times.
pub fn space_time_l2_error(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.states.len() != b.states.len() {
        return Err(Error::Dimension {
            expected: a.states.len(),
            got: b.states.len(),
        });
    }
    let coarse = if a.grid.n() <= b.grid.n() { a.grid } else { b.grid };
    let h2 = coarse.h() * coarse.h();
    let times = a.times();
    let w = trapezoid_weights(&times);
    let mut total = 0.0;
    for ((sa, sb), wk) in a.states.iter().zip(&b.states).zip(w) {
        if (sa.time - sb.time).abs() > 1e-9 * sa.time.abs().max(1.0) {
            return Err(Error::arg(format!(
                "snapshot times differ: {} vs {}",
                sa.time, sb.time
            )));
        }
        let (ua, va) = a.grid.restrict_faces(&coarse, &sa.u, &sa.v)?;
        let (ub, vb) = b.grid.restrict_faces(&coarse, &sb.u, &sb.v)?;
        let d: f64 = ua
            .iter()
            .zip(&ub)
            .chain(va.iter().zip(&vb))
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        total += wk * d * h2;
    }
    Ok(total.sqrt())
}

/// `|∫∫ q_a ψ − ∫∫ q_b ψ|` with mean-free pressures, each on its own grid.
pub fn pressure_weak_error(a: &Trajectory, b: &Trajectory, psi: &TrigPolynomial) -> f64 {
    (pressure_pairing(a, psi) - pressure_pairing(b, psi)).abs()
}

fn pressure_pairing(traj: &Trajectory, psi: &TrigPolynomial) -> f64 {
    let grid = &traj.grid;
    let n = grid.n();
    let h2 = grid.h() * grid.h();
    let w = trapezoid_weights(&traj.times());
    let mut total = 0.0;
    for (s, wk) in traj.states.iter().zip(w) {
        let mut q = s.q.clone();
        remove_mean(&mut q);
        let mut acc = 0.0;
        for j in 0..n {
            for i in 0..n {
                let c = grid.cell_center(i, j);
                acc += q[grid.idx(i, j)] * psi.eval_real(&[c[0], c[1], s.time]);
            }
        }
        total += wk * acc * h2;
    }
    total
}

/// Bilinear interpolation between staggered sample points
/// `((i + o₁)h, (j + o₂)h)`; periodic wrap or constant extension at walls.
struct StaggeredInterpolator {
    n: usize,
    bc: Boundary,
    offset: [f64; 2],
}

impl StaggeredInterpolator {
    fn centers(grid: &MacGrid) -> Self {
        StaggeredInterpolator {
            n: grid.n(),
            bc: grid.bc(),
            offset: [0.5, 0.5],
        }
    }

    fn sample(&self, values: &[f64], x: [f64; 2]) -> f64 {
        self.weights(x).iter().map(|&(c, w)| values[c] * w).sum()
    }

    fn weights(&self, x: [f64; 2]) -> [(usize, f64); 4] {
        let n = self.n;
        let axis = |x: f64, o: f64| -> (usize, usize, f64) {
            let s = x * n as f64 - o;
            match self.bc {
                Boundary::Periodic => {
                    let f = s.floor();
                    let i0 = (f as i64).rem_euclid(n as i64) as usize;
                    (i0, (i0 + 1) % n, s - f)
                }
                Boundary::Noslip => {
                    let s = s.clamp(0.0, (n - 1) as f64);
                    let i0 = (s.floor() as usize).min(n - 2);
                    (i0, i0 + 1, s - i0 as f64)
                }
            }
        };
        let (i0, i1, fx) = axis(x[0], self.offset[0]);
        let (j0, j1, fy) = axis(x[1], self.offset[1]);
        [
            (j0 * n + i0, (1.0 - fx) * (1.0 - fy)),
            (j0 * n + i1, fx * (1.0 - fy)),
            (j1 * n + i0, (1.0 - fx) * fy),
            (j1 * n + i1, fx * fy),
        ]
    }
}

/// Face velocities of `state` on `coarse` carried to `fine`: injection when
/// the grids coincide, bilinear interpolation otherwise.
fn prolong(state: &FlowState, coarse: &MacGrid, fine: &MacGrid) -> (Vec<f64>, Vec<f64>) {
    if coarse.n() == fine.n() {
        return (state.u.clone(), state.v.clone());
    }
    let iu = StaggeredInterpolator {
        n: coarse.n(),
        bc: coarse.bc(),
        offset: [0.0, 0.5],
    };
    let iv = StaggeredInterpolator {
        offset: [0.5, 0.0],
        ..iu
    };
    let n = fine.n();
    let mut u = vec![0.0; n * n];
    let mut v = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            let k = fine.idx(i, j);
            u[k] = iu.sample(&state.u, fine.u_position(i, j));
            v[k] = iv.sample(&state.v, fine.v_position(i, j));
        }
    }
    fine.apply_walls(&mut u, &mut v);
    (u, v)
}

/// Final-time gradient errors on the ε-grid, without and with the first
/// order corrector built from the homogenized gradient.
fn gradient_errors(
    micro_state: &FlowState,
    micro_grid: &MacGrid,
    eps: f64,
    macro_state: &FlowState,
    macro_grid: &MacGrid,
    samplers: Option<&[GradientSampler]>,
) -> (f64, Option<f64>) {
    let g = quadrature_gradients(micro_grid, &micro_state.u, &micro_state.v).tensors();
    let (u0, v0) = prolong(macro_state, macro_grid, micro_grid);
    let g0 = quadrature_gradients(micro_grid, &u0, &v0).tensors();
    let pts = quadrature_points(micro_grid);
    let interp = StaggeredInterpolator::centers(macro_grid);
    let w = 0.25 * micro_grid.h() * micro_grid.h();
    let mut plain = 0.0;
    let mut corrected = 0.0;
    for ((ge, g0), x) in g.iter().zip(&g0).zip(&pts) {
        let d = *ge - *g0;
        plain += d.norm_sq();
        if let Some(s) = samplers {
            let wts = interp.weights(*x);
            let y = [x[0] / eps, x[1] / eps];
            let mut gp = Tensor2::ZERO;
            for &(c, wc) in &wts {
                if wc != 0.0 {
                    gp += s[c].at(y) * wc;
                }
            }
            corrected += (d - gp).norm_sq();
        }
    }
    ((plain * w).sqrt(), samplers.map(|_| (corrected * w).sqrt()))
}

/// One corrector per homogenized cell at the final gradient.
fn cell_correctors(cfg: &StudyConfig, coeffs: &CoefficientSet, grads: &[Tensor2]) -> Result<Vec<GradientSampler>> {
    let mode = if coeffs.is_time_independent() {
        TimeMode::Steady
    } else {
        cfg.law.time_mode
    };
    let (base, _) = CellProblemSpec::from_almost_periodic(Tensor2::ZERO, coeffs, cfg.law.q, cfg.corrector_resolution)?;
    let base = base.with_time_mode(mode).with_settings(cfg.law.solver);
    grads
        .par_iter()
        .map(|xi| Ok(solve_corrector(&base.clone().with_xi(*xi))?.gradient_sampler()))
        .collect()
}

struct MacroRun {
    traj: Trajectory,
    samplers: Option<Vec<GradientSampler>>,
    summary: MacroSummary,
}

fn run_macro(cfg: &StudyConfig, coeffs: &CoefficientSet) -> Result<MacroRun> {
    let start = Instant::now();
    let (law, perturbation) = EffectiveLaw::build(coeffs, &cfg.law)?;
    let law = Arc::new(law);
    let grid = cfg.macro_grid()?;
    let limit = homogenized::max_stable_dt(&law, coeffs.rho_mean(), &grid, cfg.gradient_cap, cfg.cfl_safety);
    let (dt, stride) = aligned_step(cfg.snapshot_interval, limit);
    let problem = HomogenizedProblem::new(
        coeffs,
        law.clone(),
        grid,
        cfg.t_end,
        dt,
        cfg.initial.build(&grid),
        cfg.gradient_cap,
        cfg.cfl_safety,
    )?
    .with_snapshot_stride(stride);
    let traj = solve_homogenized(&problem)?;
    let grads = cell_gradients(traj.last(), &grid)?;
    let samplers = if cfg.wants(Norm::Corrector) {
        Some(cell_correctors(cfg, coeffs, &grads)?)
    } else {
        None
    };
    log::info!(
        "homogenized run on {}² done: {} law nodes, {:.1} s",
        grid.n(),
        law.node_count(),
        start.elapsed().as_secs_f64()
    );
    let summary = MacroSummary {
        resolution: grid.n(),
        steps: traj.diagnostics.len().saturating_sub(1),
        energy: energy_report(&traj),
        law_nodes: law.node_count(),
        perturbation,
        runtime_s: start.elapsed().as_secs_f64(),
    };
    Ok(MacroRun {
        traj,
        samplers,
        summary,
    })
}

/// Integrates the ε-problem with snapshots aligned to the study interval.
pub fn run_micro(cfg: &StudyConfig, coeffs: &CoefficientSet, eps: f64) -> Result<Trajectory> {
    let grid = cfg.micro_grid(eps)?;
    let limit = micro::max_stable_dt(coeffs, &grid, cfg.gradient_cap, cfg.cfl_safety);
    let (dt, stride) = aligned_step(cfg.snapshot_interval, limit);
    let problem = MicroProblem::new(
        coeffs.clone(),
        eps,
        grid,
        cfg.t_end,
        dt,
        cfg.initial.build(&grid),
        cfg.gradient_cap,
        cfg.cfl_safety,
    )?
    .with_snapshot_stride(stride);
    micro::solve(&problem)
}

fn evaluate(cfg: &StudyConfig, coeffs: &CoefficientSet, eps: f64, m: &MacroRun) -> Result<(ErrorRow, Vec<SigmaRow>)> {
    let start = Instant::now();
    let traj = run_micro(cfg, coeffs, eps)?;
    let l2_error = match cfg.wants(Norm::L2) {
        true => Some(space_time_l2_error(&traj, &m.traj)?),
        false => None,
    };
    let (grad_error, corrector_error) = if cfg.wants(Norm::Gradient) || cfg.wants(Norm::Corrector) {
        let (g, c) = gradient_errors(
            traj.last(),
            &traj.grid,
            eps,
            m.traj.last(),
            &m.traj.grid,
            m.samplers.as_deref(),
        );
        (cfg.wants(Norm::Gradient).then_some(g), c)
    } else {
        (None, None)
    };
    let pressure_weak_error = cfg
        .wants(Norm::PressureWeak)
        .then(|| pressure_weak_error(&traj, &m.traj, &cfg.pressure_test));
    let mut sigma = Vec::with_capacity(cfg.sigma_tests.len());
    for t in &cfg.sigma_tests {
        let out = sigma_test(&traj, eps, &m.traj, t)?;
        sigma.push(SigmaRow {
            test: t.name.clone(),
            eps,
            lhs: out.lhs,
            rhs: out.rhs,
            gap: out.gap,
        });
    }
    let runtime_s = start.elapsed().as_secs_f64();
    log::info!("eps = {eps}: {}² grid, {runtime_s:.1} s", traj.grid.n());
    Ok((
        ErrorRow {
            eps,
            resolution: traj.grid.n(),
            steps: traj.diagnostics.len().saturating_sub(1),
            l2_error,
            grad_error,
            corrector_error,
            pressure_weak_error,
            energy: Some(energy_report(&traj)),
            status: "ok".into(),
            runtime_s,
        },
        sigma,
    ))
}

/// Runs the homogenized problem once and the ε-problem for every ε in
/// parallel, then compares them. A failing ε is recorded in its row; the
/// study fails only when every ε fails.
pub fn run_convergence_study(cfg: &StudyConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let coeffs = cfg.scenario.coefficients()?;
    let m = run_macro(cfg, &coeffs)?;
    let results: Vec<_> = cfg
        .eps_list
        .par_iter()
        .map(|&eps| (eps, evaluate(cfg, &coeffs, eps, &m)))
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut sigma = Vec::new();
    let mut failures = Vec::new();
    for (eps, r) in results {
        match r {
            Ok((row, s)) => {
                rows.push(row);
                sigma.extend(s);
            }
            Err(e) => {
                log::warn!("eps = {eps} failed: {e}");
                failures.push(format!("eps = {eps}: {e}"));
                rows.push(ErrorRow {
                    eps,
                    resolution: cfg.grid.resolution(eps).unwrap_or(0),
                    steps: 0,
                    l2_error: None,
                    grad_error: None,
                    corrector_error: None,
                    pressure_weak_error: None,
                    energy: None,
                    status: format!("failed: {e}"),
                    runtime_s: 0.0,
                });
            }
        }
    }
    if failures.len() == rows.len() {
        return Err(Error::StudyFailed(failures.join("; ")));
    }
    let errors: Vec<f64> = rows.iter().filter_map(|r| r.l2_error).collect();
    let verdict = Verdict::from_errors(&errors, cfg.ratio_threshold);
    Ok(ConvergenceReport {
        schema: REPORT_SCHEMA.into(),
        name: cfg.name.clone(),
        scenario: cfg.scenario.name().into(),
        seed: cfg.seed,
        rows,
        macro_run: m.summary,
        sigma,
        verdict,
    })
}
