//! Single-run configurations behind the `micro`, `cell` and `macro` verbs.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cell::{
    solve_corrector, verify_uniqueness, CellProblemSpec, EffectiveLaw, LawSettings, MonotonicityReport, TimeMode,
    UniquenessReport,
};
use crate::error::{Error, Result};
use crate::grid::{Boundary, MacGrid};
use crate::homogenized::{self, solve_homogenized, HomogenizedProblem};
use crate::micro::{self, energy_report, write_trajectory, EnergyReport, InitialCondition, MicroProblem, Trajectory};
use crate::tensor::Tensor2;

use super::scenarios::ScenarioSpec;
use super::study::aligned_step;

pub const MICRO_SCHEMA: &str = "ladymicro/1";
pub const CELL_SCHEMA: &str = "ladycell/1";
pub const MACRO_SCHEMA: &str = "ladymacro/1";

fn d_cfl() -> f64 {
    0.4
}
fn d_cap() -> f64 {
    2.5
}
fn d_initial() -> InitialCondition {
    InitialCondition::TaylorGreen {
        amplitude: 0.1,
        mode: 1,
    }
}
fn d_cell_resolution() -> usize {
    64
}
fn d_trials() -> usize {
    3
}
fn d_pairs() -> usize {
    10
}

fn check_schema(found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::Format(format!("expected schema {expected}, found '{found}'")));
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Time level at which the dissipation of the discrete energy law is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DissipationAt {
    /// `∇u_n`; exceeded by `O(dt²)` when the viscosity bounds are attained.
    Start,
    /// `∇u_{n+1}`
    End,
}

/// Largest relative excess of `|u_{n+1}|²_ρ + 2dt(ν₀‖∇u‖₂² + ν₁‖∇u‖_p^p)`
/// over `|u_n|²_ρ`; non-positive when the discrete energy law holds.
pub fn energy_law_excess(traj: &Trajectory, nu0: f64, nu1: f64, level: DissipationAt) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for w in traj.diagnostics.windows(2) {
        let dt = w[1].t - w[0].t;
        let d = match level {
            DissipationAt::Start => &w[0],
            DissipationAt::End => &w[1],
        };
        let lhs = w[1].energy_rho + 2.0 * dt * (nu0 * d.h1 + nu1 * d.wp);
        let scale = w[0].energy_rho.max(f64::MIN_POSITIVE);
        worst = worst.max((lhs - w[0].energy_rho) / scale);
    }
    worst
}

/// One oscillating run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroRunConfig {
    pub schema: String,
    pub scenario: ScenarioSpec,
    pub eps: f64,
    pub resolution: usize,
    #[serde(default)]
    pub boundary: Boundary,
    pub t_end: f64,
    pub snapshot_interval: f64,
    #[serde(default = "d_cfl")]
    pub cfl_safety: f64,
    #[serde(default = "d_cap")]
    pub gradient_cap: f64,
    #[serde(default = "d_initial")]
    pub initial: InitialCondition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroSummary {
    pub eps: f64,
    pub resolution: usize,
    pub steps: usize,
    pub dt: f64,
    pub energy: EnergyReport,
    /// Present for unforced runs; dissipation at the end of each step.
    pub energy_law_excess: Option<f64>,
}

impl MicroRunConfig {
    pub fn validate(&self) -> Result<()> {
        check_schema(&self.schema, MICRO_SCHEMA)?;
        if !(self.snapshot_interval > 0.0) {
            return Err(Error::arg("snapshot_interval must be positive"));
        }
        self.problem().map(|_| ())
    }

    pub fn problem(&self) -> Result<MicroProblem> {
        let coeffs = self.scenario.coefficients()?;
        let grid = MacGrid::new(self.resolution, self.boundary)?;
        let limit = micro::max_stable_dt(&coeffs, &grid, self.gradient_cap, self.cfl_safety);
        let (dt, stride) = aligned_step(self.snapshot_interval, limit);
        Ok(MicroProblem::new(
            coeffs,
            self.eps,
            grid,
            self.t_end,
            dt,
            self.initial.build(&grid),
            self.gradient_cap,
            self.cfl_safety,
        )?
        .with_snapshot_stride(stride))
    }

    /// Writes snapshots, `diagnostics.csv` and `summary.json` into `out`.
    pub fn run(&self, out: &Path) -> Result<MicroSummary> {
        self.validate()?;
        let problem = self.problem()?;
        let traj = micro::solve(&problem)?;
        write_trajectory(&traj, out)?;
        let steps = traj.diagnostics.len().saturating_sub(1);
        let b = problem.coeffs.bounds();
        let summary = MicroSummary {
            eps: self.eps,
            resolution: self.resolution,
            steps,
            dt: micro::step_plan(self.t_end, problem.dt).1,
            energy: energy_report(&traj),
            energy_law_excess: problem
                .coeffs
                .forcing()
                .is_zero()
                .then(|| energy_law_excess(&traj, b.nu0, b.nu1, DissipationAt::End)),
        };
        write_json(&out.join("summary.json"), &summary)?;
        Ok(summary)
    }
}

/// Corrector solves at listed gradients, optionally exported as a law table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRunConfig {
    pub schema: String,
    pub scenario: ScenarioSpec,
    pub xi: Vec<Tensor2>,
    #[serde(default = "d_cell_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub law: LawSettings,
    #[serde(default = "d_trials")]
    pub uniqueness_trials: usize,
    #[serde(default = "d_pairs")]
    pub monotonicity_pairs: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub xi: Tensor2,
    pub m: Tensor2,
    #[serde(rename = "M")]
    pub big_m: Tensor2,
    pub residual: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub uniqueness: Option<UniquenessReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub schema: String,
    pub resolution: usize,
    pub perturbation: f64,
    pub rows: Vec<CellRow>,
    pub monotonicity: Option<MonotonicityReport>,
}

impl CellSummary {
    /// False when a uniqueness or monotonicity check failed.
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.uniqueness.as_ref().is_none_or(|u| u.passed))
            && self.monotonicity.as_ref().is_none_or(|m| m.passed)
    }
}

impl CellRunConfig {
    pub fn validate(&self) -> Result<()> {
        check_schema(&self.schema, CELL_SCHEMA)?;
        if self.xi.is_empty() {
            return Err(Error::arg("xi list is empty"));
        }
        self.base_spec().map(|_| ())
    }

    fn base_spec(&self) -> Result<(CellProblemSpec, f64)> {
        let coeffs = self.scenario.coefficients()?;
        let mode = if coeffs.is_time_independent() {
            TimeMode::Steady
        } else {
            self.law.time_mode
        };
        let (spec, delta) = CellProblemSpec::from_almost_periodic(Tensor2::ZERO, &coeffs, self.law.q, self.resolution)?;
        Ok((spec.with_time_mode(mode).with_settings(self.law.solver), delta))
    }

    /// Writes `cell.json` and, for oscillating coefficients, the law table
    /// prefetched at the listed gradients as `law.json`.
    pub fn run(&self, out: &Path) -> Result<CellSummary> {
        self.validate()?;
        create(out)?;
        let (base, perturbation) = self.base_spec()?;
        let mut rows = Vec::with_capacity(self.xi.len());
        for (k, xi) in self.xi.iter().enumerate() {
            let spec = base.clone().with_xi(*xi);
            let sol = solve_corrector(&spec)?;
            let uniqueness = if self.uniqueness_trials >= 2 {
                Some(verify_uniqueness(&spec, self.uniqueness_trials, self.seed.wrapping_add(k as u64))?)
            } else {
                None
            };
            rows.push(CellRow {
                xi: *xi,
                m: sol.m_xi,
                big_m: sol.big_m_xi,
                residual: sol.residual,
                iterations: sol.iterations,
                grad_norm: sol.grad_norm(),
                uniqueness,
            });
        }
        let coeffs = self.scenario.coefficients()?;
        let (law, _) = EffectiveLaw::build(&coeffs, &self.law)?;
        law.prefetch(&self.xi)?;
        let monotonicity = match law.monotonicity_check(self.monotonicity_pairs, 1e-6, self.seed) {
            Ok(r) => Some(r),
            Err(Error::Argument(_)) => None,
            Err(e) => return Err(e),
        };
        fs::write(out.join("law.json"), law.to_json()?).map_err(|e| Error::io(out.join("law.json"), e))?;
        let summary = CellSummary {
            schema: CELL_SCHEMA.into(),
            resolution: self.resolution,
            perturbation,
            rows,
            monotonicity,
        };
        write_json(&out.join("cell.json"), &summary)?;
        Ok(summary)
    }
}

/// One homogenized run, optionally seeded with a stored law table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroRunConfig {
    pub schema: String,
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub law: LawSettings,
    /// Path to a `ladyfx/1` table, relative to the working directory.
    #[serde(default)]
    pub law_file: Option<std::path::PathBuf>,
    pub resolution: usize,
    #[serde(default)]
    pub boundary: Boundary,
    pub t_end: f64,
    pub snapshot_interval: f64,
    #[serde(default = "d_cfl")]
    pub cfl_safety: f64,
    #[serde(default = "d_cap")]
    pub gradient_cap: f64,
    #[serde(default = "d_initial")]
    pub initial: InitialCondition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroRunSummary {
    pub resolution: usize,
    pub steps: usize,
    pub dt: f64,
    pub energy: EnergyReport,
    pub law_nodes: usize,
    pub law_solves: usize,
    pub perturbation: f64,
}

impl MacroRunConfig {
    pub fn validate(&self) -> Result<()> {
        check_schema(&self.schema, MACRO_SCHEMA)?;
        if !(self.snapshot_interval > 0.0 && self.t_end >= 0.0) {
            return Err(Error::arg("snapshot_interval must be positive and t_end non-negative"));
        }
        MacGrid::new(self.resolution, self.boundary)?;
        self.scenario.coefficients().map(|_| ())
    }

    fn law(&self) -> Result<(EffectiveLaw, f64)> {
        let coeffs = self.scenario.coefficients()?;
        match &self.law_file {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let (_, delta) = crate::cell::spatial_periodic_approximation(&coeffs, self.law.q)?;
                Ok((EffectiveLaw::from_json(&text, Some(&coeffs), Some(&self.law))?, delta))
            }
            None => EffectiveLaw::build(&coeffs, &self.law),
        }
    }

    /// Writes snapshots, `diagnostics.csv`, `summary.json` and the law table
    /// grown during the run as `law.json`.
    pub fn run(&self, out: &Path) -> Result<MacroRunSummary> {
        self.validate()?;
        let coeffs = self.scenario.coefficients()?;
        let (law, perturbation) = self.law()?;
        let law = Arc::new(law);
        let grid = MacGrid::new(self.resolution, self.boundary)?;
        let limit = homogenized::max_stable_dt(&law, coeffs.rho_mean(), &grid, self.gradient_cap, self.cfl_safety);
        let (dt, stride) = aligned_step(self.snapshot_interval, limit);
        let problem = HomogenizedProblem::new(
            &coeffs,
            law.clone(),
            grid,
            self.t_end,
            dt,
            self.initial.build(&grid),
            self.gradient_cap,
            self.cfl_safety,
        )?
        .with_snapshot_stride(stride);
        let traj = solve_homogenized(&problem)?;
        write_trajectory(&traj, out)?;
        fs::write(out.join("law.json"), law.to_json()?).map_err(|e| Error::io(out.join("law.json"), e))?;
        let summary = MacroRunSummary {
            resolution: self.resolution,
            steps: traj.diagnostics.len().saturating_sub(1),
            dt: micro::step_plan(self.t_end, dt).1,
            energy: energy_report(&traj),
            law_nodes: law.node_count(),
            law_solves: law.solve_count(),
            perturbation,
        };
        write_json(&out.join("summary.json"), &summary)?;
        Ok(summary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant() -> ScenarioSpec {
        ScenarioSpec::Constant {
            nu0: 0.05,
            nu1: 0.02,
            rho: 1.0,
            p: 3.0,
        }
    }

    #[test]
    fn micro_run_writes_outputs_and_satisfies_energy_law() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = MicroRunConfig {
            schema: MICRO_SCHEMA.into(),
            scenario: ScenarioSpec::laminate(),
            eps: 0.25,
            resolution: 32,
            boundary: Boundary::Periodic,
            t_end: 0.02,
            snapshot_interval: 0.01,
            cfl_safety: 0.4,
            gradient_cap: 2.5,
            initial: d_initial(),
        };
        let s = cfg.run(dir.path()).unwrap();
        assert!(s.energy_law_excess.unwrap() <= 1e-8, "{s:?}");
        assert!(dir.path().join("diagnostics.csv").exists());
        assert!(dir.path().join("snapshot_00002.bin").exists());
        let mut bad = cfg.clone();
        bad.schema = "ladymicro/0".into();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn cell_run_on_constant_coefficients_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg: CellRunConfig = serde_json::from_str(
            r#"{"schema":"ladycell/1","scenario":{"kind":"constant","nu0":0.05,"nu1":0.02,"rho":1.0,"p":3.0},
                "xi":[[[0.0,1.0],[0.5,0.0]],[[0.2,0.0],[0.0,-0.2]]],"resolution":16}"#,
        )
        .unwrap();
        let s = cfg.run(dir.path()).unwrap();
        assert!(s.passed());
        for r in &s.rows {
            assert!(r.grad_norm < 1e-12);
            assert!((r.m - r.xi * 0.05).max_abs() < 1e-14);
        }
        let law = fs::read_to_string(dir.path().join("law.json")).unwrap();
        assert!(law.contains("ladyfx/1"));
    }

    #[test]
    fn macro_run_reuses_a_stored_table() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = MacroRunConfig {
            schema: MACRO_SCHEMA.into(),
            scenario: ScenarioSpec::laminate(),
            law: LawSettings {
                step: 0.1,
                ..LawSettings::default()
            },
            law_file: None,
            resolution: 16,
            boundary: Boundary::Periodic,
            t_end: 0.02,
            snapshot_interval: 0.01,
            cfl_safety: 0.4,
            gradient_cap: 2.5,
            initial: d_initial(),
        };
        let first = cfg.run(&dir.path().join("a")).unwrap();
        assert!(first.law_solves > 0);
        let again = MacroRunConfig {
            law_file: Some(dir.path().join("a/law.json")),
            ..cfg.clone()
        };
        let second = again.run(&dir.path().join("b")).unwrap();
        assert_eq!(second.law_solves, 0);
        assert_eq!(first.energy, second.energy);
        let c = MacroRunConfig {
            scenario: constant(),
            ..cfg
        };
        assert_eq!(c.run(&dir.path().join("c")).unwrap().law_nodes, 0);
    }
}
