use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ap_field::TrigPolynomial;
use crate::cell::LawSettings;
use crate::error::{Error, Result};
use crate::grid::{Boundary, MacGrid};
use crate::micro::InitialCondition;

use super::scenarios::ScenarioSpec;

pub const STUDY_SCHEMA: &str = "ladystudy/1";

fn d_name() -> String {
    "study".into()
}
fn d_cells_per_eps() -> f64 {
    8.0
}
fn d_max_resolution() -> usize {
    256
}
fn d_macro_resolution() -> usize {
    32
}
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
fn d_corrector_resolution() -> usize {
    16
}
fn d_threshold() -> f64 {
    0.6
}
fn d_norms() -> Vec<Norm> {
    vec![Norm::L2, Norm::Gradient, Norm::Corrector, Norm::PressureWeak]
}
fn d_pressure_test() -> TrigPolynomial {
    let k = 2.0 * PI;
    TrigPolynomial::cosine(&[k, k, 0.0], 0.5).add(&TrigPolynomial::cosine(&[k, -k, 0.0], 0.5)).expect("same dim")
}

/// Resolution rule for the ε-scale runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridRule {
    pub cells_per_eps: f64,
    pub max_resolution: usize,
    pub boundary: Boundary,
}

impl Default for GridRule {
    fn default() -> Self {
        GridRule {
            cells_per_eps: d_cells_per_eps(),
            max_resolution: d_max_resolution(),
            boundary: Boundary::Periodic,
        }
    }
}

impl GridRule {
    /// `⌈cells_per_eps / ε⌉` cells per side.
    pub fn resolution(&self, eps: f64) -> Result<usize> {
        let n = (self.cells_per_eps / eps - 1e-9).ceil() as usize;
        if n > self.max_resolution {
            return Err(Error::arg(format!(
                "eps = {eps} needs {n} cells per side, above max_resolution {}",
                self.max_resolution
            )));
        }
        Ok(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    /// `‖u_ε − u₀‖_{L²(Q_T)}` on the coarser grid of each pair.
    L2,
    /// `‖∇u_ε − ∇u₀‖_{L²}` at the final time.
    Gradient,
    /// `‖∇u_ε − ∇u₀ − ∇_yπ(∇u₀)(x/ε)‖_{L²}` at the final time.
    Corrector,
    /// `|∫∫ (q_ε − q₀) ψ|` for the configured pressure test function.
    PressureWeak,
}

/// Weak test `∫∫ u_ε·f(x,t,x/ε,t/ε²) → ∫∫ u₀·𝔐_{y,τ}f` for
/// `f = envelope(x,t)·oscillation(y,τ)·direction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaTestFn {
    pub name: String,
    /// Polynomial in `(x₁, x₂, t)`.
    pub envelope: TrigPolynomial,
    /// Polynomial in `(y₁, y₂, τ)`.
    pub oscillation: TrigPolynomial,
    pub direction: [f64; 2],
}

impl SigmaTestFn {
    /// `sin 2πx₁ sin 2πx₂ · sin 2πy₁ · e₂`, which sees the shear corrector of
    /// a laminate in `y₁`.
    pub fn laminate_shear() -> Self {
        let k = 2.0 * PI;
        let envelope = TrigPolynomial::cosine(&[k, -k, 0.0], 0.5)
            .add(&TrigPolynomial::cosine(&[k, k, 0.0], -0.5))
            .expect("same dim");
        SigmaTestFn {
            name: "shear".into(),
            envelope,
            oscillation: TrigPolynomial::sine(&[k, 0.0, 0.0], 1.0),
            direction: [0.0, 1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.envelope.dim() != 3 || self.oscillation.dim() != 3 {
            return Err(Error::arg(format!(
                "sigma test '{}': envelope and oscillation must be polynomials in three variables",
                self.name
            )));
        }
        if !self.direction.iter().all(|d| d.is_finite()) {
            return Err(Error::arg(format!("sigma test '{}': direction is not finite", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub schema: String,
    #[serde(default = "d_name")]
    pub name: String,
    pub scenario: ScenarioSpec,
    /// Strictly decreasing.
    pub eps_list: Vec<f64>,
    #[serde(default)]
    pub grid: GridRule,
    #[serde(default = "d_macro_resolution")]
    pub macro_resolution: usize,
    pub t_end: f64,
    /// Spacing of stored snapshots; must divide `t_end`.
    pub snapshot_interval: f64,
    #[serde(default = "d_cfl")]
    pub cfl_safety: f64,
    #[serde(default = "d_cap")]
    pub gradient_cap: f64,
    #[serde(default = "d_initial")]
    pub initial: InitialCondition,
    #[serde(default)]
    pub law: LawSettings,
    /// Torus resolution of the correctors in the corrector norm.
    #[serde(default = "d_corrector_resolution")]
    pub corrector_resolution: usize,
    #[serde(default)]
    pub sigma_tests: Vec<SigmaTestFn>,
    /// Polynomial in `(x₁, x₂, t)`.
    #[serde(default = "d_pressure_test")]
    pub pressure_test: TrigPolynomial,
    #[serde(default = "d_norms")]
    pub norms: Vec<Norm>,
    /// Largest admissible `err(ε_last)/err(ε_first)`.
    #[serde(default = "d_threshold")]
    pub ratio_threshold: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl StudyConfig {
    /// Laminate sweep over `ε ∈ {1/4, 1/8, 1/16}` with the shear Σ-test.
    pub fn laminate_default() -> Self {
        StudyConfig {
            schema: STUDY_SCHEMA.into(),
            name: "laminate".into(),
            scenario: ScenarioSpec::laminate(),
            eps_list: vec![0.25, 0.125, 0.0625],
            grid: GridRule::default(),
            macro_resolution: d_macro_resolution(),
            t_end: 0.25,
            snapshot_interval: 0.025,
            cfl_safety: d_cfl(),
            gradient_cap: d_cap(),
            initial: d_initial(),
            law: LawSettings::default(),
            corrector_resolution: d_corrector_resolution(),
            sigma_tests: vec![SigmaTestFn::laminate_shear()],
            pressure_test: d_pressure_test(),
            norms: d_norms(),
            ratio_threshold: d_threshold(),
            output_dir: None,
            seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: StudyConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn wants(&self, norm: Norm) -> bool {
        self.norms.contains(&norm)
    }

    pub fn macro_grid(&self) -> Result<MacGrid> {
        MacGrid::new(self.macro_resolution, self.grid.boundary)
    }

    pub fn micro_grid(&self, eps: f64) -> Result<MacGrid> {
        MacGrid::new(self.grid.resolution(eps)?, self.grid.boundary)
    }

    /// Number of snapshot intervals in `[0, t_end]`.
    pub fn snapshot_count(&self) -> usize {
        (self.t_end / self.snapshot_interval).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != STUDY_SCHEMA {
            return Err(Error::Format(format!(
                "expected schema {STUDY_SCHEMA}, found '{}'",
                self.schema
            )));
        }
        if self.eps_list.is_empty() {
            return Err(Error::arg("eps_list is empty"));
        }
        if self.eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::arg("every eps must be positive"));
        }
        if self.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::arg("eps_list must be strictly decreasing"));
        }
        if !(self.t_end > 0.0) || !(self.snapshot_interval > 0.0) {
            return Err(Error::arg("t_end and snapshot_interval must be positive"));
        }
        let r = self.t_end / self.snapshot_interval;
        if (r - r.round()).abs() > 1e-9 * r.max(1.0) {
            return Err(Error::arg("snapshot_interval must divide t_end"));
        }
        if !(self.cfl_safety > 0.0) || !(self.gradient_cap > 0.0) {
            return Err(Error::arg("cfl_safety and gradient_cap must be positive"));
        }
        if !(self.grid.cells_per_eps > 0.0) {
            return Err(Error::arg("cells_per_eps must be positive"));
        }
        if !(self.ratio_threshold > 0.0) {
            return Err(Error::arg("ratio_threshold must be positive"));
        }
        if self.pressure_test.dim() != 3 {
            return Err(Error::arg("pressure_test must be a polynomial in (x1, x2, t)"));
        }
        let coarse = self.macro_grid()?.n();
        for &eps in &self.eps_list {
            let n = self.micro_grid(eps)?.n();
            let (a, b) = (n.max(coarse), n.min(coarse));
            if a % b != 0 {
                return Err(Error::arg(format!(
                    "micro resolution {n} for eps = {eps} and macro resolution {coarse} are not nested"
                )));
            }
        }
        for t in &self.sigma_tests {
            t.validate()?;
        }
        self.scenario.coefficients()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_roundtrips_and_validates() {
        let c = StudyConfig::laminate_default();
        c.validate().unwrap();
        let back = StudyConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.snapshot_count(), 10);
        let ns: Vec<usize> = c.eps_list.iter().map(|&e| c.grid.resolution(e).unwrap()).collect();
        assert_eq!(ns, vec![32, 64, 128]);
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let c = StudyConfig::from_json(
            r#"{"schema":"ladystudy/1","scenario":{"kind":"laminate"},
                "eps_list":[0.25,0.125],"t_end":0.1,"snapshot_interval":0.05}"#,
        )
        .unwrap();
        assert_eq!(c.macro_resolution, 32);
        assert_eq!(c.norms.len(), 4);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = StudyConfig::laminate_default();
        c.eps_list = vec![0.125, 0.25];
        assert!(c.validate().is_err());
        let mut c = StudyConfig::laminate_default();
        c.snapshot_interval = 0.03;
        assert!(c.validate().is_err());
        let mut c = StudyConfig::laminate_default();
        c.schema = "ladystudy/0".into();
        assert!(c.validate().is_err());
        let mut c = StudyConfig::laminate_default();
        c.macro_resolution = 24;
        assert!(c.validate().is_err());
        let mut c = StudyConfig::laminate_default();
        c.grid.max_resolution = 64;
        assert!(c.validate().is_err());
    }

    #[test]
    fn shear_envelope_is_sine_product() {
        let t = SigmaTestFn::laminate_shear();
        for &(x, y) in &[(0.1, 0.3), (0.7, 0.45), (0.25, 0.25)] {
            let e = t.envelope.eval_real(&[x, y, 0.0]);
            assert!((e - (2.0 * PI * x).sin() * (2.0 * PI * y).sin()).abs() < 1e-14);
        }
        assert_eq!(t.oscillation.mean_value(), 0.0);
    }
}
