use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::micro::EnergyReport;

pub const REPORT_SCHEMA: &str = "ladyreport/1";

/// One ε of the sweep. Metrics are absent when the run failed or the norm
/// was not requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub eps: f64,
    pub resolution: usize,
    pub steps: usize,
    pub l2_error: Option<f64>,
    pub grad_error: Option<f64>,
    pub corrector_error: Option<f64>,
    pub pressure_weak_error: Option<f64>,
    pub energy: Option<EnergyReport>,
    /// `"ok"` or the failure message.
    pub status: String,
    /// Wall-clock seconds; kept out of the written files.
    #[serde(skip)]
    pub runtime_s: f64,
}

impl ErrorRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroSummary {
    pub resolution: usize,
    pub steps: usize,
    pub energy: EnergyReport,
    pub law_nodes: usize,
    /// Largest frequency shift of the periodic approximation behind the law.
    pub perturbation: f64,
    #[serde(skip)]
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaRow {
    pub test: String,
    pub eps: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub strictly_decreasing: bool,
    /// `err(ε_last) / err(ε_first)` over the successful runs.
    pub ratio: Option<f64>,
    pub threshold: f64,
    pub passed: bool,
}

impl Verdict {
    /// Needs at least two errors, ordered by decreasing ε.
    pub fn from_errors(errors: &[f64], threshold: f64) -> Self {
        if errors.len() < 2 {
            return Verdict {
                strictly_decreasing: false,
                ratio: None,
                threshold,
                passed: false,
            };
        }
        let strictly_decreasing = errors.windows(2).all(|w| w[1] < w[0]);
        let ratio = (errors[0] > 0.0).then(|| errors[errors.len() - 1] / errors[0]);
        Verdict {
            strictly_decreasing,
            ratio,
            threshold,
            passed: strictly_decreasing && ratio.is_some_and(|r| r <= threshold),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub schema: String,
    pub name: String,
    pub scenario: String,
    pub seed: u64,
    pub rows: Vec<ErrorRow>,
    #[serde(rename = "macro")]
    pub macro_run: MacroSummary,
    pub sigma: Vec<SigmaRow>,
    pub verdict: Verdict,
}

impl ConvergenceReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: ConvergenceReport = serde_json::from_str(text)?;
        if r.schema != REPORT_SCHEMA {
            return Err(Error::Format(format!("expected schema {REPORT_SCHEMA}, found '{}'", r.schema)));
        }
        Ok(r)
    }

    /// Gaps of one Σ-test in row order.
    pub fn sigma_gaps(&self, test: &str) -> Vec<(f64, f64)> {
        self.sigma.iter().filter(|r| r.test == test).map(|r| (r.eps, r.gap)).collect()
    }

    pub fn errors_csv(&self) -> String {
        let mut out = String::from(
            "eps,resolution,steps,l2_error,grad_error,corrector_error,pressure_weak_error,\
             sup_energy,h1_integral,wp_integral,sup_pressure,status\n",
        );
        for r in &self.rows {
            let e = r.energy;
            let fields = [
                num(Some(r.eps)),
                r.resolution.to_string(),
                r.steps.to_string(),
                num(r.l2_error),
                num(r.grad_error),
                num(r.corrector_error),
                num(r.pressure_weak_error),
                num(e.map(|e| e.sup_energy)),
                num(e.map(|e| e.h1_integral)),
                num(e.map(|e| e.wp_integral)),
                num(e.map(|e| e.sup_pressure)),
                csv_text(&r.status),
            ];
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn sigma_csv(&self) -> String {
        let mut out = String::from("test,eps,lhs,rhs,gap\n");
        for r in &self.sigma {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                csv_text(&r.test),
                num(Some(r.eps)),
                num(Some(r.lhs)),
                num(Some(r.rhs)),
                num(Some(r.gap))
            );
        }
        out
    }

    /// Whitespace-separated columns for plotting tools; missing values are `nan`.
    pub fn plotdata(&self) -> String {
        let mut out = String::from("# eps l2_error grad_error corrector_error pressure_weak_error\n");
        for r in &self.rows {
            let f = |x: Option<f64>| x.map_or("nan".to_string(), |v| format!("{v:.12e}"));
            let _ = writeln!(
                out,
                "{:.12e} {} {} {} {}",
                r.eps,
                f(r.l2_error),
                f(r.grad_error),
                f(r.corrector_error),
                f(r.pressure_weak_error)
            );
        }
        out
    }
}

fn num(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| format!("{v:.12e}"))
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Plotdata,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Plotdata];
}

/// Writes the report into `dir` and returns the files written. Identical
/// reports give byte-identical files.
pub fn emit_report(report: &ConvergenceReport, dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        files.push(path);
        Ok(())
    };
    for f in formats {
        match f {
            ReportFormat::Csv => {
                put("errors.csv", report.errors_csv())?;
                put("sigma.csv", report.sigma_csv())?;
            }
            ReportFormat::Json => put("report.json", report.to_json()?)?,
            ReportFormat::Plotdata => put("errors.dat", report.plotdata())?,
        }
    }
    Ok(files)
}
