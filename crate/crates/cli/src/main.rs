use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hom_lady::ap_field::CoefficientSet;
use hom_lady::cell::{EffectiveLaw, LAW_SCHEMA};
use hom_lady::harness::{
    emit_report, run_convergence_study, CellRunConfig, ConvergenceReport, MacroRunConfig, MicroRunConfig, ReportFormat,
    StudyConfig, CELL_SCHEMA, MACRO_SCHEMA, MICRO_SCHEMA, REPORT_SCHEMA, STUDY_SCHEMA,
};
use hom_lady::Error;

/// Homogenization experiments for generalized Ladyzhenskaya flows.
#[derive(Parser)]
#[command(name = "hom-lady", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(clap::Args)]
struct Io {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Verb {
    /// Check any configuration, coefficient, law or report file.
    Validate(Io),
    /// Run the oscillating problem for one ε.
    Micro(Io),
    /// Solve cell problems and export the resulting law table.
    Cell(Io),
    /// Run the homogenized problem.
    Macro(Io),
    /// Run an ε-sweep and write the convergence report.
    Study(Io),
    /// Run an ε-sweep and report only the Σ-test table.
    SigmaTest(Io),
}

enum Outcome {
    Ok,
    Violation(String),
}

const EXIT_ERROR: u8 = 1;
const EXIT_VIOLATION: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_ERROR);
    }
    match run(cli.verb) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Violation(msg)) => {
            eprintln!("property violation: {msg}");
            ExitCode::from(EXIT_VIOLATION)
        }
        Err(e) if e.is_property_violation() => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_VIOLATION)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

/// `HOM_LADY_THREADS` caps the worker pool.
fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("HOM_LADY_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("HOM_LADY_THREADS must be a positive integer, got '{v}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    Ok(serde_json::from_str(&read(path)?)?)
}

fn run(verb: Verb) -> Result<Outcome, Error> {
    match verb {
        Verb::Validate(io) => validate(&io.config),
        Verb::Micro(io) => {
            let cfg: MicroRunConfig = parse(&io.config)?;
            let s = cfg.run(&io.out)?;
            println!(
                "eps = {}: {} steps on {}², sup energy {:.6e}",
                s.eps, s.steps, s.resolution, s.energy.sup_energy
            );
            match s.energy_law_excess {
                Some(x) if x > 1e-8 => Ok(Outcome::Violation(format!("discrete energy law exceeded by {x:e}"))),
                _ => Ok(Outcome::Ok),
            }
        }
        Verb::Cell(io) => {
            let cfg: CellRunConfig = parse(&io.config)?;
            let s = cfg.run(&io.out)?;
            for r in &s.rows {
                println!("xi = {:?}: residual {:.3e}, |grad pi| {:.6e}", r.xi.to_array(), r.residual, r.grad_norm);
            }
            if s.passed() {
                Ok(Outcome::Ok)
            } else {
                Ok(Outcome::Violation("uniqueness or monotonicity check failed".into()))
            }
        }
        Verb::Macro(io) => {
            let cfg: MacroRunConfig = parse(&io.config)?;
            let s = cfg.run(&io.out)?;
            println!(
                "{} steps on {}², {} law nodes ({} solves)",
                s.steps, s.resolution, s.law_nodes, s.law_solves
            );
            Ok(Outcome::Ok)
        }
        Verb::Study(io) => {
            let cfg = StudyConfig::load(&io.config)?;
            let report = run_convergence_study(&cfg)?;
            let out = cfg.output_dir.clone().unwrap_or(io.out);
            emit_report(&report, &out, &ReportFormat::ALL)?;
            print_rows(&report);
            if report.verdict.passed {
                Ok(Outcome::Ok)
            } else {
                Ok(Outcome::Violation(format!(
                    "errors are not decreasing below the ratio {} (ratio {:?})",
                    report.verdict.threshold, report.verdict.ratio
                )))
            }
        }
        Verb::SigmaTest(io) => {
            let cfg = StudyConfig::load(&io.config)?;
            if cfg.sigma_tests.is_empty() {
                return Err(Error::Argument("the configuration lists no sigma tests".into()));
            }
            let report = run_convergence_study(&cfg)?;
            fs::create_dir_all(&io.out).map_err(|source| Error::Io {
                path: io.out.clone(),
                source,
            })?;
            let path = io.out.join("sigma.csv");
            fs::write(&path, report.sigma_csv()).map_err(|source| Error::Io { path, source })?;
            let mut growing = Vec::new();
            for t in &cfg.sigma_tests {
                let gaps = report.sigma_gaps(&t.name);
                for (eps, gap) in &gaps {
                    println!("{}: eps = {eps}, gap = {gap:.6e}", t.name);
                }
                if gaps.windows(2).any(|w| w[1].1 >= w[0].1) {
                    growing.push(t.name.clone());
                }
            }
            if growing.is_empty() {
                Ok(Outcome::Ok)
            } else {
                Ok(Outcome::Violation(format!("gap does not shrink with eps for {}", growing.join(", "))))
            }
        }
    }
}

fn print_rows(report: &ConvergenceReport) {
    for r in &report.rows {
        println!(
            "eps = {:<8} n = {:<4} L2 = {:<14} corrector = {:<14} {:.1} s  {}",
            r.eps,
            r.resolution,
            r.l2_error.map_or("-".into(), |v| format!("{v:.6e}")),
            r.corrector_error.map_or("-".into(), |v| format!("{v:.6e}")),
            r.runtime_s,
            r.status
        );
    }
    println!(
        "verdict: {} (ratio {:?}, threshold {})",
        if report.verdict.passed { "pass" } else { "fail" },
        report.verdict.ratio,
        report.verdict.threshold
    );
}

fn validate(path: &Path) -> Result<Outcome, Error> {
    let text = read(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let schema = value.get("schema").and_then(|s| s.as_str()).unwrap_or("").to_string();
    match schema.as_str() {
        STUDY_SCHEMA => StudyConfig::from_json(&text).map(|_| ())?,
        MICRO_SCHEMA => serde_json::from_value::<MicroRunConfig>(value)?.validate()?,
        CELL_SCHEMA => serde_json::from_value::<CellRunConfig>(value)?.validate()?,
        MACRO_SCHEMA => serde_json::from_value::<MacroRunConfig>(value)?.validate()?,
        LAW_SCHEMA => EffectiveLaw::from_json(&text, None, None).map(|_| ())?,
        REPORT_SCHEMA => ConvergenceReport::from_json(&text).map(|_| ())?,
        "" => {
            let coeffs: CoefficientSet = serde_json::from_value(value)?;
            coeffs.certify()?;
        }
        other => return Err(Error::Format(format!("unknown schema '{other}'"))),
    }
    println!("{}: valid {}", path.display(), if schema.is_empty() { "coefficient set" } else { &schema });
    Ok(Outcome::Ok)
}
