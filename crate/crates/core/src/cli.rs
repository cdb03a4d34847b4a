//! Command-line front end: `run`, `compare` and `validate`.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 numerical blowup, 4 I/O error.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::info;
use serde::Serialize;

use crate::analysis::{compare_runs, convergence_report, Comparison, ConvergenceReport, LyapunovContext};
use crate::engine::{run_scenario, RunOutput, RunSummary, SimulationConfig};
use crate::error::{Error, Result};
use crate::estimator::EstimatorMode;
use crate::numerics::{lyapunov_solve, matrix_to_rows};
use crate::output::{write_json, write_overlay_svg, write_svg, write_trace_csv};
use crate::scenario::{check_scenario, parse_scenario, DEFAULT_SCENARIO};
use crate::system::{feedforward_gain, solve_matching};

#[derive(Debug, Parser)]
#[command(name = "smrac", version, about = "Switched MRAC with memory-based estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write trace.csv, report.json and plot.svg.
    Run {
        /// Scenario TOML file, or `default` for the bundled one.
        scenario: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Keep every N-th sample in the trace.
        #[arg(long)]
        decimate: Option<usize>,
    },
    /// Run memory and baseline estimators on the same scenario.
    Compare {
        scenario: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check the scenario assumptions and print the matched gains.
    Validate { scenario: String },
}

fn read_source(scenario: &str) -> Result<String> {
    let path = Path::new(scenario);
    if scenario == "default" && !path.exists() {
        return Ok(DEFAULT_SCENARIO.to_string());
    }
    std::fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read scenario {scenario}: {e}")))
}

pub fn load(scenario: &str) -> Result<SimulationConfig> {
    parse_scenario(&read_source(scenario)?)
}

/// The Lyapunov weights `P` and `Γ_i⁻¹` used by the analysis.
pub fn lyapunov_context(cfg: &SimulationConfig) -> Result<LyapunovContext> {
    let p = lyapunov_solve(&cfg.reference.a_m, &cfg.q_m)?;
    let gammas: Vec<_> = cfg.gains.iter().map(|g| g.gamma.clone()).collect();
    LyapunovContext::new(p, cfg.q_m.clone(), &gammas)
}

#[derive(Debug, Serialize)]
pub struct GainReport {
    pub subsystem: usize,
    pub k_x: Vec<Vec<f64>>,
    pub k_r: Vec<Vec<f64>>,
}

pub fn matched_gains(cfg: &SimulationConfig) -> Result<Vec<GainReport>> {
    cfg.subsystems
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let g = solve_matching(i + 1, s, &cfg.reference)?;
            let k_r = feedforward_gain(&s.b, &cfg.reference)?;
            Ok(GainReport { subsystem: i + 1, k_x: matrix_to_rows(&g.k_x), k_r: matrix_to_rows(&k_r) })
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub mode: EstimatorMode,
    pub matched_gains: Vec<GainReport>,
    pub summary: RunSummary,
    pub convergence: ConvergenceReport,
}

pub fn run_report(out: &RunOutput) -> Result<RunReport> {
    let ctx = lyapunov_context(&out.config)?;
    Ok(RunReport {
        mode: out.config.mode,
        matched_gains: matched_gains(&out.config)?,
        summary: out.summary.clone(),
        convergence: convergence_report(&ctx, out),
    })
}

/// Writes `trace.csv`, `report.json` and `plot.svg` into `dir`.
pub fn write_run(dir: &Path, out: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_trace_csv(&dir.join("trace.csv"), &out.trace)?;
    write_json(&dir.join("report.json"), &run_report(out)?)?;
    write_svg(&dir.join("plot.svg"), &out.trace, &out.config.schedule.instants)?;
    Ok(())
}

pub fn cmd_run(scenario: &str, out_dir: &Path, decimate: Option<usize>) -> Result<RunOutput> {
    let mut cfg = load(scenario)?;
    if let Some(n) = decimate {
        cfg.decimate = n;
        cfg.validate()?;
    }
    info!("running {scenario}: {} steps", cfg.total_steps()?);
    let out = run_scenario(cfg)?;
    write_run(out_dir, &out)?;
    let s = &out.summary;
    println!(
        "t_end = {}  |e| = {:.3e}  max|phi_err| = {:.3e}  T_f = {}",
        s.t_end,
        s.final_e_norm,
        s.final_phi_err.iter().cloned().fold(0.0, f64::max),
        s.t_f.map_or("not reached".to_string(), |t| format!("{t}"))
    );
    println!("wrote {}", out_dir.display());
    Ok(out)
}

pub fn cmd_compare(scenario: &str, out_dir: &Path) -> Result<Comparison> {
    let mut memory_cfg = load(scenario)?;
    memory_cfg.mode = EstimatorMode::Memory;
    let mut baseline_cfg = memory_cfg.clone();
    baseline_cfg.mode = EstimatorMode::Baseline;
    info!("running memory estimator");
    let memory = run_scenario(memory_cfg)?;
    info!("running baseline estimator");
    let baseline = run_scenario(baseline_cfg)?;
    let cmp = compare_runs(&memory, &baseline)?;
    write_run(&out_dir.join("memory"), &memory)?;
    write_run(&out_dir.join("baseline"), &baseline)?;
    write_json(&out_dir.join("comparison.json"), &cmp)?;
    write_overlay_svg(&out_dir.join("overlay.svg"), &memory.trace, &baseline.trace, &memory.config.schedule.instants)?;
    println!("{}", serde_json::to_string_pretty(&cmp).map_err(|e| Error::Serialize(e.to_string()))?);
    Ok(cmp)
}

/// `[a, b; c, d]`, rows separated by semicolons.
pub fn fmt_rows(rows: &[Vec<f64>]) -> String {
    let body: Vec<String> =
        rows.iter().map(|r| r.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(", ")).collect();
    format!("[{}]", body.join("; "))
}

/// Prints the matched gains and every violated assumption. Returns the
/// violations (empty when the scenario is valid).
pub fn cmd_validate(scenario: &str) -> Result<Vec<Error>> {
    let src = read_source(scenario)?;
    let errs = match check_scenario(&src) {
        Ok(cfg) => {
            for g in matched_gains(&cfg)? {
                println!("subsystem {}: K_x = {}, K_r = {}", g.subsystem, fmt_rows(&g.k_x), fmt_rows(&g.k_r));
            }
            println!("scenario is valid");
            Vec::new()
        }
        Err(errs) => errs,
    };
    for e in &errs {
        println!("{e}");
    }
    Ok(errs)
}

/// Runs a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Run { scenario, out, decimate } => cmd_run(scenario, out, *decimate).map(|_| 0),
        Command::Compare { scenario, out } => cmd_compare(scenario, out).map(|_| 0),
        Command::Validate { scenario } => cmd_validate(scenario).map(|errs| if errs.is_empty() { 0 } else { 2 }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
