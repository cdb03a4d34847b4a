//! Scenario files (TOML) and their conversion to [`SimulationConfig`].
//!
//! Subsystem ids in files are one-based. Errors carry the line of the
//! offending section or entry where one can be identified.

use std::ops::Range;
use std::path::Path;

use serde::Deserialize;
use toml::{Spanned, Table, Value};

use crate::engine::{EtaPolicy, ReferenceSignal, SimulationConfig};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorGains, EstimatorMode};
use crate::excitation::DEFAULT_EPSILON_IIE;
use crate::filters::InactiveTarget;
use crate::numerics::{matrix_from_rows, matrix_to_rows, Matrix, Vector};
use crate::system::{ReferenceModel, SubsystemParams, SwitchSchedule};

/// The bundled four-subsystem benchmark scenario.
pub const DEFAULT_SCENARIO: &str = include_str!("../scenarios/default.toml");

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    reference_model: Spanned<ReferenceSection>,
    subsystems: Vec<Spanned<SubsystemSection>>,
    schedule: Spanned<ScheduleSection>,
    gains: Option<Spanned<GainsSection>>,
    initial_conditions: Spanned<InitialSection>,
    #[serde(default)]
    signal: Option<Spanned<SignalSection>>,
    simulation: Spanned<SimulationSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReferenceSection {
    #[serde(rename = "A")]
    a: Rows,
    #[serde(rename = "B")]
    b: Rows,
    #[serde(rename = "Q_m")]
    q_m: Option<Rows>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubsystemSection {
    #[serde(rename = "A")]
    a: Rows,
    #[serde(rename = "B")]
    b: Rows,
    k_l: Option<f64>,
    k_ll: Option<f64>,
    k_sw: Option<f64>,
    gamma: Option<GammaSpec>,
    phi_hat0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum GammaSpec {
    Scalar(f64),
    Matrix(Rows),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleSection {
    #[serde(default)]
    t0: f64,
    interval: Option<f64>,
    instants: Option<Vec<f64>>,
    sequence: Vec<usize>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GainsSection {
    #[serde(default = "one")]
    k_f: f64,
    #[serde(default = "one")]
    k_s: f64,
    #[serde(default = "one")]
    k_l: f64,
    #[serde(default = "one")]
    k_ll: f64,
    #[serde(default = "one")]
    k_sw: f64,
    #[serde(default)]
    gamma: Option<GammaSpec>,
    #[serde(default)]
    eta: EtaPolicy,
}

impl Default for GainsSection {
    fn default() -> Self {
        Self { k_f: 1.0, k_s: 1.0, k_l: 1.0, k_ll: 1.0, k_sw: 1.0, gamma: None, eta: EtaPolicy::default() }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSection {
    x0: Vec<f64>,
    xm0: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SignalSection {
    rbar: Option<Vec<f64>>,
    delta_amplitude: f64,
    delta_decay: f64,
    delta_frequencies: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulationSection {
    h: f64,
    t_end: f64,
    epsilon_iie: Option<f64>,
    #[serde(default)]
    mode: EstimatorMode,
    #[serde(default)]
    inactive_target: InactiveTarget,
    decimate: Option<usize>,
    #[serde(default)]
    negate_adaptation: bool,
}

/// Byte span to one-based line number.
struct Lines<'a>(&'a str);

impl Lines<'_> {
    fn of(&self, span: Range<usize>) -> usize {
        self.0[..span.start.min(self.0.len())].bytes().filter(|&b| b == b'\n').count() + 1
    }
}

fn at(line: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Config { line: None, message } => Error::Config { line: Some(line), message },
        other => Error::Config { line: Some(line), message: other.to_string() },
    }
}

fn matrix(rows: &Rows, what: &str) -> Result<Matrix> {
    matrix_from_rows(rows).map_err(|_| Error::config(format!("{what}: rows have different lengths")))
}

fn gamma_matrix(spec: &GammaSpec, p: usize) -> Result<Matrix> {
    match spec {
        GammaSpec::Scalar(g) => Ok(Matrix::identity(p, p) * *g),
        GammaSpec::Matrix(rows) => matrix(rows, "gamma"),
    }
}

/// Source positions of the sections, for anchoring semantic errors.
struct Anchors {
    reference: usize,
    subsystems: Vec<usize>,
    schedule: usize,
    gains: usize,
    initial: usize,
    simulation: usize,
}

impl Anchors {
    fn anchor(&self, err: Error) -> Error {
        let line = match &err {
            Error::Config { line: Some(_), .. } => return err,
            Error::NotHurwitz { .. } => self.reference,
            Error::MatchingInfeasible { subsystem, .. } => self.subsystems.get(subsystem - 1).copied().unwrap_or(self.reference),
            Error::Config { message, .. } if message.starts_with("subsystem ") => message
                .split_whitespace()
                .nth(1)
                .and_then(|s| s.trim_end_matches(|c: char| !c.is_ascii_digit()).parse::<usize>().ok())
                .and_then(|i| self.subsystems.get(i.wrapping_sub(1)).copied())
                .unwrap_or(self.reference),
            Error::Config { message, .. } if message.contains("schedule") || message.contains("instant") => self.schedule,
            Error::Config { message, .. } if message.contains("k_f") || message.contains("k_s") => self.gains,
            Error::DimensionMismatch(m) if m.contains("x0") => self.initial,
            Error::NotPositiveDefinite(_) => self.gains,
            _ => self.simulation,
        };
        at(line)(err)
    }
}

fn build(src: &str) -> Result<(SimulationConfig, Anchors)> {
    let file: ScenarioFile = toml::from_str(src).map_err(|e| Error::Config {
        line: e.span().map(|s| Lines(src).of(s)),
        message: e.message().trim().to_string(),
    })?;
    let lines = Lines(src);
    let anchors = Anchors {
        reference: lines.of(file.reference_model.span()),
        subsystems: file.subsystems.iter().map(|s| lines.of(s.span())).collect(),
        schedule: lines.of(file.schedule.span()),
        gains: file.gains.as_ref().map_or(1, |g| lines.of(g.span())),
        initial: lines.of(file.initial_conditions.span()),
        simulation: lines.of(file.simulation.span()),
    };

    let rm = file.reference_model.get_ref();
    let a_m = matrix(&rm.a, "reference_model.A").map_err(at(anchors.reference))?;
    let b_m = matrix(&rm.b, "reference_model.B").map_err(at(anchors.reference))?;
    if a_m.nrows() != a_m.ncols() || b_m.nrows() != a_m.nrows() || b_m.ncols() == 0 {
        return Err(at(anchors.reference)(Error::config("reference_model: A must be n x n and B n x m")));
    }
    let n = a_m.nrows();
    let m = b_m.ncols();
    let p = n * m;
    let q_m = match &rm.q_m {
        Some(rows) => matrix(rows, "reference_model.Q_m").map_err(at(anchors.reference))?,
        None => Matrix::identity(n, n),
    };
    // Hurwitz is checked with the other assumptions.
    let reference = ReferenceModel { a_m, b_m };

    let default_gains = GainsSection::default();
    let g = file.gains.as_ref().map_or(&default_gains, |g| g.get_ref());
    let default_gamma = match &g.gamma {
        Some(spec) => gamma_matrix(spec, p).map_err(at(anchors.gains))?,
        None => Matrix::identity(p, p),
    };

    let mut subsystems = Vec::new();
    let mut gains = Vec::new();
    let mut phi_hat0 = Vec::new();
    for (i, entry) in file.subsystems.iter().enumerate() {
        let line = anchors.subsystems[i];
        let s = entry.get_ref();
        let a = matrix(&s.a, &format!("subsystem {} A", i + 1)).map_err(at(line))?;
        let b = matrix(&s.b, &format!("subsystem {} B", i + 1)).map_err(at(line))?;
        if a.shape() != (n, n) || b.shape() != (n, m) {
            return Err(at(line)(Error::config(format!(
                "subsystem {}: A must be {n}x{n} and B {n}x{m} to match the reference model",
                i + 1
            ))));
        }
        subsystems.push(SubsystemParams { a, b });
        gains.push(EstimatorGains {
            gamma: match &s.gamma {
                Some(spec) => gamma_matrix(spec, p).map_err(at(line))?,
                None => default_gamma.clone(),
            },
            k_l: s.k_l.unwrap_or(g.k_l),
            k_ll: s.k_ll.unwrap_or(g.k_ll),
            k_sw: s.k_sw.unwrap_or(g.k_sw),
        });
        phi_hat0.push(match &s.phi_hat0 {
            Some(v) => Vector::from_vec(v.clone()),
            None => Vector::zeros(p),
        });
    }

    let sim = file.simulation.get_ref();
    let sch = file.schedule.get_ref();
    let mut sequence = Vec::with_capacity(sch.sequence.len());
    for &id in &sch.sequence {
        if id == 0 || id > subsystems.len() {
            return Err(at(anchors.schedule)(Error::config(format!(
                "schedule.sequence entry {id} is not a subsystem id in 1..={}",
                subsystems.len()
            ))));
        }
        sequence.push(id - 1);
    }
    let schedule = match (&sch.instants, sch.interval) {
        (Some(instants), None) => SwitchSchedule::new(sch.t0, instants.clone(), sequence),
        (None, Some(interval)) => SwitchSchedule::periodic(sch.t0, interval, &sequence, sim.t_end),
        _ => Err(Error::config("schedule needs exactly one of `interval` or `instants`")),
    }
    .map_err(at(anchors.schedule))?;

    let signal = match &file.signal {
        Some(sig) => {
            let s = sig.get_ref();
            ReferenceSignal {
                rbar: s.rbar.clone().map(Vector::from_vec).unwrap_or_else(|| Vector::zeros(m)),
                amplitude: s.delta_amplitude,
                decay: s.delta_decay,
                frequencies: s.delta_frequencies.clone(),
            }
        }
        None => ReferenceSignal { rbar: Vector::zeros(m), amplitude: 0.0, decay: 0.0, frequencies: Vec::new() },
    };

    let ic = file.initial_conditions.get_ref();
    let config = SimulationConfig {
        subsystems,
        reference,
        schedule,
        k_f: g.k_f,
        k_s: g.k_s,
        gains,
        eta: g.eta,
        q_m,
        x0: Vector::from_vec(ic.x0.clone()),
        xm0: Vector::from_vec(ic.xm0.clone()),
        phi_hat0,
        h: sim.h,
        t_end: sim.t_end,
        signal,
        epsilon_iie: sim.epsilon_iie.unwrap_or(DEFAULT_EPSILON_IIE),
        mode: sim.mode,
        inactive_target: sim.inactive_target,
        decimate: sim.decimate.unwrap_or(1),
        negate_adaptation: sim.negate_adaptation,
    };
    Ok((config, anchors))
}

/// Parses and validates a scenario; every violated assumption is returned.
pub fn check_scenario(src: &str) -> std::result::Result<SimulationConfig, Vec<Error>> {
    let (config, anchors) = build(src).map_err(|e| vec![e])?;
    let errs = config.violations();
    if errs.is_empty() {
        Ok(config)
    } else {
        Err(errs.into_iter().map(|e| anchors.anchor(e)).collect())
    }
}

/// Parses and validates a scenario, failing on the first problem.
pub fn parse_scenario(src: &str) -> Result<SimulationConfig> {
    check_scenario(src).map_err(|mut errs| errs.swap_remove(0))
}

pub fn load_scenario(path: &Path) -> Result<SimulationConfig> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read scenario {}: {e}", path.display())))?;
    parse_scenario(&src)
}

pub fn default_config() -> SimulationConfig {
    parse_scenario(DEFAULT_SCENARIO).expect("bundled scenario is valid")
}

fn rows_value(m: &Matrix) -> Value {
    Value::Array(matrix_to_rows(m).into_iter().map(|r| Value::Array(r.into_iter().map(Value::Float).collect())).collect())
}

fn vec_value(v: &Vector) -> Value {
    Value::Array(v.iter().map(|&x| Value::Float(x)).collect())
}

fn table(entries: Vec<(&str, Value)>) -> Value {
    Value::Table(entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
}

/// Writes a config back as a scenario file with every field explicit.
pub fn scenario_to_toml(cfg: &SimulationConfig) -> String {
    let mut root = Table::new();
    root.insert(
        "reference_model".into(),
        table(vec![
            ("A", rows_value(&cfg.reference.a_m)),
            ("B", rows_value(&cfg.reference.b_m)),
            ("Q_m", rows_value(&cfg.q_m)),
        ]),
    );
    let subs = cfg
        .subsystems
        .iter()
        .zip(&cfg.gains)
        .zip(&cfg.phi_hat0)
        .map(|((s, g), phi)| {
            table(vec![
                ("A", rows_value(&s.a)),
                ("B", rows_value(&s.b)),
                ("k_l", Value::Float(g.k_l)),
                ("k_ll", Value::Float(g.k_ll)),
                ("k_sw", Value::Float(g.k_sw)),
                ("gamma", rows_value(&g.gamma)),
                ("phi_hat0", vec_value(phi)),
            ])
        })
        .collect();
    root.insert("subsystems".into(), Value::Array(subs));
    root.insert(
        "schedule".into(),
        table(vec![
            ("t0", Value::Float(cfg.schedule.t0)),
            ("instants", Value::Array(cfg.schedule.instants.iter().map(|&t| Value::Float(t)).collect())),
            ("sequence", Value::Array(cfg.schedule.sequence.iter().map(|&i| Value::Integer(i as i64 + 1)).collect())),
        ]),
    );
    let eta = match cfg.eta {
        EtaPolicy::Relative(f) => table(vec![("relative", Value::Float(f))]),
        EtaPolicy::Fixed(v) => table(vec![("fixed", Value::Float(v))]),
    };
    root.insert("gains".into(), table(vec![("k_f", Value::Float(cfg.k_f)), ("k_s", Value::Float(cfg.k_s)), ("eta", eta)]));
    root.insert("initial_conditions".into(), table(vec![("x0", vec_value(&cfg.x0)), ("xm0", vec_value(&cfg.xm0))]));
    root.insert(
        "signal".into(),
        table(vec![
            ("rbar", vec_value(&cfg.signal.rbar)),
            ("delta_amplitude", Value::Float(cfg.signal.amplitude)),
            ("delta_decay", Value::Float(cfg.signal.decay)),
            ("delta_frequencies", Value::Array(cfg.signal.frequencies.iter().map(|&w| Value::Float(w)).collect())),
        ]),
    );
    let mode = match cfg.mode {
        EstimatorMode::Memory => "memory",
        EstimatorMode::Baseline => "baseline",
    };
    let target = match cfg.inactive_target {
        InactiveTarget::FilteredInput => "u_ei",
        InactiveTarget::FilteredErrorDerivative => "e_df",
    };
    root.insert(
        "simulation".into(),
        table(vec![
            ("h", Value::Float(cfg.h)),
            ("t_end", Value::Float(cfg.t_end)),
            ("epsilon_iie", Value::Float(cfg.epsilon_iie)),
            ("mode", Value::String(mode.into())),
            ("inactive_target", Value::String(target.into())),
            ("decimate", Value::Integer(cfg.decimate as i64)),
            ("negate_adaptation", Value::Boolean(cfg.negate_adaptation)),
        ]),
    );
    toml::to_string(&root).expect("scenario tables serialize")
}
