//! Coupled simulation of plant, reference model, filters, Gramians and all
//! subsystem estimators.
//!
//! All continuous states share one RK4 state vector with `σ` frozen inside a
//! step. Switching instants lie on the integration grid; at each one the
//! outgoing subsystem's filter and Gramian states are saved, `σ` is swapped,
//! and the incoming subsystem's states are restored. Plant state and
//! estimates are continuous across switches.

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::analysis::{lyapunov_value, LyapunovContext};
use crate::error::{Error, Result};
use crate::estimator::{
    adaptation_terms_active, adaptation_terms_inactive, baseline_estimate_derivative, estimate_derivative, ActiveSignals,
    EstimatorGains, EstimatorMode, EstimatorState,
};
use crate::excitation::{gramian_derivatives, verify_gain_condition, GramianMemoryStack, GramianState, IieState};
use crate::filters::{
    derived_signals_with_pinv, edf_update, filter_derivatives, FilterBank, FilterMemoryStack, InactiveTarget,
};
use crate::numerics::{all_finite, lyapunov_solve, min_eig_sym, pinv_left, rk4_step, symmetrize, Matrix, Vector};
use crate::system::{
    control_input, feedforward_gain, plant_derivative, reference_derivative, regressor, solve_matching, MatchedGains,
    ReferenceModel, SubsystemParams, SwitchSchedule,
};

/// Any state entry above this magnitude aborts the run.
pub const BLOWUP_LIMIT: f64 = 1e12;

/// `r(t) = r̄ + δ(t − t_s)·1`, with
/// `δ(τ) = amplitude · e^{−decay·τ} · Σ sin(ω τ)` restarted at every switch.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSignal {
    pub rbar: Vector,
    pub amplitude: f64,
    pub decay: f64,
    pub frequencies: Vec<f64>,
}

impl ReferenceSignal {
    pub fn excitation(&self, tau: f64) -> f64 {
        let s: f64 = self.frequencies.iter().map(|w| (w * tau).sin()).sum();
        self.amplitude * (-self.decay * tau).exp() * s
    }

    /// Reference value `τ` seconds after the last switch.
    pub fn value_at_offset(&self, tau: f64) -> Vector {
        self.rbar.add_scalar(self.excitation(tau))
    }
}

pub fn reference_input(t: f64, schedule: &SwitchSchedule, signal: &ReferenceSignal) -> Vector {
    signal.value_at_offset(t - schedule.segment_start(t))
}

/// How `η_i` in the gain condition is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaPolicy {
    /// `η_i = factor · k_sw,i · λ_min(S_Q̄_i)`, fixed after detection.
    Relative(f64),
    Fixed(f64),
}

impl Default for EtaPolicy {
    fn default() -> Self {
        EtaPolicy::Relative(0.9)
    }
}

impl EtaPolicy {
    pub fn resolve(&self, k_sw: f64, degree: f64) -> f64 {
        match *self {
            EtaPolicy::Relative(f) => f * k_sw * degree,
            EtaPolicy::Fixed(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub subsystems: Vec<SubsystemParams>,
    pub reference: ReferenceModel,
    pub schedule: SwitchSchedule,
    pub k_f: f64,
    pub k_s: f64,
    pub gains: Vec<EstimatorGains>,
    pub eta: EtaPolicy,
    pub q_m: Matrix,
    pub x0: Vector,
    pub xm0: Vector,
    pub phi_hat0: Vec<Vector>,
    pub h: f64,
    pub t_end: f64,
    pub signal: ReferenceSignal,
    pub epsilon_iie: f64,
    pub mode: EstimatorMode,
    pub inactive_target: InactiveTarget,
    /// Record every N-th step.
    pub decimate: usize,
    /// Negative control: integrate `φ̂̇ = −Γ(…)` while `V` still uses `Γ`.
    pub negate_adaptation: bool,
}

impl SimulationConfig {
    pub fn state_dim(&self) -> usize {
        self.reference.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.reference.input_dim()
    }

    pub fn param_dim(&self) -> usize {
        self.state_dim() * self.input_dim()
    }

    pub fn num_subsystems(&self) -> usize {
        self.subsystems.len()
    }

    pub fn total_steps(&self) -> Result<usize> {
        grid_index(self.t_end - self.schedule.t0, self.h, "t_end")
    }

    /// Step indices of the switching instants.
    pub fn switch_steps(&self) -> Result<Vec<usize>> {
        self.schedule
            .instants
            .iter()
            .map(|&tk| grid_index(tk - self.schedule.t0, self.h, "switching instant"))
            .collect()
    }

    /// Every violated assumption or malformed field, in one pass.
    pub fn violations(&self) -> Vec<Error> {
        let mut errs = Vec::new();
        let n = self.state_dim();
        let m = self.input_dim();
        let p = n * m;
        let nsub = self.num_subsystems();
        let mut push = |r: Result<()>| {
            if let Err(e) = r {
                errs.push(e);
            }
        };

        if nsub == 0 {
            push(Err(Error::config("at least one subsystem is required")));
        }
        if !all_finite(&self.reference.a_m) || !all_finite(&self.reference.b_m) {
            push(Err(Error::config("reference model has non-finite entries")));
        }
        push(crate::numerics::check_hurwitz(&self.reference.a_m));
        for (i, sub) in self.subsystems.iter().enumerate() {
            if !all_finite(&sub.a) || !all_finite(&sub.b) {
                push(Err(Error::config(format!("subsystem {} has non-finite entries", i + 1))));
                continue;
            }
            match pinv_left(&sub.b) {
                Err(e) => push(Err(Error::config(format!("subsystem {}: B must have full column rank ({e})", i + 1)))),
                Ok(_) => push(solve_matching(i + 1, sub, &self.reference).map(|_| ())),
            }
        }
        if self.schedule.max_id() >= nsub && nsub > 0 {
            push(Err(Error::config(format!(
                "schedule references subsystem {} but only {nsub} are defined",
                self.schedule.max_id() + 1
            ))));
        }
        if !(self.h > 0.0) {
            push(Err(Error::config("step h must be positive")));
        } else {
            if self.t_end < self.schedule.t0 {
                push(Err(Error::config("t_end must not precede t0")));
            } else {
                push(self.total_steps().map(|_| ()));
            }
            push(self.switch_steps().map(|_| ()));
            if self.schedule.instants.last().is_some_and(|&tk| tk > self.t_end) {
                push(Err(Error::config("t_end must not precede the last switching instant")));
            }
        }
        for (name, v) in [("k_f", self.k_f), ("k_s", self.k_s)] {
            if !(v > 0.0) {
                push(Err(Error::config(format!("{name} must be positive"))));
            }
        }
        if !(self.epsilon_iie > 0.0) {
            push(Err(Error::config("epsilon_iie must be positive")));
        }
        if self.decimate == 0 {
            push(Err(Error::config("decimate must be at least 1")));
        }
        if self.gains.len() != nsub || self.phi_hat0.len() != nsub {
            push(Err(Error::config("gains and initial estimates must be given for every subsystem")));
        }
        for (i, g) in self.gains.iter().enumerate() {
            if !(g.k_l > 0.0 && g.k_ll > 0.0 && g.k_sw > 0.0) {
                push(Err(Error::config(format!("subsystem {}: k_l, k_ll, k_sw must be positive", i + 1))));
            }
            if g.gamma.shape() != (p, p) {
                push(Err(Error::DimensionMismatch(format!("subsystem {}: gamma must be {p}x{p}", i + 1))));
            } else if (&g.gamma - g.gamma.transpose()).amax() > 1e-9 || !(min_eig_sym(&g.gamma).unwrap_or(0.0) > 0.0) {
                push(Err(Error::NotPositiveDefinite(format!("subsystem {}: gamma", i + 1))));
            }
        }
        for (i, phi) in self.phi_hat0.iter().enumerate() {
            if phi.len() != p {
                push(Err(Error::DimensionMismatch(format!("subsystem {}: initial estimate must have {p} entries", i + 1))));
            }
        }
        if self.x0.len() != n || self.xm0.len() != n {
            push(Err(Error::DimensionMismatch(format!("x0 and xm0 must have {n} entries"))));
        }
        if self.signal.rbar.len() != m {
            push(Err(Error::DimensionMismatch(format!("rbar must have {m} entries"))));
        }
        if self.q_m.shape() != (n, n) {
            push(Err(Error::DimensionMismatch(format!("q_m must be {n}x{n}"))));
        }
        if self.inactive_target == InactiveTarget::FilteredErrorDerivative && n != m {
            push(Err(Error::DimensionMismatch(format!(
                "inactive_target = \"e_df\" needs n == m (got n = {n}, m = {m})"
            ))));
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// True if the two configs differ in nothing but the estimator mode.
    pub fn same_except_mode(&self, other: &SimulationConfig) -> bool {
        let mut a = self.clone();
        a.mode = other.mode;
        &a == other
    }
}

fn grid_index(span: f64, h: f64, what: &str) -> Result<usize> {
    let k = (span / h).round();
    if k < 0.0 || (k * h - span).abs() > 1e-9 * span.abs().max(1.0) {
        return Err(Error::config(format!("{what} at offset {span} is not a multiple of the step h = {h}")));
    }
    Ok(k as usize)
}

/// One logged sample. Subsystem ids are zero-based.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub sigma: usize,
    pub x: Vec<f64>,
    pub x_m: Vec<f64>,
    pub u: Vec<f64>,
    pub v: f64,
    pub lmin_q: f64,
    /// Estimates of all subsystems, concatenated.
    pub phi_hat: Vec<f64>,
    /// `‖φ̃_i‖` per subsystem.
    pub phi_err: Vec<f64>,
    pub s: Vec<bool>,
}

impl TraceRecord {
    pub fn num_subsystems(&self) -> usize {
        self.phi_err.len()
    }

    pub fn phi_hat_of(&self, i: usize) -> &[f64] {
        let p = self.phi_hat.len() / self.num_subsystems();
        &self.phi_hat[i * p..(i + 1) * p]
    }

    pub fn error(&self) -> Vec<f64> {
        self.x.iter().zip(&self.x_m).map(|(a, b)| a - b).collect()
    }

    pub fn e_norm(&self) -> f64 {
        self.error().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `‖[eᵀ, φ̃_1ᵀ, …, φ̃_Mᵀ]‖`.
    pub fn xi_norm(&self) -> f64 {
        let e2: f64 = self.error().iter().map(|v| v * v).sum();
        let p2: f64 = self.phi_err.iter().map(|v| v * v).sum();
        (e2 + p2).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub t_end: f64,
    pub detection_times: Vec<Option<f64>>,
    pub t_f: Option<f64>,
    pub excitation_degree: Vec<Option<f64>>,
    pub eta: Vec<Option<f64>>,
    pub gain_margin: Vec<Option<f64>>,
    pub final_phi_err: Vec<f64>,
    pub final_e_norm: f64,
    /// `λ_min(S_Zfᵀ S_Zf)` per subsystem, from the final stacks.
    pub stored_regressor_lambda: Vec<f64>,
    /// `λ_min(S_Q)` per subsystem, from the final stacks.
    pub stored_gramian_lambda: Vec<f64>,
    pub max_filter_identity_residual: f64,
    pub max_gramian_identity_residual: f64,
    pub min_lmin_q: f64,
    pub max_state_norm: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: SimulationConfig,
    pub trace: Vec<TraceRecord>,
    pub summary: RunSummary,
}

/// Offsets of each block inside the packed RK4 state.
#[derive(Debug, Clone, Copy)]
struct Layout {
    n: usize,
    m: usize,
    p: usize,
    nsub: usize,
}

impl Layout {
    fn len(&self) -> usize {
        3 * self.n + self.m + self.m * self.p + self.p * self.p + self.p + self.nsub * self.p
    }
}

struct Unpacked {
    x: Vector,
    x_m: Vector,
    e_f: Vector,
    u_ef: Vector,
    z_f: Matrix,
    q: Matrix,
    g: Vector,
    phi_hat: Vec<Vector>,
}

impl Layout {
    fn pack(&self, s: &Unpacked) -> Vector {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(s.x.as_slice());
        out.extend_from_slice(s.x_m.as_slice());
        out.extend_from_slice(s.e_f.as_slice());
        out.extend_from_slice(s.u_ef.as_slice());
        out.extend_from_slice(s.z_f.as_slice());
        out.extend_from_slice(s.q.as_slice());
        out.extend_from_slice(s.g.as_slice());
        for phi in &s.phi_hat {
            out.extend_from_slice(phi.as_slice());
        }
        Vector::from_vec(out)
    }

    fn unpack(&self, y: &Vector) -> Unpacked {
        let y = y.as_slice();
        let mut off = 0;
        let mut take = |len: usize| {
            let s = &y[off..off + len];
            off += len;
            s
        };
        let (n, m, p) = (self.n, self.m, self.p);
        Unpacked {
            x: Vector::from_column_slice(take(n)),
            x_m: Vector::from_column_slice(take(n)),
            e_f: Vector::from_column_slice(take(n)),
            u_ef: Vector::from_column_slice(take(m)),
            z_f: Matrix::from_column_slice(m, p, take(m * p)),
            q: Matrix::from_column_slice(p, p, take(p * p)),
            g: Vector::from_column_slice(take(p)),
            phi_hat: (0..self.nsub).map(|_| Vector::from_column_slice(take(p))).collect(),
        }
    }
}

/// A running simulation. Build with [`Simulation::new`], drive with
/// [`Simulation::advance`] or [`run_scenario`].
pub struct Simulation {
    config: SimulationConfig,
    layout: Layout,
    matched: Vec<MatchedGains>,
    k_r: Vec<Matrix>,
    b_pinv: Vec<Matrix>,
    p_lyap: Matrix,
    lyap: LyapunovContext,
    switch_steps: Vec<usize>,
    total_steps: usize,

    step_index: usize,
    segment: usize,
    sigma: usize,
    segment_start: f64,
    x: Vector,
    x_m: Vector,
    bank: FilterBank,
    gram: GramianState,
    est: EstimatorState,
    fstack: FilterMemoryStack,
    gstack: GramianMemoryStack,
    iie: IieState,

    max_uei_residual: f64,
    max_g_residual: f64,
    min_lmin_q: f64,
    max_state_norm: f64,
}

impl Simulation {
    pub fn new(config: SimulationConfig) -> Result<Self> {
        config.validate()?;
        let n = config.state_dim();
        let m = config.input_dim();
        let p = n * m;
        let nsub = config.num_subsystems();
        let matched = config
            .subsystems
            .iter()
            .enumerate()
            .map(|(i, s)| solve_matching(i + 1, s, &config.reference))
            .collect::<Result<Vec<_>>>()?;
        let k_r = config
            .subsystems
            .iter()
            .map(|s| feedforward_gain(&s.b, &config.reference))
            .collect::<Result<Vec<_>>>()?;
        let b_pinv = config.subsystems.iter().map(|s| pinv_left(&s.b)).collect::<Result<Vec<_>>>()?;
        let p_lyap = lyapunov_solve(&config.reference.a_m, &config.q_m)?;
        let gammas: Vec<Matrix> = config.gains.iter().map(|g| g.gamma.clone()).collect();
        let lyap = LyapunovContext::new(p_lyap.clone(), config.q_m.clone(), &gammas)?;
        let switch_steps = config.switch_steps()?;
        let total_steps = config.total_steps()?;
        let t0 = config.schedule.t0;

        let est = EstimatorState { phi_hat: config.phi_hat0.clone(), gains: config.gains.clone(), mode: config.mode };
        let sim = Self {
            layout: Layout { n, m, p, nsub },
            matched,
            k_r,
            b_pinv,
            p_lyap,
            lyap,
            switch_steps,
            total_steps,
            step_index: 0,
            segment: 0,
            sigma: config.schedule.sequence[0],
            segment_start: t0,
            x: config.x0.clone(),
            x_m: config.xm0.clone(),
            bank: FilterBank::zeros(n, m, config.k_f, t0),
            gram: GramianState::zeros(p, config.k_s),
            est,
            fstack: FilterMemoryStack::zeros(nsub, n, m),
            gstack: GramianMemoryStack::zeros(nsub, p),
            iie: IieState::new(nsub, p, config.epsilon_iie, t0),
            max_uei_residual: 0.0,
            max_g_residual: 0.0,
            min_lmin_q: f64::INFINITY,
            max_state_norm: 0.0,
            config,
        };
        // e(t0) is the left endpoint of the first interval; all filters start at zero.
        let mut sim = sim;
        sim.bank.e_at_load = &sim.x - &sim.x_m;
        Ok(sim)
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn time(&self) -> f64 {
        self.config.schedule.t0 + self.step_index as f64 * self.config.h
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn is_finished(&self) -> bool {
        self.step_index >= self.total_steps
    }

    pub fn sigma(&self) -> usize {
        self.sigma
    }

    pub fn state(&self) -> &Vector {
        &self.x
    }

    pub fn reference_state(&self) -> &Vector {
        &self.x_m
    }

    pub fn estimates(&self) -> &[Vector] {
        &self.est.phi_hat
    }

    pub fn matched_gains(&self) -> &[MatchedGains] {
        &self.matched
    }

    pub fn filter_bank(&self) -> &FilterBank {
        &self.bank
    }

    pub fn gramian(&self) -> &GramianState {
        &self.gram
    }

    pub fn filter_stack(&self) -> &FilterMemoryStack {
        &self.fstack
    }

    pub fn gramian_stack(&self) -> &GramianMemoryStack {
        &self.gstack
    }

    pub fn iie(&self) -> &IieState {
        &self.iie
    }

    pub fn lyapunov_matrix(&self) -> &Matrix {
        &self.p_lyap
    }

    pub fn lyapunov_context(&self) -> &LyapunovContext {
        &self.lyap
    }

    pub fn phi_tilde(&self) -> Vec<Vector> {
        self.est.phi_hat.iter().zip(&self.matched).map(|(h, g)| h - &g.phi).collect()
    }

    pub fn lyapunov_value(&self) -> f64 {
        lyapunov_value(&(&self.x - &self.x_m), &self.phi_tilde(), &self.lyap)
    }

    /// `u_ei` of the active subsystem at the current time.
    pub fn filtered_input(&self) -> Vector {
        derived_signals_with_pinv(&self.bank, &self.config.reference, &self.b_pinv[self.sigma]).u_ei
    }

    /// Incoming subsystem if the current grid point is a switching instant
    /// that has not been handled yet.
    pub fn pending_switch(&self) -> Option<usize> {
        let k = self.segment;
        (k < self.switch_steps.len() && self.switch_steps[k] == self.step_index).then(|| self.config.schedule.sequence[k + 1])
    }

    fn packed(&self) -> Vector {
        self.layout.pack(&Unpacked {
            x: self.x.clone(),
            x_m: self.x_m.clone(),
            e_f: self.bank.e_f.clone(),
            u_ef: self.bank.u_ef.clone(),
            z_f: self.bank.z_f.clone(),
            q: self.gram.q.clone(),
            g: self.gram.g.clone(),
            phi_hat: self.est.phi_hat.clone(),
        })
    }

    fn derivative(&self, t: f64, y: &Vector) -> Vector {
        let cfg = &self.config;
        let s = self.layout.unpack(y);
        let i = self.sigma;
        let r = cfg.signal.value_at_offset(t - self.segment_start);
        let z = regressor(&s.x, self.layout.m);
        let ctrl = control_input(&s.x, &r, &s.phi_hat[i], &self.k_r[i]);
        let x_dot = plant_derivative(&cfg.subsystems[i], &s.x, &ctrl.u);
        let xm_dot = reference_derivative(&cfg.reference, &s.x_m, &r);
        let e = &s.x - &s.x_m;

        let mut bank = self.bank.clone();
        bank.e_f = s.e_f;
        bank.u_ef = s.u_ef;
        bank.z_f = s.z_f;
        bank.e_df = edf_update(&bank, &e, t);
        let f_rates = filter_derivatives(&bank, &e, &ctrl.u_e, &z);
        let derived = derived_signals_with_pinv(&bank, &cfg.reference, &self.b_pinv[i]);

        let gs = GramianState { q: s.q, g: s.g, k_s: cfg.k_s };
        let g_rates = gramian_derivatives(&gs, &bank.z_f, &derived.u_ei);

        let signals = ActiveSignals {
            z: &z,
            e: &e,
            p: &self.p_lyap,
            b: &cfg.subsystems[i].b,
            z_f: &bank.z_f,
            u_ei: &derived.u_ei,
            q: &gs.q,
            g: &gs.g,
        };
        let sign = if cfg.negate_adaptation { -1.0 } else { 1.0 };
        let phi_rates = s
            .phi_hat
            .iter()
            .enumerate()
            .map(|(j, phi)| {
                let gains = &self.est.gains[j];
                let iie = &self.iie.slots[j];
                let rate = match (self.est.mode, j == i) {
                    (EstimatorMode::Memory, true) => {
                        estimate_derivative(&adaptation_terms_active(&signals, gains, iie, phi), &gains.gamma)
                    }
                    (EstimatorMode::Memory, false) => {
                        // Target dimensions are checked at config validation.
                        let terms = adaptation_terms_inactive(
                            self.fstack.slot(j),
                            self.gstack.slot(j),
                            iie,
                            gains,
                            cfg.inactive_target,
                            phi,
                        )
                        .expect("inactive target dimensions validated");
                        estimate_derivative(&terms, &gains.gamma)
                    }
                    (EstimatorMode::Baseline, true) => {
                        baseline_estimate_derivative(true, &adaptation_terms_active(&signals, gains, iie, phi), &gains.gamma)
                    }
                    (EstimatorMode::Baseline, false) => Vector::zeros(phi.len()),
                };
                rate * sign
            })
            .collect();

        self.layout.pack(&Unpacked {
            x: x_dot,
            x_m: xm_dot,
            e_f: f_rates.e_f,
            u_ef: f_rates.u_ef,
            z_f: f_rates.z_f,
            q: g_rates.q,
            g: g_rates.g,
            phi_hat: phi_rates,
        })
    }

    /// One RK4 step with `σ` frozen, followed by the `e_df` refresh, `Q`
    /// symmetrization, the excitation check and identity diagnostics.
    /// Switching is left to [`Simulation::handle_switch`].
    pub fn step(&mut self) -> Result<()> {
        let t = self.time();
        let h = self.config.h;
        let y = self.packed();
        let y_next = rk4_step(|tt, yy| self.derivative(tt, yy), t, &y, h)?;
        let norm = y_next.amax();
        if !(norm <= BLOWUP_LIMIT) {
            return Err(Error::NumericalBlowup { t: t + h, detail: format!("state magnitude {norm:e} exceeds {BLOWUP_LIMIT:e}") });
        }
        self.max_state_norm = self.max_state_norm.max(norm);

        let s = self.layout.unpack(&y_next);
        self.step_index += 1;
        let t_new = self.time();
        self.x = s.x;
        self.x_m = s.x_m;
        self.bank.e_f = s.e_f;
        self.bank.u_ef = s.u_ef;
        self.bank.z_f = s.z_f;
        let e = &self.x - &self.x_m;
        self.bank.e_df = edf_update(&self.bank, &e, t_new);
        self.gram.q = symmetrize(&s.q);
        self.gram.g = s.g;
        self.est.phi_hat = s.phi_hat;

        let lmin = self.gram.lambda_min();
        self.min_lmin_q = self.min_lmin_q.min(lmin);
        let phi = &self.matched[self.sigma].phi;
        let uei = self.filtered_input();
        self.max_uei_residual = self.max_uei_residual.max((&uei - &self.bank.z_f * phi).amax());
        self.max_g_residual = self.max_g_residual.max((&self.gram.g - &self.gram.q * phi).amax());

        if self.iie.check_iie(&self.gram, self.sigma, t_new) {
            info!("subsystem {} excited at t = {t_new:.3} (λ_min(Q) = {lmin:.3e})", self.sigma + 1);
        }
        Ok(())
    }

    /// Save outgoing filters and Gramians, swap `σ`, restore the incoming ones.
    pub fn handle_switch(&mut self, incoming: usize) {
        let t_k = self.time();
        let outgoing = self.sigma;
        debug!("switch {} -> {} at t = {t_k}", outgoing + 1, incoming + 1);
        let uei = self.filtered_input();
        self.fstack.save_on_switch_out(&self.bank, outgoing, &uei);
        self.gstack.gramian_save(&self.gram, outgoing);

        self.sigma = incoming;
        self.segment += 1;
        self.segment_start = t_k;

        let e_now = &self.x - &self.x_m;
        self.fstack.load_on_switch_in(&mut self.bank, incoming, &e_now, t_k);
        self.gstack.gramian_load(&mut self.gram, incoming);
    }

    /// Step, then switch if the new grid point is a switching instant.
    pub fn advance(&mut self) -> Result<()> {
        self.step()?;
        if let Some(incoming) = self.pending_switch() {
            self.handle_switch(incoming);
        }
        Ok(())
    }

    pub fn record(&self) -> TraceRecord {
        let t = self.time();
        let r = self.config.signal.value_at_offset(t - self.segment_start);
        let ctrl = control_input(&self.x, &r, &self.est.phi_hat[self.sigma], &self.k_r[self.sigma]);
        let tilde = self.phi_tilde();
        TraceRecord {
            t,
            sigma: self.sigma,
            x: self.x.as_slice().to_vec(),
            x_m: self.x_m.as_slice().to_vec(),
            u: ctrl.u.as_slice().to_vec(),
            v: lyapunov_value(&(&self.x - &self.x_m), &tilde, &self.lyap),
            lmin_q: self.gram.lambda_min(),
            phi_hat: self.est.phi_hat.iter().flat_map(|v| v.iter().copied()).collect(),
            phi_err: tilde.iter().map(|v| v.norm()).collect(),
            s: (0..self.layout.nsub).map(|i| self.iie.s(i)).collect(),
        }
    }

    pub fn summary(&self) -> RunSummary {
        let nsub = self.layout.nsub;
        let degree: Vec<Option<f64>> = self.iie.slots.iter().map(|s| s.degree()).collect();
        let eta: Vec<Option<f64>> = (0..nsub)
            .map(|i| degree[i].map(|d| self.config.eta.resolve(self.est.gains[i].k_sw, d)))
            .collect();
        let gain_margin = (0..nsub)
            .map(|i| {
                eta[i].and_then(|eta| verify_gain_condition(&self.iie, self.est.gains[i].k_sw, i, eta).ok().map(|(_, m)| m))
            })
            .collect();
        let stored_regressor_lambda = self
            .fstack
            .slots
            .iter()
            .map(|s| min_eig_sym(&(s.z_f.transpose() * &s.z_f)).unwrap_or(f64::NAN))
            .collect();
        let stored_gramian_lambda = self.gstack.slots.iter().map(|s| min_eig_sym(&s.q).unwrap_or(f64::NAN)).collect();
        RunSummary {
            steps: self.step_index,
            t_end: self.time(),
            detection_times: self.iie.slots.iter().map(|s| s.detected_after).collect(),
            t_f: self.iie.t_f(),
            excitation_degree: degree,
            eta,
            gain_margin,
            final_phi_err: self.phi_tilde().iter().map(|v| v.norm()).collect(),
            final_e_norm: (&self.x - &self.x_m).norm(),
            stored_regressor_lambda,
            stored_gramian_lambda,
            max_filter_identity_residual: self.max_uei_residual,
            max_gramian_identity_residual: self.max_g_residual,
            min_lmin_q: if self.step_index == 0 { self.gram.lambda_min() } else { self.min_lmin_q },
            max_state_norm: self.max_state_norm,
        }
    }
}

/// Full run from `t0` to `t_end`, recording every `decimate`-th grid point.
pub fn run_scenario(config: SimulationConfig) -> Result<RunOutput> {
    let mut sim = Simulation::new(config)?;
    let decimate = sim.config.decimate;
    let mut trace = Vec::with_capacity(sim.total_steps / decimate + 1);
    trace.push(sim.record());
    while !sim.is_finished() {
        sim.advance()?;
        if sim.step_index % decimate == 0 {
            trace.push(sim.record());
        }
    }
    let summary = sim.summary();
    Ok(RunOutput { config: sim.config, trace, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::default_config;

    #[test]
    fn excitation_signal_values() {
        let sig = default_config().signal;
        assert_eq!(sig.excitation(0.0), 0.0);
        assert!(sig.excitation(std::f64::consts::PI).abs() < 1e-12);
        assert!(sig.excitation(200.0).abs() < 10.0 * 5.0 * (-20.0f64).exp());
        let sched = SwitchSchedule::periodic(0.0, 30.0, &[0, 1, 2, 3], 240.0).unwrap();
        for k in 0..8 {
            assert_eq!(reference_input(30.0 * k as f64, &sched, &sig)[0], 0.0);
        }
    }

    #[test]
    fn grid_alignment_enforced() {
        let mut cfg = default_config();
        cfg.h = 0.007;
        assert!(cfg.validate().is_err());
        let mut cfg = default_config();
        cfg.t_end = 100.0005;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_horizon_single_record() {
        let mut cfg = default_config();
        cfg.t_end = 0.0;
        cfg.schedule = SwitchSchedule::new(0.0, vec![], vec![0]).unwrap();
        let out = run_scenario(cfg).unwrap();
        assert_eq!(out.trace.len(), 1);
    }

    #[test]
    fn trace_length_and_decimation() {
        let mut cfg = default_config();
        cfg.t_end = 1.0;
        cfg.schedule = SwitchSchedule::new(0.0, vec![0.5], vec![0, 1]).unwrap();
        let full = run_scenario(cfg.clone()).unwrap();
        assert_eq!(full.trace.len(), 1001);
        cfg.decimate = 10;
        let dec = run_scenario(cfg).unwrap();
        assert_eq!(dec.trace.len(), 101);
        assert_eq!(dec.trace[50], full.trace[500]);
    }

    #[test]
    fn layout_roundtrip() {
        let layout = Layout { n: 3, m: 2, p: 6, nsub: 2 };
        let y = Vector::from_iterator(layout.len(), (0..layout.len()).map(|v| v as f64));
        let back = layout.pack(&layout.unpack(&y));
        assert_eq!(back, y);
    }
}
