//! Lyapunov diagnostics over recorded traces: the common Lyapunov value,
//! its monotonicity, exponential decay after the last excitation time, and
//! memory-vs-baseline comparison.

use serde::{Deserialize, Serialize};

use crate::engine::{RunOutput, TraceRecord};
use crate::error::{Error, Result};
use crate::numerics::{max_eig_sym, min_eig_sym, Matrix, Vector};

pub use crate::output::load_trace_csv;

/// Relative noise budget for the monotonicity check.
pub const MONOTONICITY_BUDGET: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovContext {
    pub p: Matrix,
    pub q_m: Matrix,
    pub gamma_inv: Vec<Matrix>,
    pub lambda_m: f64,
    pub lambda_big_m: f64,
}

impl LyapunovContext {
    pub fn new(p: Matrix, q_m: Matrix, gammas: &[Matrix]) -> Result<Self> {
        let gamma_inv = gammas
            .iter()
            .map(|g| g.clone().try_inverse().ok_or_else(|| Error::NotPositiveDefinite("gamma is singular".into())))
            .collect::<Result<Vec<_>>>()?;
        let mut lo = min_eig_sym(&p)?;
        let mut hi = max_eig_sym(&p)?;
        for gi in &gamma_inv {
            lo = lo.min(min_eig_sym(gi)?);
            hi = hi.max(max_eig_sym(gi)?);
        }
        Ok(Self { p, q_m, gamma_inv, lambda_m: lo, lambda_big_m: hi })
    }

    /// `γ₁ = √(λ_M / λ_m)`.
    pub fn gamma1(&self) -> f64 {
        (self.lambda_big_m / self.lambda_m).sqrt()
    }
}

/// `V = ½eᵀPe + ½ Σ φ̃_iᵀ Γ_i⁻¹ φ̃_i`.
pub fn lyapunov_value(e: &Vector, phi_tilde: &[Vector], ctx: &LyapunovContext) -> f64 {
    let mut v = 0.5 * e.dot(&(&ctx.p * e));
    for (pt, gi) in phi_tilde.iter().zip(&ctx.gamma_inv) {
        v += 0.5 * pt.dot(&(gi * pt));
    }
    v
}

/// Checks `½λ_m‖ξ‖² ≤ V ≤ ½λ_M‖ξ‖²` on every record.
pub fn sandwich_holds(trace: &[TraceRecord], ctx: &LyapunovContext) -> bool {
    trace.iter().all(|r| {
        let xi2 = r.xi_norm().powi(2);
        let slack = 1e-12 * (1.0 + r.v.abs());
        0.5 * ctx.lambda_m * xi2 <= r.v + slack && r.v <= 0.5 * ctx.lambda_big_m * xi2 + slack
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fitted rate `γ₂` (negated least-squares slope of `ln‖ξ‖`).
    pub rate: f64,
    pub bound_ok: bool,
    pub xi_start: f64,
    pub xi_end: f64,
    pub samples: usize,
}

/// Fits `ln‖ξ(t)‖` on `[t0 + T_f, t_end]` and tests the exponential envelope
/// `γ₁ ‖ξ(t0+T_f)‖ exp(−γ₂ (t − t0 − T_f))`.
pub fn decay_fit(trace: &[TraceRecord], t_f: f64, gamma1: f64) -> Result<DecayFit> {
    let t0 = trace.first().ok_or_else(|| Error::config("empty trace"))?.t;
    let start = trace.partition_point(|r| r.t < t0 + t_f - 1e-12);
    let window = &trace[start.min(trace.len())..];
    let first = window.first().ok_or_else(|| Error::config("T_f lies beyond the end of the trace"))?;
    let pending: Vec<usize> = first.s.iter().enumerate().filter(|(_, s)| !**s).map(|(i, _)| i + 1).collect();
    if !pending.is_empty() {
        return Err(Error::IieIncomplete { pending });
    }

    let pts: Vec<(f64, f64)> = window
        .iter()
        .filter_map(|r| {
            let xi = r.xi_norm();
            (xi > 0.0).then(|| (r.t - first.t, xi.ln()))
        })
        .collect();
    let k = pts.len() as f64;
    let rate = if pts.len() < 2 {
        0.0
    } else {
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        if sxx > 0.0 {
            -sxy / sxx
        } else {
            0.0
        }
    };
    let xi_start = first.xi_norm();
    let bound_ok = rate > 0.0
        && window
            .iter()
            .all(|r| r.xi_norm() <= gamma1 * xi_start * (-rate * (r.t - first.t)).exp() * (1.0 + 1e-6));
    Ok(DecayFit { rate, bound_ok, xi_start, xi_end: window.last().map_or(xi_start, TraceRecord::xi_norm), samples: window.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub worst_increment: f64,
    pub at_t: f64,
    pub max_v: f64,
    pub passed: bool,
}

/// Largest step-to-step increase of `V`; passes within `1e−7 · max V`.
pub fn monotonicity_check(trace: &[TraceRecord]) -> MonotonicityReport {
    let max_v = trace.iter().map(|r| r.v).fold(0.0, f64::max);
    let mut worst = f64::NEG_INFINITY;
    let mut at_t = trace.first().map_or(0.0, |r| r.t);
    for w in trace.windows(2) {
        let d = w[1].v - w[0].v;
        if d > worst || d.is_nan() {
            worst = d;
            at_t = w[1].t;
        }
    }
    if trace.len() < 2 {
        worst = 0.0;
    }
    MonotonicityReport { worst_increment: worst, at_t, max_v, passed: worst <= MONOTONICITY_BUDGET * max_v }
}

/// Change of `‖φ̃_i‖` over one inactive interval of subsystem `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalChange {
    pub t_start: f64,
    pub t_end: f64,
    pub err_start: f64,
    pub err_end: f64,
    /// Largest absolute deviation from `err_start` within the interval.
    pub max_deviation: f64,
}

impl IntervalChange {
    pub fn relative_decrease(&self) -> f64 {
        if self.err_start > 0.0 {
            (self.err_start - self.err_end) / self.err_start
        } else {
            0.0
        }
    }
}

/// Inactive intervals of subsystem `i` after its first activation. Each runs
/// from the switch-out record to the switch-back-in record (or trace end).
pub fn inactive_intervals(trace: &[TraceRecord], i: usize) -> Vec<IntervalChange> {
    let mut out = Vec::new();
    let Some(first_active) = trace.iter().position(|r| r.sigma == i) else {
        return out;
    };
    let mut k = first_active;
    while k < trace.len() {
        while k < trace.len() && trace[k].sigma == i {
            k += 1;
        }
        if k >= trace.len() {
            break;
        }
        let start = k;
        while k < trace.len() && trace[k].sigma != i {
            k += 1;
        }
        let end = k.min(trace.len() - 1);
        let err_start = trace[start].phi_err[i];
        let max_deviation = trace[start..=end].iter().map(|r| (r.phi_err[i] - err_start).abs()).fold(0.0, f64::max);
        out.push(IntervalChange {
            t_start: trace[start].t,
            t_end: trace[end].t,
            err_start,
            err_end: trace[end].phi_err[i],
            max_deviation,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub memory_final_phi_err: Vec<f64>,
    pub baseline_final_phi_err: Vec<f64>,
    /// Memory minus baseline, per subsystem, at the final record.
    pub final_phi_err_delta: Vec<f64>,
    pub max_abs_phi_err_delta: Vec<f64>,
    pub memory_error_energy: f64,
    pub baseline_error_energy: f64,
    pub memory_total_phi_err: f64,
    pub baseline_total_phi_err: f64,
    pub memory_not_worse: bool,
    pub memory_inactive: Vec<Vec<IntervalChange>>,
    pub baseline_inactive: Vec<Vec<IntervalChange>>,
}

/// `∫‖e‖² dt` by the trapezoid rule.
pub fn error_energy(trace: &[TraceRecord]) -> f64 {
    trace.windows(2).map(|w| 0.5 * (w[1].t - w[0].t) * (w[0].e_norm().powi(2) + w[1].e_norm().powi(2))).sum()
}

pub fn compare_runs(memory: &RunOutput, baseline: &RunOutput) -> Result<Comparison> {
    if !memory.config.same_except_mode(&baseline.config) {
        return Err(Error::ConfigMismatch("scenario, gains or simulation settings differ".into()));
    }
    if memory.trace.len() != baseline.trace.len() {
        return Err(Error::ConfigMismatch("traces have different lengths".into()));
    }
    let nsub = memory.config.num_subsystems();
    let last_m = memory.trace.last().ok_or_else(|| Error::config("empty trace"))?;
    let last_b = baseline.trace.last().ok_or_else(|| Error::config("empty trace"))?;
    let max_abs_phi_err_delta = (0..nsub)
        .map(|i| {
            memory
                .trace
                .iter()
                .zip(&baseline.trace)
                .map(|(a, b)| (a.phi_err[i] - b.phi_err[i]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let memory_total_phi_err: f64 = last_m.phi_err.iter().sum();
    let baseline_total_phi_err: f64 = last_b.phi_err.iter().sum();
    Ok(Comparison {
        memory_final_phi_err: last_m.phi_err.clone(),
        baseline_final_phi_err: last_b.phi_err.clone(),
        final_phi_err_delta: last_m.phi_err.iter().zip(&last_b.phi_err).map(|(a, b)| a - b).collect(),
        max_abs_phi_err_delta,
        memory_error_energy: error_energy(&memory.trace),
        baseline_error_energy: error_energy(&baseline.trace),
        memory_total_phi_err,
        baseline_total_phi_err,
        memory_not_worse: memory_total_phi_err <= baseline_total_phi_err,
        memory_inactive: (0..nsub).map(|i| inactive_intervals(&memory.trace, i)).collect(),
        baseline_inactive: (0..nsub).map(|i| inactive_intervals(&baseline.trace, i)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub detection_times: Vec<Option<f64>>,
    pub excitation_degree: Vec<Option<f64>>,
    pub eta: Vec<Option<f64>>,
    pub gain_margin: Vec<Option<f64>>,
    pub gain_condition_ok: Vec<Option<bool>>,
    pub all_excited: bool,
    pub t_f: Option<f64>,
    pub gamma1: f64,
    pub lambda_m: f64,
    pub lambda_big_m: f64,
    pub decay: Option<DecayFit>,
    /// Conservative decay rate `α` from the final stacks, for reference.
    pub alpha_reference: Option<f64>,
    pub xi_ratio: Option<f64>,
    pub monotonicity: MonotonicityReport,
    pub sandwich_ok: bool,
    pub max_filter_identity_residual: f64,
    pub max_gramian_identity_residual: f64,
    pub min_lmin_q: f64,
}

/// `α = min(λ_min(Q_m), ϱ_a, ϱ_i) / λ_M` with `ϱ_a = 2η_σ` and
/// `ϱ_i = 2 Σ_{j≠σ} min(λ_mZj, λ_mQj, η_j)`.
pub fn alpha_reference(ctx: &LyapunovContext, out: &RunOutput) -> Option<f64> {
    let s = &out.summary;
    let active = out.trace.last()?.sigma;
    let eta: Option<Vec<f64>> = s.eta.iter().copied().collect();
    let eta = eta?;
    let rho_a = 2.0 * eta[active];
    let inactive: Vec<f64> = (0..eta.len())
        .filter(|&j| j != active)
        .map(|j| s.stored_regressor_lambda[j].min(s.stored_gramian_lambda[j]).min(eta[j]))
        .collect();
    let rho_i = if inactive.is_empty() { f64::INFINITY } else { 2.0 * inactive.iter().sum::<f64>() };
    let qm = min_eig_sym(&ctx.q_m).ok()?;
    Some(qm.min(rho_a).min(rho_i) / ctx.lambda_big_m)
}

pub fn convergence_report(ctx: &LyapunovContext, out: &RunOutput) -> ConvergenceReport {
    let s = &out.summary;
    let gamma1 = ctx.gamma1();
    let decay = s.t_f.and_then(|tf| decay_fit(&out.trace, tf, gamma1).ok());
    ConvergenceReport {
        detection_times: s.detection_times.clone(),
        excitation_degree: s.excitation_degree.clone(),
        eta: s.eta.clone(),
        gain_margin: s.gain_margin.clone(),
        gain_condition_ok: s.gain_margin.iter().map(|m| m.map(|m| m >= 0.0)).collect(),
        all_excited: s.t_f.is_some(),
        t_f: s.t_f,
        gamma1,
        lambda_m: ctx.lambda_m,
        lambda_big_m: ctx.lambda_big_m,
        xi_ratio: decay.as_ref().map(|d| d.xi_end / d.xi_start),
        decay,
        alpha_reference: alpha_reference(ctx, out),
        monotonicity: monotonicity_check(&out.trace),
        sandwich_ok: sandwich_holds(&out.trace, ctx),
        max_filter_identity_residual: s.max_filter_identity_residual,
        max_gramian_identity_residual: s.max_gramian_identity_residual,
        min_lmin_q: s.min_lmin_q,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: f64, e0: f64, phi_err: f64, v: f64) -> TraceRecord {
        TraceRecord {
            t,
            sigma: 0,
            x: vec![e0, 0.0],
            x_m: vec![0.0, 0.0],
            u: vec![0.0],
            v,
            lmin_q: 0.0,
            phi_hat: vec![0.0, 0.0],
            phi_err: vec![phi_err],
            s: vec![true],
        }
    }

    #[test]
    fn value_examples() {
        let ctx = LyapunovContext::new(Matrix::identity(2, 2), Matrix::identity(2, 2), &[Matrix::identity(2, 2)]).unwrap();
        assert_eq!(lyapunov_value(&Vector::zeros(2), &[Vector::zeros(2)], &ctx), 0.0);
        assert_eq!(lyapunov_value(&Vector::from_vec(vec![1.0, 0.0]), &[Vector::zeros(2)], &ctx), 0.5);
        assert_eq!(ctx.gamma1(), 1.0);
    }

    #[test]
    fn gamma1_at_least_one() {
        let p = Matrix::from_row_slice(2, 2, &[7.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0]);
        let ctx = LyapunovContext::new(p, Matrix::identity(2, 2), &[Matrix::identity(2, 2) * 3.0]).unwrap();
        assert!(ctx.gamma1() >= 1.0);
        assert!(ctx.lambda_m <= ctx.lambda_big_m);
    }

    #[test]
    fn decay_fit_recovers_exponential() {
        let trace: Vec<_> = (0..=1000).map(|k| {
            let t = k as f64 * 0.01;
            record(t, 0.0, (-0.3 * t).exp(), 0.0)
        }).collect();
        let fit = decay_fit(&trace, 0.0, 1.0).unwrap();
        assert!((fit.rate - 0.3).abs() < 1e-6, "rate {}", fit.rate);
        assert!(fit.bound_ok);
    }

    #[test]
    fn decay_fit_constant_signal() {
        let trace: Vec<_> = (0..100).map(|k| record(k as f64, 0.0, 2.0, 0.0)).collect();
        let fit = decay_fit(&trace, 0.0, 1.0).unwrap();
        assert_eq!(fit.rate, 0.0);
        assert!(!fit.bound_ok);
    }

    #[test]
    fn decay_fit_requires_excitation() {
        let mut trace: Vec<_> = (0..10).map(|k| record(k as f64, 0.0, 1.0, 0.0)).collect();
        for r in &mut trace[..5] {
            r.s = vec![false];
        }
        assert!(matches!(decay_fit(&trace, 2.0, 1.0), Err(Error::IieIncomplete { .. })));
        assert!(decay_fit(&trace, 5.0, 1.0).is_ok());
    }

    #[test]
    fn monotonicity() {
        let dec: Vec<_> = (0..10).map(|k| record(k as f64, 0.0, 0.0, 10.0 - k as f64)).collect();
        assert!(monotonicity_check(&dec).passed);
        let mut bumpy = dec.clone();
        bumpy[5].v += 2.0;
        let rep = monotonicity_check(&bumpy);
        assert!(!rep.passed);
        assert_eq!(rep.at_t, 5.0);
    }

    #[test]
    fn sandwich_on_synthetic_records() {
        let ctx = LyapunovContext::new(Matrix::identity(2, 2), Matrix::identity(2, 2), &[Matrix::identity(2, 2)]).unwrap();
        let good = vec![record(0.0, 1.0, 1.0, 1.0)];
        assert!(sandwich_holds(&good, &ctx));
        let bad = vec![record(0.0, 1.0, 1.0, 5.0)];
        assert!(!sandwich_holds(&bad, &ctx));
    }

    #[test]
    fn inactive_interval_extraction() {
        let mut trace = Vec::new();
        for k in 0..30 {
            let mut r = record(k as f64, 0.0, 1.0, 0.0);
            r.sigma = if (10..20).contains(&k) { 1 } else { 0 };
            r.phi_err = vec![1.0 - 0.01 * k as f64, 1.0];
            trace.push(r);
        }
        let iv = inactive_intervals(&trace, 0);
        assert_eq!(iv.len(), 1);
        assert_eq!((iv[0].t_start, iv[0].t_end), (10.0, 20.0));
        assert!((iv[0].relative_decrease() - 0.1 / 0.9).abs() < 1e-12);
        // Subsystem 1 first activates at 10; it is inactive again from 20 to the end.
        let iv = inactive_intervals(&trace, 1);
        assert_eq!(iv.len(), 1);
        assert_eq!((iv[0].t_start, iv[0].t_end), (20.0, 29.0));
    }
}
