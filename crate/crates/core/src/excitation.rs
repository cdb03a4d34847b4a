//! Second-layer Gramian filters `Q`, `G`, their memory stacks, and online
//! detection of intermittent initial excitation.
//!
//! `Q` integrates `Z_fᵀZ_f` with forgetting rate `k_s`. Excitation of the
//! active subsystem is declared the first time `λ_min(Q)` clears
//! `epsilon_iie`; at that instant `Q` and `G` are frozen into the
//! subsystem's snapshot and its flag `s_i` latches to one.

use crate::error::{Error, Result};
use crate::numerics::{min_eig_sym, Matrix, Vector};

pub const DEFAULT_EPSILON_IIE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GramianState {
    pub q: Matrix,
    pub g: Vector,
    pub k_s: f64,
}

impl GramianState {
    pub fn zeros(p: usize, k_s: f64) -> Self {
        Self { q: Matrix::zeros(p, p), g: Vector::zeros(p), k_s }
    }

    pub fn lambda_min(&self) -> f64 {
        min_eig_sym(&self.q).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramianRates {
    pub q: Matrix,
    pub g: Vector,
}

/// `Q̇ = −k_s Q + Z_fᵀZ_f`, `Ġ = −k_s G + Z_fᵀu_ei`.
pub fn gramian_derivatives(gs: &GramianState, z_f: &Matrix, u_ei: &Vector) -> GramianRates {
    let zt = z_f.transpose();
    GramianRates {
        q: &zt * z_f - &gs.q * gs.k_s,
        g: &zt * u_ei - &gs.g * gs.k_s,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramianSlot {
    pub q: Matrix,
    pub g: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramianMemoryStack {
    pub slots: Vec<GramianSlot>,
}

impl GramianMemoryStack {
    pub fn zeros(subsystems: usize, p: usize) -> Self {
        Self { slots: vec![GramianSlot { q: Matrix::zeros(p, p), g: Vector::zeros(p) }; subsystems] }
    }

    pub fn slot(&self, i: usize) -> &GramianSlot {
        &self.slots[i]
    }

    pub fn gramian_save(&mut self, gs: &GramianState, i: usize) {
        self.slots[i] = GramianSlot { q: gs.q.clone(), g: gs.g.clone() };
    }

    pub fn gramian_load(&self, gs: &mut GramianState, i: usize) {
        gs.q = self.slots[i].q.clone();
        gs.g = self.slots[i].g.clone();
    }
}

/// Frozen excitation snapshot of one subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct IieSlot {
    /// `T_i`, offset from `t0` at which excitation was detected.
    pub detected_after: Option<f64>,
    pub q_bar: Matrix,
    pub g_bar: Vector,
}

impl IieSlot {
    pub fn s(&self) -> bool {
        self.detected_after.is_some()
    }

    /// Degree of excitation reported as `λ_min(S_Q̄)`.
    pub fn degree(&self) -> Option<f64> {
        self.s().then(|| min_eig_sym(&self.q_bar).unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IieState {
    pub slots: Vec<IieSlot>,
    pub epsilon_iie: f64,
    pub t0: f64,
}

impl IieState {
    pub fn new(subsystems: usize, p: usize, epsilon_iie: f64, t0: f64) -> Self {
        let slot = IieSlot { detected_after: None, q_bar: Matrix::zeros(p, p), g_bar: Vector::zeros(p) };
        Self { slots: vec![slot; subsystems], epsilon_iie, t0 }
    }

    pub fn s(&self, i: usize) -> bool {
        self.slots[i].s()
    }

    pub fn all_excited(&self) -> bool {
        self.slots.iter().all(IieSlot::s)
    }

    /// `T_f = max_i T_i`, once every subsystem is excited.
    pub fn t_f(&self) -> Option<f64> {
        self.slots
            .iter()
            .map(|s| s.detected_after)
            .try_fold(f64::NEG_INFINITY, |acc, t| t.map(|t| acc.max(t)))
    }

    /// Latches `s_active` the first time `λ_min(Q(t)) > epsilon_iie`.
    /// Returns true when a detection happened on this call.
    pub fn check_iie(&mut self, gs: &GramianState, active: usize, t: f64) -> bool {
        if self.slots[active].s() {
            return false;
        }
        if gs.lambda_min() > self.epsilon_iie {
            let slot = &mut self.slots[active];
            slot.detected_after = Some(t - self.t0);
            slot.q_bar = gs.q.clone();
            slot.g_bar = gs.g.clone();
            true
        } else {
            false
        }
    }
}

/// Gain condition `k_sw λ_min(S_Q̄_i) ≥ η_i`; returns `(satisfied, margin)`.
pub fn verify_gain_condition(iie: &IieState, k_sw: f64, i: usize, eta: f64) -> Result<(bool, f64)> {
    let lam = iie.slots[i].degree().ok_or(Error::NotYetExcited { subsystem: i + 1 })?;
    let margin = k_sw * lam - eta;
    Ok((k_sw * lam >= eta, margin))
}
