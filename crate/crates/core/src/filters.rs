//! First-layer filters and their per-subsystem memory stacks.
//!
//! `e_f`, `u_ef` and `Z_f` are first-order low-pass filters of the tracking
//! error, the adaptive part of the control and the regressor. The filtered
//! error derivative `e_df` is never integrated directly; it is reconstructed
//! from `e` and `e_f` in closed form (integration by parts), so `ė` is never
//! needed. At every switching instant the outgoing subsystem's filter states
//! are written to its stack slot, and the incoming subsystem resumes from its
//! own slot.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numerics::{pinv_left, Matrix, Vector};
use crate::system::ReferenceModel;

/// Regression target used by the inactive-phase learning term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum InactiveTarget {
    /// Stored `u_ei`, which equals `S_Zf φ_i` exactly.
    #[default]
    #[serde(rename = "u_ei")]
    FilteredInput,
    /// Stored `e_df`, literal form; only dimensionally valid when `n == m`.
    #[serde(rename = "e_df")]
    FilteredErrorDerivative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub e_df: Vector,
    pub e_f: Vector,
    pub u_ef: Vector,
    pub z_f: Matrix,
    pub k_f: f64,
    /// Left endpoint `t_k` of the current activation interval.
    pub last_load_time: f64,
    pub e_at_load: Vector,
    pub e_f_at_load: Vector,
    pub e_df_at_load: Vector,
}

impl FilterBank {
    pub fn zeros(n: usize, m: usize, k_f: f64, t0: f64) -> Self {
        Self {
            e_df: Vector::zeros(n),
            e_f: Vector::zeros(n),
            u_ef: Vector::zeros(m),
            z_f: Matrix::zeros(m, m * n),
            k_f,
            last_load_time: t0,
            e_at_load: Vector::zeros(n),
            e_f_at_load: Vector::zeros(n),
            e_df_at_load: Vector::zeros(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRates {
    pub e_f: Vector,
    pub u_ef: Vector,
    pub z_f: Matrix,
}

pub fn filter_derivatives(bank: &FilterBank, e: &Vector, u_e: &Vector, z: &Matrix) -> FilterRates {
    let k = bank.k_f;
    FilterRates {
        e_f: e - &bank.e_f * k,
        u_ef: u_e - &bank.u_ef * k,
        z_f: z - &bank.z_f * k,
    }
}

/// Filtered error derivative at `t`, from `e(t)`, `bank.e_f` (at `t`) and the
/// values cached at the last load:
///
/// `e_df(t) = e(t) − k_f e_f(t) + exp(−k_f (t − t_k)) (e_df(t_k) − e(t_k) + k_f e_f(t_k))`
pub fn edf_update(bank: &FilterBank, e_now: &Vector, t: f64) -> Vector {
    let k = bank.k_f;
    let decay = (-k * (t - bank.last_load_time)).exp();
    let carried = &bank.e_df_at_load - &bank.e_at_load + &bank.e_f_at_load * k;
    e_now - &bank.e_f * k + carried * decay
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivedSignals {
    pub h: Vector,
    pub h_b: Vector,
    pub u_ei: Vector,
}

/// `h = e_df − A_m e_f`, `h_B = B⁺h`, `u_ei = u_ef − h_B`.
pub fn derived_signals(bank: &FilterBank, reference: &ReferenceModel, b: &Matrix) -> Result<DerivedSignals> {
    Ok(derived_signals_with_pinv(bank, reference, &pinv_left(b)?))
}

/// As [`derived_signals`] with the left pseudo-inverse of `B_i` precomputed.
pub fn derived_signals_with_pinv(bank: &FilterBank, reference: &ReferenceModel, b_pinv: &Matrix) -> DerivedSignals {
    let h = &bank.e_df - &reference.a_m * &bank.e_f;
    let h_b = b_pinv * &h;
    let u_ei = &bank.u_ef - &h_b;
    DerivedSignals { h, h_b, u_ei }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSlot {
    pub e_df: Vector,
    pub e_f: Vector,
    pub u_ef: Vector,
    pub z_f: Matrix,
    pub u_ei: Vector,
}

/// Per-subsystem filter snapshots, zero until the subsystem is first switched out.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterMemoryStack {
    pub slots: Vec<FilterSlot>,
}

impl FilterMemoryStack {
    pub fn zeros(subsystems: usize, n: usize, m: usize) -> Self {
        let slot = FilterSlot {
            e_df: Vector::zeros(n),
            e_f: Vector::zeros(n),
            u_ef: Vector::zeros(m),
            z_f: Matrix::zeros(m, m * n),
            u_ei: Vector::zeros(m),
        };
        Self { slots: vec![slot; subsystems] }
    }

    pub fn slot(&self, i: usize) -> &FilterSlot {
        &self.slots[i]
    }

    /// Stores the pre-switch filter values of outgoing subsystem `i`.
    /// `bank.e_df` must already be refreshed to `t_k⁻`.
    pub fn save_on_switch_out(&mut self, bank: &FilterBank, i: usize, u_ei: &Vector) {
        self.slots[i] = FilterSlot {
            e_df: bank.e_df.clone(),
            e_f: bank.e_f.clone(),
            u_ef: bank.u_ef.clone(),
            z_f: bank.z_f.clone(),
            u_ei: u_ei.clone(),
        };
    }

    /// Restores subsystem `i`'s filters into `bank` and caches the left-endpoint
    /// values needed by [`edf_update`].
    pub fn load_on_switch_in(&self, bank: &mut FilterBank, i: usize, e_now: &Vector, t_k: f64) {
        let slot = &self.slots[i];
        bank.e_df = slot.e_df.clone();
        bank.e_f = slot.e_f.clone();
        bank.u_ef = slot.u_ef.clone();
        bank.z_f = slot.z_f.clone();
        bank.last_load_time = t_k;
        bank.e_at_load = e_now.clone();
        bank.e_f_at_load = slot.e_f.clone();
        bank.e_df_at_load = slot.e_df.clone();
    }
}
