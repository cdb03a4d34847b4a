//! Switched parameter estimation law.
//!
//! Every subsystem's estimate moves at all times. The active subsystem uses
//! the live tracking error, filtered regressor and Gramians; inactive ones
//! regress against the filter and Gramian values stored when they were last
//! switched out. The frozen excitation snapshot adds a third term once `s_i`
//! has latched.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excitation::{GramianSlot, IieSlot};
use crate::filters::{FilterSlot, InactiveTarget};
use crate::numerics::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorMode {
    /// Learning in active and inactive phases from the memory stacks.
    #[default]
    Memory,
    /// Plain gradient MRAC: learns only while active, frozen otherwise.
    Baseline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorGains {
    pub gamma: Matrix,
    pub k_l: f64,
    pub k_ll: f64,
    pub k_sw: f64,
}

impl EstimatorGains {
    pub fn uniform(p: usize) -> Self {
        Self { gamma: Matrix::identity(p, p), k_l: 1.0, k_ll: 1.0, k_sw: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub phi_hat: Vec<Vector>,
    pub gains: Vec<EstimatorGains>,
    pub mode: EstimatorMode,
}

/// Live signals seen by the active subsystem's estimator.
#[derive(Debug, Clone, Copy)]
pub struct ActiveSignals<'a> {
    pub z: &'a Matrix,
    pub e: &'a Vector,
    pub p: &'a Matrix,
    pub b: &'a Matrix,
    pub z_f: &'a Matrix,
    pub u_ei: &'a Vector,
    pub q: &'a Matrix,
    pub g: &'a Vector,
}

/// The individual adaptation terms. Terms belonging to the other branch are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationTerms {
    pub c_e: Vector,
    pub c_l: Vector,
    pub c_ll: Vector,
    pub c_sw: Vector,
    pub c_l_bar: Vector,
    pub c_ll_bar: Vector,
    /// `Z_f φ̂ − u_ei` (active), equal to `Z_f φ̃`.
    pub prediction_error: Vector,
    /// `S_Zf φ̂ − target` (inactive).
    pub memory_prediction_error: Vector,
}

impl AdaptationTerms {
    pub fn sum(&self) -> Vector {
        &self.c_e + &self.c_l + &self.c_ll + &self.c_sw + &self.c_l_bar + &self.c_ll_bar
    }
}

fn switching_term(iie: &IieSlot, k_sw: f64, phi_hat: &Vector) -> Vector {
    if iie.s() {
        (&iie.g_bar - &iie.q_bar * phi_hat) * k_sw
    } else {
        Vector::zeros(phi_hat.len())
    }
}

pub fn adaptation_terms_active(sig: &ActiveSignals<'_>, gains: &EstimatorGains, iie: &IieSlot, phi_hat: &Vector) -> AdaptationTerms {
    let p = phi_hat.len();
    let m = sig.z_f.nrows();
    // Gradient term that cancels the e-φ̃ cross term of the Lyapunov derivative.
    let c_e = -(sig.z.transpose() * (sig.b.transpose() * (sig.p.transpose() * sig.e)));
    let prediction_error = sig.z_f * phi_hat - sig.u_ei;
    let c_l = -(sig.z_f.transpose() * &prediction_error) * gains.k_l;
    let c_ll = (sig.g - sig.q * phi_hat) * gains.k_ll;
    AdaptationTerms {
        c_e,
        c_l,
        c_ll,
        c_sw: switching_term(iie, gains.k_sw, phi_hat),
        c_l_bar: Vector::zeros(p),
        c_ll_bar: Vector::zeros(p),
        prediction_error,
        memory_prediction_error: Vector::zeros(m),
    }
}

pub fn adaptation_terms_inactive(
    filters: &FilterSlot,
    gramian: &GramianSlot,
    iie: &IieSlot,
    gains: &EstimatorGains,
    target: InactiveTarget,
    phi_hat: &Vector,
) -> Result<AdaptationTerms> {
    let p = phi_hat.len();
    let target = match target {
        InactiveTarget::FilteredInput => &filters.u_ei,
        InactiveTarget::FilteredErrorDerivative => &filters.e_df,
    };
    if target.len() != filters.z_f.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "inactive regression target has length {} but S_Zf has {} rows",
            target.len(),
            filters.z_f.nrows()
        )));
    }
    let memory_prediction_error = &filters.z_f * phi_hat - target;
    let c_l_bar = -(filters.z_f.transpose() * &memory_prediction_error) * gains.k_l;
    let c_ll_bar = (&gramian.g - &gramian.q * phi_hat) * gains.k_ll;
    Ok(AdaptationTerms {
        c_e: Vector::zeros(p),
        c_l: Vector::zeros(p),
        c_ll: Vector::zeros(p),
        c_sw: switching_term(iie, gains.k_sw, phi_hat),
        c_l_bar,
        c_ll_bar,
        prediction_error: Vector::zeros(filters.z_f.nrows()),
        memory_prediction_error,
    })
}

pub fn estimate_derivative(terms: &AdaptationTerms, gamma: &Matrix) -> Vector {
    gamma * terms.sum()
}

/// Memoryless comparison law: `Γ C_e` while active, zero while inactive.
pub fn baseline_estimate_derivative(active: bool, terms: &AdaptationTerms, gamma: &Matrix) -> Vector {
    if active {
        gamma * &terms.c_e
    } else {
        Vector::zeros(terms.c_e.len())
    }
}
