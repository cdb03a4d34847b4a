//! Switched plant, common reference model, matched gains, control law and regressor.

use crate::error::{Error, Result};
use crate::numerics::{check_hurwitz, kron, pinv_left, vec_of, Matrix, Vector};

/// Residual bound for the matching equations.
pub const MATCHING_TOL: f64 = 1e-9;

/// One mode of the switched plant. `a` is known only to the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemParams {
    pub a: Matrix,
    pub b: Matrix,
}

impl SubsystemParams {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        if a.nrows() != a.ncols() || b.nrows() != a.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "subsystem A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(Self { a, b })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel {
    pub a_m: Matrix,
    pub b_m: Matrix,
}

impl ReferenceModel {
    /// Validates shapes and that `A_m` is Hurwitz.
    pub fn new(a_m: Matrix, b_m: Matrix) -> Result<Self> {
        if a_m.nrows() != a_m.ncols() || b_m.nrows() != a_m.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "reference model A_m is {}x{}, B_m is {}x{}",
                a_m.nrows(),
                a_m.ncols(),
                b_m.nrows(),
                b_m.ncols()
            )));
        }
        check_hurwitz(&a_m)?;
        Ok(Self { a_m, b_m })
    }

    pub fn state_dim(&self) -> usize {
        self.a_m.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b_m.ncols()
    }
}

/// True controller parameters satisfying `A_i + B_i K_xᵀ = A_m`, `B_i K_rᵀ = B_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedGains {
    pub k_x: Matrix,
    pub k_r: Matrix,
    pub phi: Vector,
}

/// Feedforward gain `K_r` from the known input matrices alone.
pub fn feedforward_gain(b: &Matrix, reference: &ReferenceModel) -> Result<Matrix> {
    Ok((pinv_left(b)? * &reference.b_m).transpose())
}

/// Solves the matching equations for subsystem `index` (used in errors only).
pub fn solve_matching(index: usize, sub: &SubsystemParams, reference: &ReferenceModel) -> Result<MatchedGains> {
    if sub.state_dim() != reference.state_dim() || sub.input_dim() != reference.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "subsystem {index} dimensions do not match the reference model"
        )));
    }
    let pinv = pinv_left(&sub.b)?;
    let k_x = (&pinv * (&reference.a_m - &sub.a)).transpose();
    let k_r = (&pinv * &reference.b_m).transpose();

    let res_x = (&sub.a + &sub.b * k_x.transpose() - &reference.a_m).amax();
    let res_r = (&sub.b * k_r.transpose() - &reference.b_m).amax();
    let residual = res_x.max(res_r);
    if !(residual <= MATCHING_TOL) {
        return Err(Error::MatchingInfeasible { subsystem: index, residual });
    }
    let phi = vec_of(&k_x);
    Ok(MatchedGains { k_x, k_r, phi })
}

/// `Z = I_m ⊗ xᵀ`, so that `Z vec(K) = Kᵀ x`.
pub fn regressor(x: &Vector, m: usize) -> Matrix {
    kron(&Matrix::identity(m, m), &Matrix::from_row_slice(1, x.len(), x.as_slice()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlInput {
    pub u: Vector,
    pub u_k: Vector,
    pub u_e: Vector,
}

/// Certainty-equivalence law `u = K̂_xᵀx + K_rᵀr`, split as `u_k + u_e`.
pub fn control_input(x: &Vector, r: &Vector, phi_hat: &Vector, k_r: &Matrix) -> ControlInput {
    let m = k_r.ncols();
    let u_e = regressor(x, m) * phi_hat;
    let u_k = k_r.transpose() * r;
    ControlInput { u: &u_k + &u_e, u_k, u_e }
}

pub fn plant_derivative(sub: &SubsystemParams, x: &Vector, u: &Vector) -> Vector {
    &sub.a * x + &sub.b * u
}

pub fn reference_derivative(reference: &ReferenceModel, x_m: &Vector, r: &Vector) -> Vector {
    &reference.a_m * x_m + &reference.b_m * r
}

pub fn tracking_error(x: &Vector, x_m: &Vector) -> Vector {
    x - x_m
}

/// Piecewise-constant, right-continuous switching signal.
///
/// `sequence[0]` is active on `[t0, instants[0])`, `sequence[k]` on
/// `[instants[k-1], instants[k])`. Ids are zero-based.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchSchedule {
    pub t0: f64,
    pub instants: Vec<f64>,
    pub sequence: Vec<usize>,
}

impl SwitchSchedule {
    pub fn new(t0: f64, instants: Vec<f64>, sequence: Vec<usize>) -> Result<Self> {
        if sequence.len() != instants.len() + 1 {
            return Err(Error::config(format!(
                "schedule has {} instants but {} sequence entries (expected {})",
                instants.len(),
                sequence.len(),
                instants.len() + 1
            )));
        }
        let mut prev = t0;
        for &tk in &instants {
            if !(tk > prev) {
                return Err(Error::config(format!("switching instants must be strictly increasing after t0 (got {tk} after {prev})")));
            }
            prev = tk;
        }
        if sequence.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("consecutive schedule entries must name different subsystems"));
        }
        Ok(Self { t0, instants, sequence })
    }

    /// Cyclic schedule with a fixed dwell `interval`, switching strictly before `t_end`.
    pub fn periodic(t0: f64, interval: f64, cycle: &[usize], t_end: f64) -> Result<Self> {
        if cycle.is_empty() || !(interval > 0.0) {
            return Err(Error::config("periodic schedule needs a positive interval and a non-empty sequence"));
        }
        let mut instants = Vec::new();
        let mut k = 1usize;
        loop {
            let tk = t0 + k as f64 * interval;
            if tk >= t_end - 1e-12 * interval {
                break;
            }
            instants.push(tk);
            k += 1;
        }
        let sequence = (0..=instants.len()).map(|k| cycle[k % cycle.len()]).collect();
        Self::new(t0, instants, sequence)
    }

    /// Index of the segment containing `t` (right-continuous).
    pub fn segment(&self, t: f64) -> usize {
        self.instants.partition_point(|&tk| tk <= t)
    }

    pub fn active_at(&self, t: f64) -> usize {
        self.sequence[self.segment(t)]
    }

    /// Start time of the segment containing `t`.
    pub fn segment_start(&self, t: f64) -> f64 {
        match self.segment(t) {
            0 => self.t0,
            k => self.instants[k - 1],
        }
    }

    pub fn max_id(&self) -> usize {
        self.sequence.iter().copied().max().unwrap_or(0)
    }
}
