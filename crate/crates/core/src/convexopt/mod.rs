//! Fast-timescale inverter setpoint optimization.
//!
//! [`solve_box_qp`] handles the linearized model after the affine voltage
//! map has been substituted ([`assemble_qp`]); [`solve_socp`] handles the
//! SOC-relaxed branch flow model with an ADMM cone solver;
//! [`solve_realtime_relaxed`] is the single-timescale relax-and-round
//! baseline that also chooses capacitor states every slot.

mod assemble;
mod qp;
mod realtime;
mod socp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assemble::{assemble_qp, fixed_injections, voltages_with_setpoints, QpProblem};
pub use qp::{solve_box_qp, BoxQpOptions, DEFAULT_QP_MAX_ITER, DEFAULT_QP_TOL};
pub use realtime::{
    enumerate_commitments, round_commitment, solve_realtime_relaxed, RealtimeOptions, RealtimeSolution,
    MAX_ENUMERATED_CAPACITORS,
};
pub use socp::{solve_socp, SocpOptions, SocpSolution, DEFAULT_SOCP_MAX_ITER, DEFAULT_SOCP_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// `sum_i (v_i - v0)^2` at the returned point.
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub status: SolveStatus,
    /// Rounded objective minus the exhaustive-enumeration optimum, when the
    /// relax-and-round baseline could afford the enumeration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounding_gap: Option<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("quadratic term is not positive definite")]
    NotPositiveDefinite,
    #[error(transparent)]
    PowerFlow(#[from] crate::powerflow::PowerFlowError),
}
