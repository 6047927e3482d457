//! Bus voltages from nodal injections on a radial feeder.
//!
//! Conventions: injections are `p = p_g - p_c` per node; `p_flow[k]` and
//! `q_flow[k]` are the sending-end flows on the line from the parent of
//! node `k` into `k`; all voltages are squared magnitudes.

mod certify;
mod lindistflow;
mod sensitivity;
mod sweep;

use thiserror::Error;

pub use certify::{certify_soc_exactness, ExactnessReport, DEFAULT_EXACTNESS_TOL};
pub use lindistflow::solve_lindistflow;
pub use sensitivity::{build_sensitivity, Sensitivity};
pub use sweep::{solve_branch_flow_exact, DEFAULT_SWEEP_MAX_ITER, DEFAULT_SWEEP_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerFlowError {
    #[error("dimension mismatch: expected {expected} injections, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("sweep did not converge after {iterations} iterations (last change {last_change:.3e})")]
    NonConvergence { iterations: usize, last_change: f64 },
    #[error("infeasible operating point: squared voltage {value:.3e} at bus {bus}")]
    Infeasible { bus: i64, value: f64 },
}

/// Per-node flow solution.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    /// Squared voltage magnitude at each node.
    pub v: Vec<f64>,
    pub p_flow: Vec<f64>,
    pub q_flow: Vec<f64>,
    /// Squared line current; identically zero under the linear model.
    pub ell: Vec<f64>,
}

impl FlowState {
    /// `sum_i (v_i - v0)^2`.
    pub fn deviation_cost(&self, v0: f64) -> f64 {
        self.v.iter().map(|v| (v - v0).powi(2)).sum()
    }
}

pub(crate) fn check_dims(n: usize, p: &[f64], q: &[f64]) -> Result<(), PowerFlowError> {
    for got in [p.len(), q.len()] {
        if got != n {
            return Err(PowerFlowError::Dimension { expected: n, got });
        }
    }
    Ok(())
}
