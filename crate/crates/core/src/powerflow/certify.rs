use serde::{Deserialize, Serialize};

use super::FlowState;
use crate::feeder::FeederModel;

pub const DEFAULT_EXACTNESS_TOL: f64 = 1e-5;

/// Per-line slack of the relaxed current constraint,
/// `gap_k = v_parent * l_k - (P_k^2 + Q_k^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactnessReport {
    pub gaps: Vec<f64>,
    pub max_gap: f64,
    /// Every gap is at least `-tol` (the point lies in the relaxed set).
    pub feasible: bool,
    /// `max_gap <= tol`: the relaxation is tight at this point.
    pub exact: bool,
}

pub fn certify_soc_exactness(model: &FeederModel, state: &FlowState, tol: f64) -> ExactnessReport {
    let gaps: Vec<f64> = (0..model.n_buses())
        .map(|k| {
            let upstream = model.parent(k).map_or(model.v0(), |p| state.v[p]);
            upstream * state.ell[k] - (state.p_flow[k].powi(2) + state.q_flow[k].powi(2))
        })
        .collect();
    let max_gap = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let feasible = gaps.iter().all(|&g| g >= -tol);
    ExactnessReport { exact: max_gap <= tol, gaps, max_gap, feasible }
}
