use super::{check_dims, FlowState, PowerFlowError};
use crate::feeder::FeederModel;

pub const DEFAULT_SWEEP_TOL: f64 = 1e-10;
pub const DEFAULT_SWEEP_MAX_ITER: usize = 200;

/// Fixed point of the full branch flow equations by backward-forward sweep.
///
/// The backward pass accumulates flows including the `r l` and `x l` loss
/// terms, the forward pass updates voltages, and the squared currents are
/// refreshed from the new flows and upstream voltages. Stops when the
/// largest voltage change is at most `tol`.
pub fn solve_branch_flow_exact(
    model: &FeederModel,
    p: &[f64],
    q: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<FlowState, PowerFlowError> {
    let n = model.n_buses();
    check_dims(n, p, q)?;
    let (r, x) = (model.line_r(), model.line_x());
    let v0 = model.v0();

    let mut v = vec![v0; n];
    let mut ell = vec![0.0; n];
    let mut p_flow = vec![0.0; n];
    let mut q_flow = vec![0.0; n];
    let mut last_change = f64::INFINITY;

    for _ in 0..max_iter {
        for &k in model.order().iter().rev() {
            let (mut sp, mut sq) = (r[k] * ell[k] - p[k], x[k] * ell[k] - q[k]);
            for &c in model.children(k) {
                sp += p_flow[c];
                sq += q_flow[c];
            }
            p_flow[k] = sp;
            q_flow[k] = sq;
        }

        last_change = 0.0;
        for &k in model.order() {
            let upstream = model.parent(k).map_or(v0, |pk| v[pk]);
            let z2 = r[k] * r[k] + x[k] * x[k];
            let vk = upstream - 2.0 * (r[k] * p_flow[k] + x[k] * q_flow[k]) + z2 * ell[k];
            if !(vk > 0.0) {
                return Err(PowerFlowError::Infeasible { bus: model.label(k), value: vk });
            }
            last_change = f64::max(last_change, (vk - v[k]).abs());
            v[k] = vk;
        }
        for &k in model.order() {
            let upstream = model.parent(k).map_or(v0, |pk| v[pk]);
            ell[k] = (p_flow[k] * p_flow[k] + q_flow[k] * q_flow[k]) / upstream;
        }

        if last_change <= tol {
            // One more backward pass so flows are consistent with the
            // final currents.
            for &k in model.order().iter().rev() {
                let (mut sp, mut sq) = (r[k] * ell[k] - p[k], x[k] * ell[k] - q[k]);
                for &c in model.children(k) {
                    sp += p_flow[c];
                    sq += q_flow[c];
                }
                p_flow[k] = sp;
                q_flow[k] = sq;
            }
            for &k in model.order() {
                let upstream = model.parent(k).map_or(v0, |pk| v[pk]);
                let z2 = r[k] * r[k] + x[k] * x[k];
                v[k] = upstream - 2.0 * (r[k] * p_flow[k] + x[k] * q_flow[k]) + z2 * ell[k];
            }
            return Ok(FlowState { v, p_flow, q_flow, ell });
        }
    }
    Err(PowerFlowError::NonConvergence { iterations: max_iter, last_change })
}
