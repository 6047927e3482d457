use nalgebra::{DMatrix, DVector};

use super::assemble::{assemble_qp, check_slot, fixed_injections, QpProblem};
use super::qp::{solve_box_qp, BoxQpOptions};
use super::{SolveReport, SolverError};
use crate::feeder::{FeederModel, SlotData};
use crate::powerflow::Sensitivity;

/// Largest capacitor count for which the rounding gap is computed by
/// enumerating all `2^N_a` commitments.
pub const MAX_ENUMERATED_CAPACITORS: usize = 12;

/// Relaxed values within this distance below 0.5 still round up, so that
/// solver round-off on an exact tie does not flip the tie rule.
const ROUNDING_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealtimeOptions {
    pub qp: BoxQpOptions,
    /// Compute the rounding gap when `N_a <= MAX_ENUMERATED_CAPACITORS`.
    pub report_gap: bool,
}

impl Default for RealtimeOptions {
    fn default() -> Self {
        Self { qp: BoxQpOptions::default(), report_gap: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealtimeSolution {
    pub y: Vec<bool>,
    /// Capacitor states of the relaxed joint problem before rounding.
    pub y_relaxed: Vec<f64>,
    pub q_r: Vec<f64>,
    pub report: SolveReport,
}

/// Threshold at 0.5, ties up.
pub fn round_commitment(y: &[f64]) -> Vec<bool> {
    y.iter().map(|&v| v >= 0.5 - ROUNDING_SLACK).collect()
}

fn joint_problem(model: &FeederModel, sens: &Sensitivity, slot: &SlotData) -> QpProblem {
    let n = model.n_buses();
    let off = vec![false; model.n_capacitors()];
    let (p, q) = fixed_injections(model, slot, &off);
    let d = sens.voltages(&p, &q).add_scalar(-model.v0());
    let active = model.active_inverters();
    let nr = active.len();
    let na = model.n_capacitors();
    let m = DMatrix::from_fn(n, nr + na, |i, j| {
        if j < nr {
            sens.x_mat[(i, model.inv_nodes()[active[j]])]
        } else {
            sens.x_mat[(i, model.cap_nodes()[j - nr])] * model.cap_q()[j - nr]
        }
    });
    let mut lo: Vec<f64> = active.iter().map(|&a| -model.inv_bounds()[a].q_max).collect();
    let mut hi: Vec<f64> = lo.iter().map(|b| -b).collect();
    lo.extend(std::iter::repeat_n(0.0, na));
    hi.extend(std::iter::repeat_n(1.0, na));
    QpProblem::least_squares(m, &d, lo, hi)
}

/// Best commitment over all `2^N_a` capacitor states, with the inverter
/// setpoints optimized for each. Ties keep the lowest bitmask (bit `k` is
/// capacitor `k`). Returns `(y, q_r, objective)`.
pub fn enumerate_commitments(
    model: &FeederModel,
    sens: &Sensitivity,
    slot: &SlotData,
    opts: BoxQpOptions,
) -> Result<(Vec<bool>, Vec<f64>, f64), SolverError> {
    let na = model.n_capacitors();
    if na > MAX_ENUMERATED_CAPACITORS {
        return Err(SolverError::Dimension(format!(
            "{na} capacitors exceed the enumeration limit of {MAX_ENUMERATED_CAPACITORS}"
        )));
    }
    let mut best: Option<(Vec<bool>, Vec<f64>, f64)> = None;
    for mask in 0u32..(1u32 << na) {
        let y: Vec<bool> = (0..na).map(|k| mask >> k & 1 == 1).collect();
        let (q, rep, _) = solve_box_qp(&assemble_qp(model, sens, slot, &y)?, opts)?;
        if best.as_ref().is_none_or(|b| rep.objective < b.2) {
            best = Some((y, q.as_slice().to_vec(), rep.objective));
        }
    }
    Ok(best.expect("at least one commitment"))
}

/// Single-timescale baseline: relax `y` to `[0, 1]`, solve jointly with the
/// inverter setpoints on the linear model, round, then re-solve the
/// setpoints with the rounded commitment.
pub fn solve_realtime_relaxed(
    model: &FeederModel,
    sens: &Sensitivity,
    slot: &SlotData,
    opts: RealtimeOptions,
) -> Result<RealtimeSolution, SolverError> {
    check_slot(model, slot)?;
    let nr = model.active_inverters().len();
    let joint = joint_problem(model, sens, slot);
    let (relaxed, _, _) = solve_box_qp(&joint, opts.qp)?;
    let y_relaxed: Vec<f64> = relaxed.as_slice()[nr..].to_vec();
    let y = round_commitment(&y_relaxed);
    let (q, mut report, _) = solve_box_qp(&assemble_qp(model, sens, slot, &y)?, opts.qp)?;
    if opts.report_gap && model.n_capacitors() <= MAX_ENUMERATED_CAPACITORS {
        let (_, _, best) = enumerate_commitments(model, sens, slot, opts.qp)?;
        report.rounding_gap = Some(report.objective - best);
    }
    Ok(RealtimeSolution { y, y_relaxed, q_r: as_vec(q), report })
}

fn as_vec(v: DVector<f64>) -> Vec<f64> {
    v.as_slice().to_vec()
}
