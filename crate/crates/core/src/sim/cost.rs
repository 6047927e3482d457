use crate::convexopt::{
    assemble_qp, solve_box_qp, solve_realtime_relaxed, solve_socp, voltages_with_setpoints, BoxQpOptions,
    RealtimeOptions, SocpOptions, SolveReport, SolveStatus, SolverError,
};
use crate::drl::{Action, MdpState};
use crate::feeder::{FeederModel, ScenarioProfile, SlotData};
use crate::powerflow::{build_sensitivity, Sensitivity};

use super::{Physics, SimError};

/// Fast-timescale solver bound to one feeder.
#[derive(Debug, Clone)]
pub struct SlotSolver<'a> {
    pub model: &'a FeederModel,
    pub sens: Sensitivity,
    pub physics: Physics,
    pub qp: BoxQpOptions,
    pub socp: SocpOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    /// Squared voltage per node.
    pub v: Vec<f64>,
    /// Setpoints of the active inverters.
    pub q_r: Vec<f64>,
    /// `sum_i (v_i - v0)^2` from `v`.
    pub deviation: f64,
    /// Commitment in force during the slot.
    pub action_index: usize,
    pub report: SolveReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalOutcome {
    /// Sum of slot deviations, unnormalized.
    pub cost: f64,
    pub slots: Vec<SlotOutcome>,
}

impl<'a> SlotSolver<'a> {
    pub fn new(model: &'a FeederModel, physics: Physics) -> Self {
        SlotSolver {
            model,
            sens: build_sensitivity(model),
            physics,
            qp: BoxQpOptions::default(),
            socp: SocpOptions::default(),
        }
    }

    fn deviation(&self, v: &[f64]) -> f64 {
        v.iter().map(|x| (x - self.model.v0()).powi(2)).sum()
    }

    /// Inverter setpoints for one slot with the commitment fixed.
    pub fn solve_slot(&self, slot: &SlotData, y_hat: &[bool]) -> Result<SlotOutcome, SolverError> {
        let action_index = Action::from_bits(y_hat).index;
        let (v, q_r, report) = match self.physics {
            Physics::Linear => {
                let qp = assemble_qp(self.model, &self.sens, slot, y_hat)?;
                let (q, report, _) = solve_box_qp(&qp, self.qp)?;
                let q_r = q.as_slice().to_vec();
                let v = voltages_with_setpoints(self.model, &self.sens, slot, y_hat, &q_r);
                (v, q_r, report)
            }
            Physics::Socp => {
                let sol = solve_socp(self.model, slot, y_hat, self.socp)?;
                (sol.state.v, sol.q_r, sol.report)
            }
        };
        if report.status != SolveStatus::Optimal {
            log::warn!("slot solve ended with status {:?} after {} iterations", report.status, report.iterations);
        }
        Ok(SlotOutcome { deviation: self.deviation(&v), v, q_r, action_index, report })
    }

    /// Relax-and-round commitment and setpoints for one slot.
    pub fn solve_slot_realtime(&self, slot: &SlotData) -> Result<SlotOutcome, SolverError> {
        let opts = RealtimeOptions { qp: self.qp, report_gap: true };
        let sol = solve_realtime_relaxed(self.model, &self.sens, slot, opts)?;
        let v = voltages_with_setpoints(self.model, &self.sens, slot, &sol.y, &sol.q_r);
        Ok(SlotOutcome {
            deviation: self.deviation(&v),
            v,
            q_r: sol.q_r,
            action_index: Action::from_bits(&sol.y).index,
            report: sol.report,
        })
    }
}

fn tag(tau: u64, t: usize) -> impl Fn(SolverError) -> SimError {
    move |source| SimError::Solver { tau, t: t + 1, source }
}

/// Cost of one interval, `sum_t ||v(t) - v0 1||^2`, with `y_hat` held for
/// every slot. `tau` only labels errors.
pub fn interval_cost(
    solver: &SlotSolver,
    profile: &ScenarioProfile,
    profile_interval: usize,
    y_hat: &[bool],
    tau: u64,
) -> Result<IntervalOutcome, SimError> {
    let slots = (0..profile.slots_per_interval())
        .map(|t| solver.solve_slot(&profile.slot(profile_interval, t), y_hat).map_err(tag(tau, t)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(IntervalOutcome { cost: slots.iter().map(|s| s.deviation).sum(), slots })
}

/// Same accounting with the commitment re-optimized every slot.
pub(crate) fn interval_cost_realtime(
    solver: &SlotSolver,
    profile: &ScenarioProfile,
    profile_interval: usize,
    tau: u64,
) -> Result<IntervalOutcome, SimError> {
    let slots = (0..profile.slots_per_interval())
        .map(|t| solver.solve_slot_realtime(&profile.slot(profile_interval, t)).map_err(tag(tau, t)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(IntervalOutcome { cost: slots.iter().map(|s| s.deviation).sum(), slots })
}

/// State after an interval: mean net injection over its slots and the
/// commitment that was in force.
pub fn mdp_transition(profile: &ScenarioProfile, profile_interval: usize, y: &[bool]) -> MdpState {
    MdpState { p_bar: profile.interval_mean_injection(profile_interval), y_hat: y.to_vec() }
}

/// Lowest interval cost over all `2^N_a` commitments, per profile
/// interval, for auditing baselines. Returns `(best_index, best_cost)`.
pub fn best_interval_costs(
    solver: &SlotSolver,
    profile: &ScenarioProfile,
    intervals: impl IntoIterator<Item = usize>,
) -> Result<Vec<(usize, f64)>, SimError> {
    let n_caps = solver.model.n_capacitors();
    intervals
        .into_iter()
        .map(|i| {
            let mut best = (0, f64::INFINITY);
            for a in 0..1usize << n_caps {
                let c = interval_cost(solver, profile, i, &Action::from_index(a, n_caps).y, i as u64)?.cost;
                if c < best.1 {
                    best = (a, c);
                }
            }
            Ok(best)
        })
        .collect()
}
