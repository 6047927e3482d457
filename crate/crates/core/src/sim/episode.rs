use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cost::{interval_cost, interval_cost_realtime, mdp_transition, IntervalOutcome, SlotSolver};
use super::{Policy, RunConfig, SimError};
use crate::drl::{Action, Agent, Experience, MdpState, StepLog};
use crate::feeder::{FeederModel, ScenarioProfile};

const EPISODE_CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub tau: u64,
    pub profile_interval: usize,
    /// For the realtime baseline, the commitment of the first slot.
    pub action_index: usize,
    pub cost: f64,
    pub time_avg_cost: f64,
    pub epsilon: f64,
    pub agent: Option<StepLog>,
    /// Wall-clock time of the interval; excluded from reproducible outputs.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub tau: u64,
    /// 1-based slot within the interval.
    pub t: usize,
    pub action_index: usize,
    /// Squared voltage per node.
    pub v: Vec<f64>,
    /// Setpoint per active inverter.
    pub q_r: Vec<f64>,
    pub deviation: f64,
    pub rounding_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub policy: Policy,
    pub v0: f64,
    pub bus_labels: Vec<i64>,
    /// Labels of the buses carrying active inverters, in setpoint order.
    pub inverter_labels: Vec<i64>,
    pub intervals: Vec<IntervalRecord>,
    pub slots: Vec<SlotRecord>,
}

impl RunTrace {
    pub fn new(policy: Policy, model: &FeederModel) -> Self {
        RunTrace {
            policy,
            v0: model.v0(),
            bus_labels: model.labels().to_vec(),
            inverter_labels: model.active_inverters().iter().map(|&a| model.label(model.inv_nodes()[a])).collect(),
            intervals: Vec::new(),
            slots: Vec::new(),
        }
    }

    pub fn final_time_avg_cost(&self) -> Option<f64> {
        self.intervals.last().map(|r| r.time_avg_cost)
    }
}

// Externally tagged: the RNG state carries u128 fields, which internally
// tagged enums cannot buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Controller {
    Drl { agent: Box<Agent> },
    Fixed { pattern: Vec<bool> },
    Random { rng: ChaCha8Rng },
    Realtime,
}

/// Everything needed to continue an episode exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeCheckpoint {
    version: u32,
    pub config: RunConfig,
    /// Completed intervals.
    pub tau: u64,
    pub state: MdpState,
    pub cost_sum: f64,
    controller: Controller,
}

impl EpisodeCheckpoint {
    pub fn agent(&self) -> Option<&Agent> {
        match &self.controller {
            Controller::Drl { agent } => Some(agent),
            _ => None,
        }
    }
}

/// Alg. 1 as a resumable state machine, one interval per [`Episode::step`].
pub struct Episode<'a> {
    solver: SlotSolver<'a>,
    profile: &'a ScenarioProfile,
    config: RunConfig,
    cost_scale: f64,
    controller: Controller,
    tau: u64,
    state: MdpState,
    cost_sum: f64,
}

/// An episode error together with everything recorded before it.
#[derive(Debug)]
pub struct EpisodeFailure {
    pub error: SimError,
    pub partial: RunTrace,
}

impl<'a> Episode<'a> {
    pub fn new(model: &'a FeederModel, profile: &'a ScenarioProfile, config: RunConfig) -> Result<Self, SimError> {
        let n_caps = model.n_capacitors();
        config.validate(n_caps)?;
        check_profile(model, profile)?;
        let controller = match config.policy {
            Policy::Drlcap => {
                let agent = Agent::new(config.agent.clone(), model.n_buses() + n_caps, n_caps, config.seed)?;
                Controller::Drl { agent: Box::new(agent) }
            }
            Policy::Fixcap => {
                Controller::Fixed { pattern: config.fixcap_pattern.clone().unwrap_or(vec![false; n_caps]) }
            }
            Policy::Randcap => Controller::Random { rng: ChaCha8Rng::seed_from_u64(config.seed) },
            Policy::Realtime => Controller::Realtime,
        };
        let state = mdp_transition(profile, 0, &vec![false; n_caps]);
        Ok(Self::assemble(model, profile, config, controller, 0, state, 0.0))
    }

    pub fn resume(
        model: &'a FeederModel,
        profile: &'a ScenarioProfile,
        checkpoint: EpisodeCheckpoint,
    ) -> Result<Self, SimError> {
        if checkpoint.version != EPISODE_CHECKPOINT_VERSION {
            return Err(SimError::Config(format!("unsupported checkpoint version {}", checkpoint.version)));
        }
        checkpoint.config.validate(model.n_capacitors())?;
        check_profile(model, profile)?;
        if checkpoint.state.dim() != model.n_buses() + model.n_capacitors() {
            return Err(SimError::Config("checkpoint state does not match the feeder".into()));
        }
        let c = checkpoint;
        Ok(Self::assemble(model, profile, c.config, c.controller, c.tau, c.state, c.cost_sum))
    }

    fn assemble(
        model: &'a FeederModel,
        profile: &'a ScenarioProfile,
        config: RunConfig,
        controller: Controller,
        tau: u64,
        state: MdpState,
        cost_sum: f64,
    ) -> Self {
        let cost_scale = config.resolved_cost_scale(model.n_buses(), profile.slots_per_interval());
        Episode {
            solver: SlotSolver::new(model, config.physics),
            profile,
            cost_scale,
            config,
            controller,
            tau,
            state,
            cost_sum,
        }
    }

    pub fn tau(&self) -> u64 {
        self.tau
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn cost_scale(&self) -> f64 {
        self.cost_scale
    }

    pub fn agent(&self) -> Option<&Agent> {
        match &self.controller {
            Controller::Drl { agent } => Some(agent),
            _ => None,
        }
    }

    pub fn checkpoint(&self) -> EpisodeCheckpoint {
        EpisodeCheckpoint {
            version: EPISODE_CHECKPOINT_VERSION,
            config: self.config.clone(),
            tau: self.tau,
            state: self.state.clone(),
            cost_sum: self.cost_sum,
            controller: self.controller.clone(),
        }
    }

    /// Runs interval `tau + 1` and appends its records to `trace`.
    pub fn step(&mut self, trace: &mut RunTrace) -> Result<(), SimError> {
        let start = Instant::now();
        let tau = self.tau + 1;
        let pi = (tau % self.profile.n_intervals() as u64) as usize;
        let n_caps = self.solver.model.n_capacitors();
        let n_actions = 1usize << n_caps;

        let (outcome, action_index, epsilon, next, agent_log): (IntervalOutcome, usize, f64, MdpState, _) =
            match &mut self.controller {
                Controller::Drl { agent } => {
                    let s_prev = self.state.features();
                    let (a, eps) = agent.act(&s_prev).map_err(|source| SimError::Agent { tau, source })?;
                    let y = Action::from_index(a, n_caps).y;
                    let outcome = interval_cost(&self.solver, self.profile, pi, &y, tau)?;
                    let next = mdp_transition(self.profile, pi, &y);
                    let e =
                        Experience { s_prev, action: a, cost: outcome.cost / self.cost_scale, s_next: next.features() };
                    let log = agent.observe(e).map_err(|source| SimError::Agent { tau, source })?;
                    (outcome, a, eps, next, Some(log))
                }
                Controller::Fixed { pattern } => {
                    let outcome = interval_cost(&self.solver, self.profile, pi, pattern, tau)?;
                    let a = Action::from_bits(pattern).index;
                    (outcome, a, 0.0, mdp_transition(self.profile, pi, pattern), None)
                }
                Controller::Random { rng } => {
                    let a = rng.gen_range(0..n_actions);
                    let y = Action::from_index(a, n_caps).y;
                    let outcome = interval_cost(&self.solver, self.profile, pi, &y, tau)?;
                    (outcome, a, 1.0, mdp_transition(self.profile, pi, &y), None)
                }
                Controller::Realtime => {
                    let outcome = interval_cost_realtime(&self.solver, self.profile, pi, tau)?;
                    let a = outcome.slots.first().map_or(0, |s| s.action_index);
                    let y = Action::from_index(a, n_caps).y;
                    (outcome, a, 0.0, mdp_transition(self.profile, pi, &y), None)
                }
            };

        self.tau = tau;
        self.state = next;
        self.cost_sum += outcome.cost;
        for (t, s) in outcome.slots.into_iter().enumerate() {
            trace.slots.push(SlotRecord {
                tau,
                t: t + 1,
                action_index: s.action_index,
                v: s.v,
                q_r: s.q_r,
                deviation: s.deviation,
                rounding_gap: s.report.rounding_gap,
            });
        }
        trace.intervals.push(IntervalRecord {
            tau,
            profile_interval: pi,
            action_index,
            cost: outcome.cost,
            time_avg_cost: self.cost_sum / tau as f64,
            epsilon,
            agent: agent_log,
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(())
    }

    /// Steps until `n_intervals` intervals have completed in total.
    pub fn run_until(&mut self, n_intervals: u64, trace: &mut RunTrace) -> Result<(), SimError> {
        while self.tau < n_intervals {
            self.step(trace)?;
        }
        Ok(())
    }
}

fn check_profile(model: &FeederModel, profile: &ScenarioProfile) -> Result<(), SimError> {
    if profile.n_buses() != model.n_buses() {
        return Err(SimError::Config(format!(
            "profile covers {} buses, feeder has {}",
            profile.n_buses(),
            model.n_buses()
        )));
    }
    if profile.n_intervals() == 0 || profile.slots_per_interval() == 0 {
        return Err(SimError::Config("profile is empty".into()));
    }
    Ok(())
}

/// Runs `config.n_intervals` intervals from scratch.
pub fn run_episode(
    model: &FeederModel,
    profile: &ScenarioProfile,
    config: &RunConfig,
) -> Result<RunTrace, Box<EpisodeFailure>> {
    let mut trace = RunTrace::new(config.policy, model);
    let result =
        Episode::new(model, profile, config.clone()).and_then(|mut ep| ep.run_until(config.n_intervals, &mut trace));
    match result {
        Ok(()) => Ok(trace),
        Err(error) => Err(Box::new(EpisodeFailure { error, partial: trace })),
    }
}

/// Runs every configuration against the same profile, one thread each.
pub fn compare_policies(
    model: &FeederModel,
    profile: &ScenarioProfile,
    configs: &[RunConfig],
) -> Vec<Result<RunTrace, Box<EpisodeFailure>>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs.iter().map(|c| scope.spawn(move || run_episode(model, profile, c))).collect();
        handles.into_iter().map(|h| h.join().expect("episode thread panicked")).collect()
    })
}
