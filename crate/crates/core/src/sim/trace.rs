use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::episode::{IntervalRecord, RunTrace, SlotRecord};
use super::{Policy, SimError};

/// Number of trailing slots the per-bus voltage statistics cover.
const SUMMARY_SLOTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceFiles {
    pub costs: PathBuf,
    pub voltages: PathBuf,
    pub setpoints: PathBuf,
    pub timing: PathBuf,
    pub agent_log: Option<PathBuf>,
    pub rounding_gaps: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct CostRow {
    tau: u64,
    policy: String,
    cost: f64,
    time_avg_cost: f64,
    epsilon: f64,
    action_index: usize,
}

#[derive(Serialize, Deserialize)]
struct VoltageRow {
    tau: u64,
    t: usize,
    bus: i64,
    v_pu: f64,
    policy: String,
}

#[derive(Serialize, Deserialize)]
struct SetpointRow {
    tau: u64,
    t: usize,
    bus: i64,
    q_r_pu: f64,
    policy: String,
}

#[derive(Serialize)]
struct AgentRow {
    tau: u64,
    buffer_len: usize,
    target_synced: bool,
    loss: Option<f64>,
}

#[derive(Serialize)]
struct GapRow {
    tau: u64,
    t: usize,
    action_index: usize,
    rounding_gap: Option<f64>,
}

#[derive(Serialize)]
struct TimingRow {
    tau: u64,
    seconds: f64,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> SimError + '_ {
    move |e| SimError::Io(path.display().to_string(), e)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> SimError + '_ {
    move |e| SimError::Trace(format!("{}: {e}", path.display()))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), SimError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, SimError> {
    let file = File::open(path).map_err(io_err(path))?;
    csv::Reader::from_reader(file).deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err(path))
}

/// Writes the trace CSVs into `dir`. Everything except `timing.csv` is a
/// deterministic function of the run inputs.
pub fn write_trace(dir: &Path, trace: &RunTrace) -> Result<TraceFiles, SimError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let policy = trace.policy.name();
    let files = TraceFiles {
        costs: dir.join("costs.csv"),
        voltages: dir.join("voltages.csv"),
        setpoints: dir.join("setpoints.csv"),
        timing: dir.join("timing.csv"),
        agent_log: (trace.policy == Policy::Drlcap).then(|| dir.join("agent_log.csv")),
        rounding_gaps: (trace.policy == Policy::Realtime).then(|| dir.join("rounding_gaps.csv")),
    };
    write_rows(
        &files.costs,
        trace.intervals.iter().map(|r| CostRow {
            tau: r.tau,
            policy: policy.into(),
            cost: r.cost,
            time_avg_cost: r.time_avg_cost,
            epsilon: r.epsilon,
            action_index: r.action_index,
        }),
    )?;
    write_rows(
        &files.voltages,
        trace.slots.iter().flat_map(|s| {
            s.v.iter().zip(&trace.bus_labels).map(move |(&v, &bus)| VoltageRow {
                tau: s.tau,
                t: s.t,
                bus,
                v_pu: v.max(0.0).sqrt(),
                policy: policy.into(),
            })
        }),
    )?;
    write_rows(
        &files.setpoints,
        trace.slots.iter().flat_map(|s| {
            s.q_r.iter().zip(&trace.inverter_labels).map(move |(&q, &bus)| SetpointRow {
                tau: s.tau,
                t: s.t,
                bus,
                q_r_pu: q,
                policy: policy.into(),
            })
        }),
    )?;
    write_rows(&files.timing, trace.intervals.iter().map(|r| TimingRow { tau: r.tau, seconds: r.seconds }))?;
    if let Some(path) = &files.agent_log {
        write_rows(
            path,
            trace.intervals.iter().filter_map(|r| r.agent.as_ref()).map(|l| AgentRow {
                tau: l.tau,
                buffer_len: l.buffer_len,
                target_synced: l.target_synced,
                loss: l.loss,
            }),
        )?;
    }
    if let Some(path) = &files.rounding_gaps {
        write_rows(
            path,
            trace.slots.iter().map(|s| GapRow {
                tau: s.tau,
                t: s.t,
                action_index: s.action_index,
                rounding_gap: s.rounding_gap,
            }),
        )?;
    }
    Ok(files)
}

/// Reads one run directory (`costs.csv` present) or a comparison directory
/// whose subdirectories are run directories. Voltages come back squared
/// from the stored magnitudes; agent logs and timings are not restored.
pub fn read_trace_dir(dir: &Path) -> Result<Vec<RunTrace>, SimError> {
    if dir.join("costs.csv").is_file() {
        return Ok(vec![read_run_dir(dir)?]);
    }
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("costs.csv").is_file())
        .collect();
    subdirs.sort();
    if subdirs.is_empty() {
        return Err(SimError::Trace(format!("{}: no costs.csv found", dir.display())));
    }
    subdirs.iter().map(|d| read_run_dir(d)).collect()
}

fn read_run_dir(dir: &Path) -> Result<RunTrace, SimError> {
    let costs: Vec<CostRow> = read_rows(&dir.join("costs.csv"))?;
    let volts: Vec<VoltageRow> = read_rows(&dir.join("voltages.csv"))?;
    let setpoints: Vec<SetpointRow> = read_rows(&dir.join("setpoints.csv"))?;
    let policy_name = costs
        .first()
        .map(|r| r.policy.clone())
        .ok_or_else(|| SimError::Trace(format!("{}: costs.csv has no rows", dir.display())))?;
    let policy = Policy::parse(&policy_name)
        .ok_or_else(|| SimError::Trace(format!("{}: unknown policy {policy_name}", dir.display())))?;

    let mut slots: BTreeMap<(u64, usize), SlotRecord> = BTreeMap::new();
    let mut bus_labels = Vec::new();
    let first_key = volts.first().map(|r| (r.tau, r.t));
    for r in &volts {
        if Some((r.tau, r.t)) == first_key {
            bus_labels.push(r.bus);
        }
        let rec = slots.entry((r.tau, r.t)).or_insert_with(|| empty_slot(r.tau, r.t));
        rec.v.push(r.v_pu * r.v_pu);
    }
    let mut inverter_labels = Vec::new();
    let first_key = setpoints.first().map(|r| (r.tau, r.t));
    for r in &setpoints {
        if Some((r.tau, r.t)) == first_key {
            inverter_labels.push(r.bus);
        }
        slots.entry((r.tau, r.t)).or_insert_with(|| empty_slot(r.tau, r.t)).q_r.push(r.q_r_pu);
    }
    if slots.values().any(|s| s.v.len() != bus_labels.len()) {
        return Err(SimError::Trace(format!("{}: ragged voltages.csv", dir.display())));
    }
    let intervals = costs
        .iter()
        .map(|r| IntervalRecord {
            tau: r.tau,
            profile_interval: 0,
            action_index: r.action_index,
            cost: r.cost,
            time_avg_cost: r.time_avg_cost,
            epsilon: r.epsilon,
            agent: None,
            seconds: 0.0,
        })
        .collect();
    Ok(RunTrace { policy, v0: 1.0, bus_labels, inverter_labels, intervals, slots: slots.into_values().collect() })
}

fn empty_slot(tau: u64, t: usize) -> SlotRecord {
    SlotRecord { tau, t, action_index: 0, v: Vec::new(), q_r: Vec::new(), deviation: 0.0, rounding_gap: None }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusStats {
    pub bus: i64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: Policy,
    pub n_intervals: usize,
    pub final_time_avg_cost: f64,
    pub time_avg_curve: Vec<f64>,
    /// Slots covered by `per_bus`.
    pub summary_slots: usize,
    /// Voltage magnitude statistics over the trailing slots.
    pub per_bus: Vec<BusStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub policies: Vec<PolicySummary>,
    /// Policies from lowest to highest final time-averaged cost.
    pub ordering: Vec<Policy>,
}

pub fn summarize(traces: &[RunTrace]) -> Result<Summary, SimError> {
    let mut policies = Vec::new();
    for tr in traces {
        let final_cost = tr
            .final_time_avg_cost()
            .ok_or_else(|| SimError::Trace(format!("{} trace has no intervals", tr.policy.name())))?;
        let tail = &tr.slots[tr.slots.len().saturating_sub(SUMMARY_SLOTS)..];
        let per_bus = tr
            .bus_labels
            .iter()
            .enumerate()
            .map(|(k, &bus)| {
                let mags: Vec<f64> = tail.iter().map(|s| s.v[k].max(0.0).sqrt()).collect();
                BusStats {
                    bus,
                    min: mags.iter().copied().fold(f64::INFINITY, f64::min),
                    max: mags.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    mean: mags.iter().sum::<f64>() / mags.len().max(1) as f64,
                }
            })
            .collect();
        policies.push(PolicySummary {
            policy: tr.policy,
            n_intervals: tr.intervals.len(),
            final_time_avg_cost: final_cost,
            time_avg_curve: tr.intervals.iter().map(|r| r.time_avg_cost).collect(),
            summary_slots: tail.len(),
            per_bus,
        });
    }
    let mut ordering: Vec<(f64, Policy)> = policies.iter().map(|p| (p.final_time_avg_cost, p.policy)).collect();
    ordering.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(Summary { policies, ordering: ordering.into_iter().map(|(_, p)| p).collect() })
}
