use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeederError, FeederModel};

/// Absolute slack allowed when checking `p_g <= p_cap`, to absorb decimal
/// round-off in profile files.
const CAPACITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileShape {
    pub n_intervals: usize,
    pub slots_per_interval: usize,
}

/// Per-slot consumption and generation for every node, per-unit.
///
/// Storage is dense and indexed `(interval, slot, node)` with zero-based
/// interval and slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioProfile {
    shape: ProfileShape,
    n_buses: usize,
    p_c: Vec<f64>,
    q_c: Vec<f64>,
    p_g: Vec<f64>,
}

/// Borrowed view of one slot.
#[derive(Debug, Clone, Copy)]
pub struct SlotData<'a> {
    pub p_c: &'a [f64],
    pub q_c: &'a [f64],
    pub p_g: &'a [f64],
}

impl SlotData<'_> {
    /// Net active injection `p_g - p_c`.
    pub fn net_p(&self) -> Vec<f64> {
        self.p_g.iter().zip(self.p_c).map(|(g, c)| g - c).collect()
    }
}

impl ScenarioProfile {
    pub fn zeros(shape: ProfileShape, n_buses: usize) -> Self {
        let len = shape.n_intervals * shape.slots_per_interval * n_buses;
        Self { shape, n_buses, p_c: vec![0.0; len], q_c: vec![0.0; len], p_g: vec![0.0; len] }
    }

    pub fn shape(&self) -> ProfileShape {
        self.shape
    }

    pub fn n_intervals(&self) -> usize {
        self.shape.n_intervals
    }

    pub fn slots_per_interval(&self) -> usize {
        self.shape.slots_per_interval
    }

    pub fn n_buses(&self) -> usize {
        self.n_buses
    }

    fn offset(&self, interval: usize, slot: usize) -> usize {
        assert!(interval < self.shape.n_intervals && slot < self.shape.slots_per_interval);
        (interval * self.shape.slots_per_interval + slot) * self.n_buses
    }

    pub fn slot(&self, interval: usize, slot: usize) -> SlotData<'_> {
        let o = self.offset(interval, slot);
        let r = o..o + self.n_buses;
        SlotData { p_c: &self.p_c[r.clone()], q_c: &self.q_c[r.clone()], p_g: &self.p_g[r] }
    }

    /// Sets one entry without validation; call [`ScenarioProfile::validate`]
    /// afterwards.
    pub fn set(&mut self, interval: usize, slot: usize, node: usize, p_c: f64, q_c: f64, p_g: f64) {
        let o = self.offset(interval, slot) + node;
        self.p_c[o] = p_c;
        self.q_c[o] = q_c;
        self.p_g[o] = p_g;
    }

    /// Checks the device taxonomy and capacity limits against `model`.
    pub fn validate(&self, model: &FeederModel) -> Result<(), FeederError> {
        if self.n_buses != model.n_buses() {
            return Err(FeederError::Validation(format!(
                "profile has {} buses, feeder has {}",
                self.n_buses,
                model.n_buses()
            )));
        }
        for tau in 0..self.shape.n_intervals {
            for t in 0..self.shape.slots_per_interval {
                let s = self.slot(tau, t);
                for k in 0..self.n_buses {
                    let (pc, qc, pg) = (s.p_c[k], s.q_c[k], s.p_g[k]);
                    let at = || format!("tau={} t={} bus={}", tau + 1, t + 1, model.label(k));
                    if !(pc.is_finite() && qc.is_finite() && pg.is_finite()) {
                        return Err(FeederError::Validation(format!("non-finite value at {}", at())));
                    }
                    if pc < 0.0 || qc < 0.0 || pg < 0.0 {
                        return Err(FeederError::Validation(format!("negative value at {}", at())));
                    }
                    if model.is_capacitor_node(k) && (pc != 0.0 || qc != 0.0 || pg != 0.0) {
                        return Err(FeederError::Validation(format!(
                            "capacitor bus carries load or generation at {}",
                            at()
                        )));
                    }
                    let cap = model.p_cap_at(k);
                    if pg > cap + CAPACITY_SLACK {
                        return Err(FeederError::Validation(format!(
                            "p_g={pg} exceeds inverter capacity {cap} at {}",
                            at()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Mean net active injection per node over one interval.
    pub fn interval_mean_injection(&self, interval: usize) -> Vec<f64> {
        let nt = self.shape.slots_per_interval;
        let mut acc = vec![0.0; self.n_buses];
        for t in 0..nt {
            let s = self.slot(interval, t);
            for k in 0..self.n_buses {
                acc[k] += s.p_g[k] - s.p_c[k];
            }
        }
        acc.iter_mut().for_each(|a| *a /= nt as f64);
        acc
    }

    pub fn write_csv<W: std::io::Write>(&self, model: &FeederModel, out: W) -> Result<(), FeederError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| FeederError::Parse(e.to_string());
        w.write_record(["tau", "t", "bus", "p_c", "q_c", "p_g"]).map_err(io)?;
        for tau in 0..self.shape.n_intervals {
            for t in 0..self.shape.slots_per_interval {
                let s = self.slot(tau, t);
                for k in 0..self.n_buses {
                    if s.p_c[k] == 0.0 && s.q_c[k] == 0.0 && s.p_g[k] == 0.0 {
                        continue;
                    }
                    w.serialize((tau + 1, t + 1, model.label(k), s.p_c[k], s.q_c[k], s.p_g[k])).map_err(io)?;
                }
            }
        }
        w.flush().map_err(|e| FeederError::Io("profile".into(), e))?;
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct ProfileRow {
    tau: usize,
    t: usize,
    bus: i64,
    p_c: f64,
    q_c: f64,
    p_g: f64,
}

/// Reads a profile CSV. Missing `(tau, t, bus)` rows default to zero.
///
/// When `shape` is `None` it is inferred from the largest `tau` and `t`
/// present; an empty body then has no shape and is rejected.
pub fn load_profiles(
    path: impl AsRef<Path>,
    model: &FeederModel,
    shape: Option<ProfileShape>,
) -> Result<ScenarioProfile, FeederError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| FeederError::Io(path.display().to_string(), e))?;
    read_profiles(file, model, shape)
}

pub fn read_profiles<R: Read>(
    reader: R,
    model: &FeederModel,
    shape: Option<ProfileShape>,
) -> Result<ScenarioProfile, FeederError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| FeederError::Parse(e.to_string()))?.clone();
    let expected = ["tau", "t", "bus", "p_c", "q_c", "p_g"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(FeederError::Parse(format!(
            "profile header must be `{}`, found `{}`",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<ProfileRow>().enumerate() {
        let row = rec.map_err(|e| FeederError::Parse(format!("row {}: {e}", i + 2)))?;
        if row.tau == 0 || row.t == 0 {
            return Err(FeederError::Parse(format!("row {}: tau and t are 1-based", i + 2)));
        }
        rows.push(row);
    }
    let shape = match shape {
        Some(s) => s,
        None => {
            if rows.is_empty() {
                return Err(FeederError::Parse("empty profile and no declared shape".into()));
            }
            ProfileShape {
                n_intervals: rows.iter().map(|r| r.tau).max().unwrap_or(0),
                slots_per_interval: rows.iter().map(|r| r.t).max().unwrap_or(0),
            }
        }
    };
    let mut profile = ScenarioProfile::zeros(shape, model.n_buses());
    for row in rows {
        if row.tau > shape.n_intervals || row.t > shape.slots_per_interval {
            return Err(FeederError::Validation(format!(
                "row tau={} t={} outside declared shape {}x{}",
                row.tau, row.t, shape.n_intervals, shape.slots_per_interval
            )));
        }
        let k = model
            .node_of_label(row.bus)
            .ok_or_else(|| FeederError::Validation(format!("profile references unknown bus {}", row.bus)))?;
        profile.set(row.tau - 1, row.t - 1, k, row.p_c, row.q_c, row.p_g);
    }
    profile.validate(model)?;
    Ok(profile)
}
