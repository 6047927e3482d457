use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use voltgrid::drl::EpsilonSchedule;
use voltgrid::feeder::{self, ChainSpec, FeederModel, FeederSpec, ScenarioProfile};
use voltgrid::sim::{Physics, Policy, RunConfig};

use crate::args::{AgentArgs, PhysicsArg, ScenarioArgs};
use crate::error::{file_error, CliError};

pub const DEFAULT_INTERVALS: u64 = 100;
pub const DEFAULT_SLOTS: usize = 5;
pub const MANIFEST_VERSION: u32 = 1;

/// Where the per-slot loads and generation came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum ProfileSource {
    Synth { seed: u64, spec: ChainSpec },
    File { path: PathBuf, sha256: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub manifest_version: u32,
    pub artifact_version: String,
    pub command: String,
    pub feeder: FeederSpec,
    pub profiles: ProfileSource,
    pub configs: Vec<RunConfig>,
    /// Checkpoint a resumed run started from.
    #[serde(default)]
    pub resumed_from: Option<ResumeSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResumeSource {
    pub path: PathBuf,
    pub sha256: String,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| file_error(path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| file_error(path, e))?;
        if m.manifest_version != MANIFEST_VERSION {
            return Err(file_error(path, format!("unsupported manifest version {}", m.manifest_version)));
        }
        Ok(m)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_feeder(arg: &str) -> Result<FeederModel, CliError> {
    match arg {
        "builtin:sce47" => Ok(feeder::sce47()),
        "builtin:ieee123" => Ok(feeder::ieee123()),
        _ if arg.starts_with("builtin:") => Err(CliError::Usage(format!("unknown builtin feeder `{arg}`"))),
        path => feeder::load_feeder(path).map_err(|e| CliError::File(format!("{path}: {e}"))),
    }
}

pub fn require_feeder(s: &ScenarioArgs) -> Result<FeederModel, CliError> {
    load_feeder(s.feeder.as_deref().ok_or_else(|| CliError::Usage("--feeder is required".into()))?)
}

fn default_chain(model: &FeederModel, arg: Option<&str>, n: usize, slots: usize) -> ChainSpec {
    match arg {
        Some("builtin:sce47") => feeder::sce47_scenario(n, slots),
        Some("builtin:ieee123") => feeder::ieee123_scenario(n, slots),
        _ => feeder::default_scenario(model, n, slots),
    }
}

/// Resolves `--profiles` / `--synth` into a source description. Synthesized
/// profiles cover `n_profile` intervals.
pub fn resolve_profile_source(
    model: &FeederModel,
    s: &ScenarioArgs,
    n_profile: usize,
) -> Result<ProfileSource, CliError> {
    let slots = s.slots_per_interval.unwrap_or(DEFAULT_SLOTS);
    let seed = s.seed.unwrap_or(0);
    if let Some(path) = &s.profiles {
        let bytes = fs::read(path).map_err(|e| file_error(path, e))?;
        return Ok(ProfileSource::File { path: path.clone(), sha256: sha256_hex(&bytes) });
    }
    let spec = match s.synth.as_deref() {
        None | Some("default") => default_chain(model, s.feeder.as_deref(), n_profile, slots),
        Some(path) => {
            let path = Path::new(path);
            let text = fs::read_to_string(path).map_err(|e| file_error(path, e))?;
            let mut spec: ChainSpec = serde_json::from_str(&text).map_err(|e| file_error(path, e))?;
            if s.slots_per_interval.is_some() {
                spec.slots_per_interval = slots;
            }
            spec
        }
    };
    Ok(ProfileSource::Synth { seed, spec })
}

pub fn build_profile(
    model: &FeederModel,
    source: &ProfileSource,
    slots_hint: Option<usize>,
) -> Result<ScenarioProfile, CliError> {
    match source {
        ProfileSource::Synth { seed, spec } => feeder::synth_markov_profile(model, *seed, spec).map_err(CliError::from),
        ProfileSource::File { path, sha256 } => {
            let bytes = fs::read(path).map_err(|e| file_error(path, e))?;
            let actual = sha256_hex(&bytes);
            if &actual != sha256 {
                return Err(file_error(path, format!("sha256 {actual} does not match recorded {sha256}")));
            }
            let prof = feeder::read_profiles(bytes.as_slice(), model, None).map_err(|e| file_error(path, e))?;
            if let Some(nt) = slots_hint {
                if prof.slots_per_interval() != nt {
                    return Err(CliError::Usage(format!(
                        "--slots-per-interval {nt} disagrees with {} slots in {}",
                        prof.slots_per_interval(),
                        path.display()
                    )));
                }
            }
            Ok(prof)
        }
    }
}

pub fn physics(arg: Option<PhysicsArg>) -> Physics {
    match arg {
        Some(PhysicsArg::Socp) => Physics::Socp,
        _ => Physics::Linear,
    }
}

pub fn parse_policy(s: &str) -> Result<Policy, CliError> {
    Policy::parse(s)
        .ok_or_else(|| CliError::Usage(format!("unknown policy `{s}` (expected drlcap, fixcap, randcap or realtime)")))
}

fn parse_pattern(s: &str, n_caps: usize) -> Result<Vec<bool>, CliError> {
    match s {
        "off" => Ok(vec![false; n_caps]),
        "on" => Ok(vec![true; n_caps]),
        bits => bits
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(CliError::Usage(format!("fixcap pattern `{s}` must be 0/1 digits, `off` or `on`"))),
            })
            .collect(),
    }
}

fn parse_epsilon(s: &str) -> Result<EpsilonSchedule, CliError> {
    if s == "stepped" {
        return Ok(EpsilonSchedule::default());
    }
    s.parse::<f64>()
        .map(|epsilon| EpsilonSchedule::Constant { epsilon })
        .map_err(|_| CliError::Usage(format!("--epsilon must be `stepped` or a number, got `{s}`")))
}

/// Builds a run configuration from flags, each flag overriding one field.
pub fn run_config(policy: Policy, s: &ScenarioArgs, a: &AgentArgs, n_caps: usize) -> Result<RunConfig, CliError> {
    let mut c = RunConfig::new(policy, s.seed.unwrap_or(0), s.intervals.unwrap_or(DEFAULT_INTERVALS));
    c.physics = physics(s.physics);
    let ag = &mut c.agent;
    if let Some(v) = a.gamma {
        ag.gamma = v;
    }
    if let Some(v) = a.replay {
        ag.replay = v;
    }
    if let Some(v) = a.batch {
        ag.batch = v;
    }
    if let Some(v) = a.target_sync {
        ag.target_sync = v;
    }
    if let Some(v) = a.hyper_k {
        ag.hyper_k = v;
    }
    if let Some(v) = a.lr {
        ag.beta = v;
    }
    if let Some(v) = &a.hidden {
        ag.hidden = v.clone();
    }
    if a.output_scale.is_some() {
        ag.output_scale = a.output_scale;
    }
    if let Some(e) = &a.epsilon {
        ag.epsilon = parse_epsilon(e)?;
    }
    c.cost_scale = a.cost_scale;
    if let Some(p) = &a.fixcap_pattern {
        c.fixcap_pattern = Some(parse_pattern(p, n_caps)?);
    }
    c.validate(n_caps).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(c)
}

/// Creates `dir`, refusing to touch an existing one unless `force`.
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() {
        if !force {
            return Err(CliError::File(format!("{} already exists; pass --force to replace it", dir.display())));
        }
        if dir.is_dir() {
            fs::remove_dir_all(dir).map_err(|e| file_error(dir, e))?;
        } else {
            fs::remove_file(dir).map_err(|e| file_error(dir, e))?;
        }
    }
    fs::create_dir_all(dir).map_err(|e| file_error(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| file_error(path, e))?;
    fs::write(path, text + "\n").map_err(|e| file_error(path, e))
}
