use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::json;
use voltgrid::feeder::{FeederModel, ScenarioProfile};
use voltgrid::sim::{self, best_interval_costs, Episode, EpisodeCheckpoint, Policy, RunConfig, RunTrace, SlotSolver};

use crate::args::{CompareArgs, OracleArgs, RunArgs, SummarizeArgs, ValidateArgs};
use crate::error::{file_error, CliError};
use crate::inputs::{
    build_profile, load_feeder, parse_policy, physics, prepare_out_dir, require_feeder, resolve_profile_source,
    run_config, sha256_hex, write_json, Manifest, ProfileSource, ResumeSource, DEFAULT_INTERVALS, MANIFEST_VERSION,
};

const ALL_POLICIES: [Policy; 4] = [Policy::Drlcap, Policy::Fixcap, Policy::Randcap, Policy::Realtime];

fn manifest(command: &str, model: &FeederModel, profiles: ProfileSource, configs: Vec<RunConfig>) -> Manifest {
    Manifest {
        manifest_version: MANIFEST_VERSION,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        feeder: model.to_spec(),
        profiles,
        configs,
        resumed_from: None,
    }
}

fn load_manifest(path: &Path, command: &str) -> Result<(Manifest, FeederModel, ScenarioProfile), CliError> {
    let m = Manifest::load(path)?;
    if m.command != command {
        return Err(CliError::Usage(format!("manifest records `{}`, not `{command}`", m.command)));
    }
    let model = FeederModel::from_spec(&m.feeder).map_err(|e| file_error(path, e))?;
    let profile = build_profile(&model, &m.profiles, None)?;
    Ok((m, model, profile))
}

fn write_summary(out: &Path, traces: &[RunTrace]) -> Result<(), CliError> {
    let summary = sim::summarize(traces)?;
    write_json(&out.join("summary.json"), &summary)
}

fn read_checkpoint(path: &Path) -> Result<(EpisodeCheckpoint, String), CliError> {
    let bytes = fs::read(path).map_err(|e| file_error(path, e))?;
    let cp = serde_json::from_slice(&bytes).map_err(|e| file_error(path, e))?;
    Ok((cp, sha256_hex(&bytes)))
}

pub fn run(args: RunArgs) -> Result<(), CliError> {
    let (m, model, profile, checkpoint) = if let Some(path) = &args.out.from_manifest {
        let (m, model, profile) = load_manifest(path, "run")?;
        let cp = match &m.resumed_from {
            Some(src) => {
                let (cp, sha) = read_checkpoint(&src.path)?;
                if sha != src.sha256 {
                    return Err(file_error(&src.path, "checkpoint differs from the one the manifest recorded"));
                }
                Some(cp)
            }
            None => None,
        };
        (m, model, profile, cp)
    } else if let Some(path) = &args.checkpoint {
        let (mut cp, sha) = read_checkpoint(path)?;
        if let Some(n) = args.scenario.intervals {
            cp.config.n_intervals = n;
        }
        // The run that wrote the checkpoint left its manifest alongside.
        let sibling = path.parent().map(|d| d.join("manifest.json")).filter(|p| p.is_file());
        let previous = sibling.as_deref().map(Manifest::load).transpose()?;
        let model = match (&args.scenario.feeder, &previous) {
            (Some(f), _) => load_feeder(f)?,
            (None, Some(pm)) => FeederModel::from_spec(&pm.feeder).map_err(|e| CliError::File(e.to_string()))?,
            (None, None) => return Err(CliError::Usage("--feeder is required".into())),
        };
        let explicit = args.scenario.profiles.is_some() || args.scenario.synth.is_some();
        let source = match previous {
            Some(pm) if !explicit => pm.profiles,
            _ => resolve_profile_source(&model, &args.scenario, cp.config.n_intervals as usize + 1)?,
        };
        let profile = build_profile(&model, &source, args.scenario.slots_per_interval)?;
        let mut m = manifest("run", &model, source, vec![cp.config.clone()]);
        m.resumed_from = Some(ResumeSource { path: path.clone(), sha256: sha });
        (m, model, profile, Some(cp))
    } else {
        let model = require_feeder(&args.scenario)?;
        let name = args.policy.as_deref().ok_or_else(|| CliError::Usage("--policy is required".into()))?;
        let config = run_config(parse_policy(name)?, &args.scenario, &args.agent, model.n_capacitors())?;
        let source = resolve_profile_source(&model, &args.scenario, config.n_intervals as usize + 1)?;
        let profile = build_profile(&model, &source, args.scenario.slots_per_interval)?;
        (manifest("run", &model, source, vec![config]), model, profile, None)
    };
    let out = &args.out.out;
    prepare_out_dir(out, args.out.force)?;
    let config = match m.configs.as_slice() {
        [c] => c.clone(),
        _ => return Err(CliError::Usage("a run manifest must hold exactly one configuration".into())),
    };
    write_json(&out.join("manifest.json"), &m)?;

    let mut episode = match checkpoint {
        Some(mut cp) => {
            cp.config.n_intervals = config.n_intervals;
            Episode::resume(&model, &profile, cp)?
        }
        None => Episode::new(&model, &profile, config.clone())?,
    };
    let mut trace = RunTrace::new(config.policy, &model);
    log::info!("{} from interval {} to {}", config.policy.name(), episode.tau(), config.n_intervals);
    let result = run_logged(&mut episode, config.n_intervals, &mut trace);
    sim::write_trace(out, &trace)?;
    write_json(&out.join("checkpoint.json"), &episode.checkpoint())?;
    result?;
    write_summary(out, std::slice::from_ref(&trace))?;
    println!(
        "{}",
        json!({ "out": out, "policy": config.policy.name(), "final_time_avg_cost": trace.final_time_avg_cost() })
    );
    Ok(())
}

fn run_logged(episode: &mut Episode, n: u64, trace: &mut RunTrace) -> Result<(), CliError> {
    while episode.tau() < n {
        episode.step(trace)?;
        if episode.tau() % 100 == 0 {
            log::info!("interval {}: time-averaged cost {:?}", episode.tau(), trace.final_time_avg_cost());
        }
    }
    Ok(())
}

pub fn compare(args: CompareArgs) -> Result<(), CliError> {
    let (m, model, profile) = if let Some(path) = &args.out.from_manifest {
        load_manifest(path, "compare")?
    } else {
        let model = require_feeder(&args.scenario)?;
        let policies = match &args.policies {
            Some(names) => names.iter().map(|n| parse_policy(n)).collect::<Result<Vec<_>, _>>()?,
            None => ALL_POLICIES.to_vec(),
        };
        if policies.is_empty() {
            return Err(CliError::Usage("--policies is empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = policies.iter().find(|p| !seen.insert(**p)) {
            return Err(CliError::Usage(format!("policy `{}` listed twice", dup.name())));
        }
        let configs = policies
            .iter()
            .map(|&p| run_config(p, &args.scenario, &args.agent, model.n_capacitors()))
            .collect::<Result<Vec<_>, _>>()?;
        let n_profile = args.scenario.intervals.unwrap_or(DEFAULT_INTERVALS) as usize + 1;
        let source = resolve_profile_source(&model, &args.scenario, n_profile)?;
        let profile = build_profile(&model, &source, args.scenario.slots_per_interval)?;
        (manifest("compare", &model, source, configs), model, profile)
    };
    let out = &args.out.out;
    prepare_out_dir(out, args.out.force)?;
    write_json(&out.join("manifest.json"), &m)?;

    let results = sim::compare_policies(&model, &profile, &m.configs);
    let mut traces = Vec::new();
    let mut first_error = None;
    for (config, result) in m.configs.iter().zip(results) {
        let dir = out.join(config.policy.name());
        match result {
            Ok(trace) => {
                sim::write_trace(&dir, &trace)?;
                traces.push(trace);
            }
            Err(failure) => {
                sim::write_trace(&dir, &failure.partial)?;
                log::error!("{}: {}", config.policy.name(), failure.error);
                first_error.get_or_insert(failure.error);
            }
        }
    }
    if let Some(e) = first_error {
        return Err(e.into());
    }
    write_summary(out, &traces)?;
    let finals: Vec<_> = traces
        .iter()
        .map(|t| json!({ "policy": t.policy.name(), "final_time_avg_cost": t.final_time_avg_cost() }))
        .collect();
    println!("{}", json!({ "out": out, "policies": finals }));
    Ok(())
}

#[derive(Serialize)]
struct FeederReport {
    ok: bool,
    buses: usize,
    capacitors: usize,
    inverters: usize,
    active_inverters: usize,
    profile_intervals: Option<usize>,
    slots_per_interval: Option<usize>,
}

pub fn validate(args: ValidateArgs) -> Result<(), CliError> {
    let model = load_feeder(&args.feeder)?;
    let mut report = FeederReport {
        ok: true,
        buses: model.n_buses(),
        capacitors: model.n_capacitors(),
        inverters: model.n_inverters(),
        active_inverters: model.active_inverters().len(),
        profile_intervals: None,
        slots_per_interval: None,
    };
    if let Some(path) = &args.profiles {
        let prof = voltgrid::feeder::load_profiles(path, &model, None).map_err(|e| file_error(path, e))?;
        report.profile_intervals = Some(prof.n_intervals());
        report.slots_per_interval = Some(prof.slots_per_interval());
    }
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}

#[derive(Serialize)]
struct OracleRow {
    tau: u64,
    profile_interval: usize,
    best_action_index: usize,
    best_cost: f64,
}

pub fn oracle(args: OracleArgs) -> Result<(), CliError> {
    if !args.enumerate_actions {
        return Err(CliError::Usage("oracle needs --enumerate-actions".into()));
    }
    let model = require_feeder(&args.scenario)?;
    let n = args.scenario.intervals.unwrap_or(DEFAULT_INTERVALS);
    let source = resolve_profile_source(&model, &args.scenario, n as usize + 1)?;
    let profile = build_profile(&model, &source, args.scenario.slots_per_interval)?;
    let solver = SlotSolver::new(&model, physics(args.scenario.physics));
    let n_p = profile.n_intervals() as u64;
    let pis: Vec<usize> = (1..=n).map(|tau| (tau % n_p) as usize).collect();
    let best = best_interval_costs(&solver, &profile, pis.iter().copied())?;

    let sink: Box<dyn Write> = match &args.out {
        Some(path) => {
            if path.exists() && !args.force {
                return Err(CliError::File(format!("{} already exists; pass --force to replace it", path.display())));
            }
            Box::new(fs::File::create(path).map_err(|e| file_error(path, e))?)
        }
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for (tau, (&pi, &(a, c))) in (1..).zip(pis.iter().zip(&best)) {
        w.serialize(OracleRow { tau, profile_interval: pi, best_action_index: a, best_cost: c })
            .map_err(|e| CliError::File(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::File(e.to_string()))
}

pub fn summarize(args: SummarizeArgs) -> Result<(), CliError> {
    let traces = sim::read_trace_dir(&args.dir).map_err(|e| CliError::File(e.to_string()))?;
    let summary = sim::summarize(&traces).map_err(|e| CliError::File(e.to_string()))?;
    let out = args.out.unwrap_or_else(|| args.dir.join("summary.json"));
    write_json(&out, &summary)?;
    let order: Vec<_> = summary.ordering.iter().map(|p| p.name()).collect();
    println!("{}", json!({ "out": out, "ordering": order }));
    Ok(())
}
