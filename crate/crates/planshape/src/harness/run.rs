//! `train` and `eval`: one run directory per seed.
//!
//! A run directory holds `config.toml` (single-seed snapshot),
//! `metrics.csv`, `policy.json`, `planner.json` (provenance) and, once the
//! run has finished, `run.json`. Finished runs are never rewritten.

use std::fs;
use std::path::{Path, PathBuf};

use planshape_core::marl::{evaluate, train, EvalResult, MarlError, TrainOutcome};
use planshape_core::Planner;
use serde::{Deserialize, Serialize};

use super::config::{PlannerChoice, RunConfig};
use super::metrics;
use super::HarnessError;
use crate::artifact::{ArtifactStore, PlanningArtifact};
use crate::checkpoint;
use crate::validate::PlannerSource;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub metrics_schema: u32,
    pub seed: u64,
    pub env: String,
    pub algorithm: String,
    pub total_steps: u64,
    pub eval_interval: u64,
    pub shaping_enabled: bool,
    pub planner: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Trained,
    /// Already complete; left untouched.
    Skipped,
}

pub fn seed_dir(output_dir: &Path, seed: u64) -> PathBuf {
    output_dir.join(format!("seed_{seed}"))
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io(format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(io(path))
}

/// Resolves the configured planner to a launchable source and its provenance.
fn resolve_planner(cfg: &RunConfig) -> Result<Option<(PlannerSource, PlanningArtifact)>, HarnessError> {
    let env_id = cfg.env.env_id();
    match &cfg.planner {
        PlannerChoice::None => Ok(None),
        PlannerChoice::Reference => Ok(Some((PlannerSource::Reference, PlanningArtifact::reference(env_id)))),
        PlannerChoice::Artifact(hash) => {
            let store = ArtifactStore::new(&cfg.artifact_dir);
            let artifact = store.get(env_id, hash).map_err(|e| HarnessError::Config(e.to_string()))?;
            let work = cfg.artifact_dir.join(env_id.as_str()).join("work");
            let source = PlannerSource::for_artifact(&artifact, &work).map_err(|e| HarnessError::Config(e.to_string()))?;
            Ok(Some((source, artifact)))
        }
    }
}

fn write_outcome(dir: &Path, outcome: &TrainOutcome) -> Result<(), HarnessError> {
    write(&dir.join("metrics.csv"), &metrics::to_csv(&outcome.metrics))?;
    write(&dir.join("policy.json"), &checkpoint::to_json(&outcome.policy))
}

fn train_seed(
    cfg: &RunConfig,
    seed: u64,
    planner: Option<&(PlannerSource, PlanningArtifact)>,
) -> Result<RunStatus, HarnessError> {
    let dir = seed_dir(&cfg.output_dir, seed);
    if dir.join("run.json").exists() {
        return Ok(RunStatus::Skipped);
    }
    if dir.exists() && fs::read_dir(&dir).map_err(io(&dir))?.next().is_some() {
        return Err(HarnessError::Config(format!(
            "{} holds an unfinished run; remove it to train this seed again",
            dir.display()
        )));
    }
    fs::create_dir_all(&dir).map_err(io(&dir))?;
    let mut snapshot = cfg.clone();
    snapshot.seeds = vec![seed];
    snapshot.output_dir = dir.clone();
    write(&dir.join("config.toml"), &snapshot.to_toml())?;
    if let Some((_, artifact)) = planner {
        write(&dir.join("planner.json"), &serde_json::to_string_pretty(artifact).expect("artifact serializes"))?;
    }

    let spec = cfg.env.spec();
    let mut session: Option<Box<dyn Planner>> = match planner {
        Some((source, _)) => Some(source.open(&spec).map_err(|e| HarnessError::Train(format!("planner: {e}")))?),
        None => None,
    };
    let tc = cfg.train_config(seed);
    let planner_ref = session.as_mut().map(|b| b.as_mut() as &mut dyn Planner);
    let outcome = match train(&tc, planner_ref) {
        Ok(o) => o,
        Err(MarlError::Planner { step, source, partial }) => {
            write_outcome(&dir, &partial)?;
            return Err(HarnessError::Train(format!("seed {seed}: planner failed at step {step}: {source}")));
        }
        Err(e) => return Err(HarnessError::Train(format!("seed {seed}: {e}"))),
    };
    write_outcome(&dir, &outcome)?;
    let manifest = RunManifest {
        metrics_schema: metrics::SCHEMA_VERSION,
        seed,
        env: cfg.env.env_id().as_str().into(),
        algorithm: cfg.algorithm.name().into(),
        total_steps: cfg.total_steps,
        eval_interval: cfg.eval_interval,
        shaping_enabled: cfg.shaping.enabled,
        planner: cfg.planner.to_string(),
    };
    write(&dir.join("run.json"), &serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    Ok(RunStatus::Trained)
}

/// Trains every seed of `cfg`, `cfg.jobs` at a time. Returns the run
/// directories with their status, in seed order.
pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<(PathBuf, RunStatus)>, HarnessError> {
    cfg.validate()?;
    let planner = resolve_planner(cfg)?;
    let planner = planner.as_ref();
    fs::create_dir_all(&cfg.output_dir).map_err(io(&cfg.output_dir))?;
    let mut results: Vec<Option<Result<RunStatus, HarnessError>>> = cfg.seeds.iter().map(|_| None).collect();
    for (chunk_idx, chunk) in cfg.seeds.chunks(cfg.jobs).enumerate() {
        let done: Vec<Result<RunStatus, HarnessError>> = std::thread::scope(|s| {
            let handles: Vec<_> =
                chunk.iter().map(|&seed| s.spawn(move || train_seed(cfg, seed, planner))).collect();
            handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
        });
        for (k, r) in done.into_iter().enumerate() {
            results[chunk_idx * cfg.jobs + k] = Some(r);
        }
    }
    cfg.seeds
        .iter()
        .zip(results)
        .map(|(&seed, r)| r.expect("every seed ran").map(|st| (seed_dir(&cfg.output_dir, seed), st)))
        .collect()
}

pub fn read_manifest(run_dir: &Path) -> Result<RunManifest, HarnessError> {
    let path = run_dir.join("run.json");
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

/// Greedy evaluation of a finished run's policy.
pub fn cmd_eval(run_dir: &Path, episodes: usize, seed: u64) -> Result<EvalResult, HarnessError> {
    let cfg = RunConfig::load(&run_dir.join("config.toml"))?;
    let policy = checkpoint::load(&run_dir.join("policy.json")).map_err(|e| HarnessError::Io(e.to_string()))?;
    if policy.agents.frame != cfg.env.spec().obs_frame() {
        return Err(HarnessError::Config("policy does not match the run's environment".into()));
    }
    evaluate(&policy, &cfg.env, episodes, seed).map_err(|e| HarnessError::Config(e.to_string()))
}
