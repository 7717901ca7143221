//! Planner validation against states sampled from random rollouts.

use std::path::Path;

use planshape_core::{interpret, Env, EnvConfig, EnvSpec, InterpretedState, JointAction, PlanError, Planner};
use planshape_core::plan::ReferencePlanner;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::artifact::{ArtifactError, ArtifactKind, PlanningArtifact};
use crate::planner::{PlannerCommand, SubprocessPlanner, DEFAULT_TIMEOUT_MS};

/// Where planner outputs come from.
#[derive(Clone, Debug)]
pub enum PlannerSource {
    Reference,
    Process { command: PlannerCommand, timeout_ms: u64 },
}

impl PlannerSource {
    pub fn for_artifact(artifact: &PlanningArtifact, work_dir: &Path) -> Result<Self, ArtifactError> {
        artifact.validate()?;
        Ok(match artifact.kind {
            ArtifactKind::Reference => PlannerSource::Reference,
            ArtifactKind::External => PlannerSource::Process {
                command: artifact.command(work_dir)?,
                timeout_ms: DEFAULT_TIMEOUT_MS,
            },
        })
    }

    /// Opens a planner session for `spec`.
    pub fn open(&self, spec: &EnvSpec) -> Result<Box<dyn Planner>, PlanError> {
        Ok(match self {
            PlannerSource::Reference => Box::new(ReferencePlanner::new(spec.clone())),
            PlannerSource::Process { command, timeout_ms } => {
                Box::new(SubprocessPlanner::spawn(command, spec, *timeout_ms)?)
            }
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub invalid_labels: usize,
    pub timeouts: usize,
    /// Crashes, malformed responses and failed restarts.
    pub exceptions: usize,
    /// First few failure messages, for feedback to the generator.
    pub messages: Vec<String>,
}

impl ValidationReport {
    pub fn failures(&self) -> usize {
        self.invalid_labels + self.timeouts + self.exceptions
    }

    pub fn passed(&self) -> bool {
        self.failures() == 0
    }

    pub fn summary(&self) -> String {
        format!(
            "{} samples: {} invalid labels, {} timeouts, {} exceptions",
            self.samples, self.invalid_labels, self.timeouts, self.exceptions
        )
    }
}

const MAX_MESSAGES: usize = 5;

/// `n` interpreted states from random-action rollouts, resetting on episode
/// end.
pub fn sample_states(env_config: &EnvConfig, n: usize, seed: u64) -> Vec<InterpretedState> {
    let spec = env_config.spec();
    let mut env = Env::new(env_config).expect("validated env config");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = env.reset(rng.next_u64()).expect("reset");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        out.push(interpret(&state, &spec).expect("env emits its own layout"));
        let joint = JointAction::new((0..spec.n_agents).map(|_| rng.gen_range(0..spec.n_actions())).collect());
        let step = env.step(&joint).expect("valid random action");
        state = if step.done { env.reset(rng.next_u64()).expect("reset") } else { step.next_state };
    }
    out
}

/// Runs the planner on `n_samples` sampled states and counts failures.
/// Planner crashes are recorded, never propagated; a session that times
/// out or breaks the protocol is restarted for the next sample.
pub fn validate_planner(source: &PlannerSource, env_config: &EnvConfig, n_samples: usize, seed: u64) -> ValidationReport {
    let spec = env_config.spec();
    let mut report = ValidationReport { samples: n_samples, ..Default::default() };
    let note = |report: &mut ValidationReport, msg: String| {
        if report.messages.len() < MAX_MESSAGES {
            report.messages.push(msg);
        }
    };
    let mut session: Option<Box<dyn Planner>> = None;
    for (k, state) in sample_states(env_config, n_samples, seed).iter().enumerate() {
        if session.is_none() {
            match source.open(&spec) {
                Ok(s) => session = Some(s),
                Err(e) => {
                    report.exceptions += 1;
                    note(&mut report, format!("sample {k}: cannot start planner: {e}"));
                    continue;
                }
            }
        }
        let planner = session.as_mut().expect("session opened above");
        match planner.plan(state) {
            Ok(v) => {
                if let Err(e) = v.validate(&spec) {
                    report.invalid_labels += 1;
                    note(&mut report, format!("sample {k}: {e}"));
                }
            }
            Err(e) => {
                match e {
                    PlanError::UnknownLabel(_) | PlanError::InvalidLabel { .. } | PlanError::WrongLength { .. } => {
                        report.invalid_labels += 1;
                    }
                    PlanError::Timeout(_) => {
                        report.timeouts += 1;
                        session = None;
                    }
                    PlanError::Protocol(_) | PlanError::Crashed(_) => {
                        report.exceptions += 1;
                        session = None;
                    }
                }
                note(&mut report, format!("sample {k}: {e}"));
            }
        }
    }
    report
}

pub fn validate_artifact(
    artifact: &PlanningArtifact,
    env_config: &EnvConfig,
    n_samples: usize,
    seed: u64,
    work_dir: &Path,
) -> Result<ValidationReport, ArtifactError> {
    if artifact.env_id != env_config.env_id() {
        return Err(ArtifactError::Invalid(format!(
            "artifact targets {} but the environment is {}",
            artifact.env_id,
            env_config.env_id()
        )));
    }
    let source = PlannerSource::for_artifact(artifact, work_dir)?;
    Ok(validate_planner(&source, env_config, n_samples, seed))
}
