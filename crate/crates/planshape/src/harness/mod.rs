//! Experiment orchestration behind the `planshape` command line.

pub mod compare;
pub mod config;
pub mod gradcheck;
pub mod metrics;
pub mod run;

use std::path::Path;

use planshape_core::EnvConfig;

use crate::artifact::ArtifactStore;
use crate::llmgen::{self, GenError, GenerateOptions, GenerateOutcome, LlmConfig, Transport};
pub use config::{ConfigError, PlannerChoice, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TRAIN: i32 = 3;
pub const EXIT_GENERATE: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("training aborted: {0}")]
    Train(String),
    #[error("generation failed: {0}")]
    Generate(#[from] GenError),
    #[error("comparison error: {0}")]
    Compare(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("gradient check failed: max relative error {0:e}")]
    GradCheck(f64),
}

impl From<ConfigError> for HarnessError {
    fn from(e: ConfigError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => EXIT_CONFIG,
            HarnessError::Train(_) => EXIT_TRAIN,
            HarnessError::Generate(_) => EXIT_GENERATE,
            _ => EXIT_FAILURE,
        }
    }
}

/// Command context: the model transport and the offline switch.
///
/// Only `generate` ever reaches the transport; training and evaluation
/// run on stored or reference planners.
pub struct Session<'t> {
    pub transport: &'t mut dyn Transport,
    pub offline: bool,
}

impl Session<'_> {
    pub fn cmd_generate(
        &mut self,
        env: &EnvConfig,
        llm: &LlmConfig,
        artifact_dir: &Path,
        opts: &GenerateOptions,
    ) -> Result<GenerateOutcome, HarnessError> {
        let mut llm = llm.clone();
        llm.offline |= self.offline;
        let store = ArtifactStore::new(artifact_dir);
        Ok(llmgen::generate(env, &llm, self.transport, &store, opts)?)
    }

    pub fn cmd_train(&mut self, cfg: &RunConfig) -> Result<Vec<(std::path::PathBuf, run::RunStatus)>, HarnessError> {
        run::cmd_train(cfg)
    }

    pub fn cmd_eval(&mut self, run_dir: &Path, episodes: usize, seed: u64) -> Result<planshape_core::marl::EvalResult, HarnessError> {
        run::cmd_eval(run_dir, episodes, seed)
    }
}
