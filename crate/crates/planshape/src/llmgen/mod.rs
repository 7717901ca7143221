//! One-shot generation of planning functions.
//!
//! The pipeline asks the model for a strategy, then for a planner program
//! that implements it, validates the program against sampled states and
//! stores it. Validation failures trigger a bounded number of retries with
//! the failure report appended. A stored artifact for the same prompts is
//! reused without any call.

pub mod prompts;
pub mod transport;

use std::path::Path;

use planshape_core::EnvConfig;
use serde::{Deserialize, Serialize};

use crate::artifact::{now_unix, sha256_hex, ArtifactError, ArtifactKind, ArtifactStore, PlanningArtifact};
use crate::validate::{validate_artifact, ValidationReport};
pub use prompts::PromptBundle;
pub use transport::{
    ApiStyle, ChatRequest, CountingTransport, HttpTransport, RefusingTransport, Stage, StubTransport, Transport,
    TransportError,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model_id: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub api_style: ApiStyle,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Extra attempts after a planner fails validation.
    pub max_retries: usize,
    pub offline: bool,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.anthropic.com/v1/messages".into(),
            model_id: "claude-3-5-sonnet-20240620".into(),
            api_key_env: "ANTHROPIC_API_KEY".into(),
            api_style: ApiStyle::Messages,
            temperature: 0.0,
            max_tokens: 4096,
            max_retries: 3,
            offline: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("offline mode: no cached artifact for these prompts")]
    NoCachedArtifact,
    #[error("offline mode forbids calling the model")]
    Offline,
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("planner generation failed after {attempts} attempts: {last}")]
    Exhausted { attempts: usize, last: String },
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GenerateOptions {
    /// Skip the strategy stage and chain the planning prompt without one.
    pub skip_strategy: bool,
    pub validation_samples: usize,
    pub validation_seed: u64,
}

impl GenerateOptions {
    pub fn new() -> Self {
        Self { skip_strategy: false, validation_samples: 100, validation_seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct GenerateOutcome {
    pub artifact: PlanningArtifact,
    pub hash: String,
    pub cache_hit: bool,
    /// Validation reports of every planner attempt, in order.
    pub reports: Vec<ValidationReport>,
}

fn request(cfg: &LlmConfig, stage: Stage, prompt: String) -> ChatRequest {
    ChatRequest {
        stage,
        model: cfg.model_id.clone(),
        prompt,
        temperature: cfg.temperature,
        max_tokens: cfg.max_tokens,
    }
}

/// One call: the strategy text, verbatim.
pub fn generate_strategy(
    bundle: &PromptBundle,
    cfg: &LlmConfig,
    transport: &mut dyn Transport,
) -> Result<String, GenError> {
    if cfg.offline {
        return Err(GenError::Offline);
    }
    Ok(transport.complete(&request(cfg, Stage::Strategy, bundle.strategy_prompt()))?)
}

/// Cache key: everything fixed before the first call.
pub fn prompt_hash(bundle: &PromptBundle, cfg: &LlmConfig, opts: &GenerateOptions) -> String {
    let key = serde_json::json!({
        "bundle": bundle,
        "model": cfg.model_id,
        "temperature": cfg.temperature,
        "skip_strategy": opts.skip_strategy,
    });
    sha256_hex(key.to_string().as_bytes())
}

/// Samples planner programs until one validates or the retry budget runs out.
pub fn generate_planning_function(
    bundle: &PromptBundle,
    cfg: &LlmConfig,
    env_config: &EnvConfig,
    transport: &mut dyn Transport,
    hash: &str,
    opts: &GenerateOptions,
    work_dir: &Path,
) -> Result<(PlanningArtifact, Vec<ValidationReport>), GenError> {
    if cfg.offline {
        return Err(GenError::Offline);
    }
    let base = bundle.planning_prompt();
    let mut prompt = base.clone();
    let mut reports = Vec::new();
    let attempts = cfg.max_retries + 1;
    let mut last = String::new();
    for _ in 0..attempts {
        let text = transport.complete(&request(cfg, Stage::PlanningFunction, prompt.clone()))?;
        let Some((lang, code)) = prompts::extract_code(&text) else {
            last = "completion contains no code block".into();
            prompt = prompts::with_feedback(&base, &text, &last);
            continue;
        };
        let Some(runtime) = prompts::runtime_for(&lang) else {
            last = format!("unsupported code language {lang:?}");
            prompt = prompts::with_feedback(&base, &code, &last);
            continue;
        };
        let artifact = PlanningArtifact {
            kind: ArtifactKind::External,
            env_id: env_config.env_id(),
            source_text: code.clone(),
            strategy_text: bundle.strategy.clone(),
            prompt_hash: Some(hash.to_string()),
            created_at: now_unix(),
            model_id: Some(cfg.model_id.clone()),
            runtime,
        };
        let report =
            validate_artifact(&artifact, env_config, opts.validation_samples, opts.validation_seed, work_dir)?;
        let passed = report.passed();
        last = format!("{}; {}", report.summary(), report.messages.join("; "));
        reports.push(report);
        if passed {
            return Ok((artifact, reports));
        }
        prompt = prompts::with_feedback(&base, &code, &last);
    }
    Err(GenError::Exhausted { attempts, last })
}

/// Full pipeline with the artifact cache in front.
pub fn generate(
    env_config: &EnvConfig,
    cfg: &LlmConfig,
    transport: &mut dyn Transport,
    store: &ArtifactStore,
    opts: &GenerateOptions,
) -> Result<GenerateOutcome, GenError> {
    let spec = env_config.spec();
    let bundle = PromptBundle::new(&spec);
    let hash = prompt_hash(&bundle, cfg, opts);
    match store.get(spec.env_id, &hash) {
        Ok(artifact) => {
            return Ok(GenerateOutcome { artifact, hash, cache_hit: true, reports: Vec::new() });
        }
        Err(ArtifactError::NotFound { .. }) => {}
        Err(e) => return Err(e.into()),
    }
    if cfg.offline {
        return Err(GenError::NoCachedArtifact);
    }
    let strategy = if opts.skip_strategy { None } else { Some(generate_strategy(&bundle, cfg, transport)?) };
    let bundle = bundle.with_strategy(strategy);
    let work_dir = store.root().join(spec.env_id.as_str()).join("work");
    let (artifact, reports) =
        generate_planning_function(&bundle, cfg, env_config, transport, &hash, opts, &work_dir)?;
    store.put(&artifact)?;
    Ok(GenerateOutcome { artifact, hash, cache_hit: false, reports })
}
