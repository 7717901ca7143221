//! Prompt sections and their fixed chaining order.

use planshape_core::{interpretation_source, EnvId, EnvSpec};
use serde::{Deserialize, Serialize};

use crate::artifact::sha256_hex;
use crate::planner::PROTOCOL;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub env_description: String,
    pub guideline: String,
    pub strategy: Option<String>,
    pub interpretation_source: String,
    pub output_contract: String,
}

impl PromptBundle {
    /// Bundle for `spec` with no strategy yet.
    pub fn new(spec: &EnvSpec) -> Self {
        Self {
            env_description: env_description(spec),
            guideline: guideline(spec.env_id).to_string(),
            strategy: None,
            interpretation_source: interpretation_source(spec),
            output_contract: output_contract(spec),
        }
    }

    pub fn with_strategy(mut self, strategy: Option<String>) -> Self {
        self.strategy = strategy;
        self
    }

    /// Stable JSON serialization; identical bundles give identical bytes.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("bundle serializes")
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }

    /// Strategy-stage prompt: environment and guideline only.
    pub fn strategy_prompt(&self) -> String {
        format!(
            "{}\n\n{}\n\nDescribe, in plain prose and numbered steps, a strategy that assigns each \
             agent a high-level task at every step so the team earns the reward as fast as \
             possible. Do not write code.",
            self.env_description, self.guideline
        )
    }

    /// Planning-function prompt, chained as environment, strategy,
    /// interpretation, output contract.
    pub fn planning_prompt(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.env_description);
        out.push_str("\n\n");
        if let Some(s) = self.strategy.as_deref().filter(|s| !s.trim().is_empty()) {
            out.push_str("Strategy to implement:\n\n");
            out.push_str(s.trim());
            out.push_str("\n\n");
        }
        out.push_str(&self.interpretation_source);
        out.push_str("\n\n");
        out.push_str(&self.output_contract);
        out
    }
}

fn env_description(spec: &EnvSpec) -> String {
    let n = spec.n_agents;
    let m = spec.n_targets;
    let actions = spec.action_set.join(", ");
    let tasks = spec.assignment_labels().join(", ");
    match spec.env_id {
        EnvId::Lbf => format!(
            "Environment: Level-Based Foraging on a square grid with {n} agents and {m} foods. \
             Each agent and each food has a level. A food is collected when agents standing \
             orthogonally next to it choose LOAD in the same step and their levels add up to \
             at least the food's level. Every food here needs all {n} agents at once. The team \
             shares one reward, earned only when food is collected, and an episode lasts at most \
             {} steps.\n\nLow-level actions: {actions}.\nHigh-level tasks: {tasks}. \
             FoodK means walk toward food K, Load means pick up the adjacent food, None means \
             stay put.",
            spec.episode_limit
        ),
        EnvId::MpeSpread => format!(
            "Environment: cooperative navigation with {n} agents and {m} landmarks in a square \
             world. Agents accelerate in the direction of their action. The team shares a reward \
             equal to minus the sum, over landmarks, of the distance to the closest agent, with \
             a penalty whenever two agents collide. An episode lasts {} steps.\n\n\
             Low-level actions: {actions}.\nHigh-level tasks: {tasks}. LandmarkK means move \
             toward landmark K, NoAction means hold still.",
            spec.episode_limit
        ),
    }
}

fn guideline(env: EnvId) -> &'static str {
    match env {
        EnvId::Lbf => {
            "Guideline: agents cannot collect food alone, so they should agree on one food, walk \
             to cells beside it and load together. Avoid sending agents to different foods."
        }
        EnvId::MpeSpread => {
            "Guideline: every landmark should end up covered by exactly one agent. Prefer \
             assignments that keep total travel short and avoid two agents heading to the same \
             landmark."
        }
    }
}

fn output_contract(spec: &EnvSpec) -> String {
    let labels = spec
        .assignment_labels()
        .iter()
        .map(|l| format!("\"{l}\""))
        .collect::<Vec<_>>()
        .join(", ");
    format!(
        "Output contract: write one self-contained Python 3 program using only the standard \
         library, inside a single ```python code block. The program is a planner that talks \
         over stdin and stdout with one JSON object per line.\n\
         1. It first reads a handshake such as \
         {{\"protocol\":\"{PROTOCOL}\",\"env\":\"{env}\",\"n_agents\":{n},\"assignment_set\":[{labels}]}} \
         and answers {{\"ok\":true}}.\n\
         2. Then, for every line {{\"seq\":N,\"state\":S}} it answers \
         {{\"seq\":N,\"assignments\":[...]}} with exactly {n} labels taken from the assignment \
         set, one per agent in agent order. S has the shape returned by interpret above.\n\
         3. It must flush stdout after every line, print nothing else, and answer each request \
         within one second.",
        env = spec.env_id.as_str(),
        n = spec.n_agents,
    )
}

/// Appends a validation failure report to a planning prompt for a retry.
pub fn with_feedback(prompt: &str, previous: &str, report: &str) -> String {
    format!(
        "{prompt}\n\nYour previous program failed validation.\n\nProgram:\n```python\n{}\n```\n\n\
         Failures: {report}\n\nReturn a corrected program.",
        previous.trim_end()
    )
}

/// First fenced code block in `text` and its language tag.
pub fn extract_code(text: &str) -> Option<(String, String)> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    let newline = after.find('\n')?;
    let lang = after[..newline].trim().to_ascii_lowercase();
    let body = &after[newline + 1..];
    let end = body.find("```")?;
    Some((lang, body[..end].to_string()))
}

/// Interpreter command for a code-block language tag.
pub fn runtime_for(lang: &str) -> Option<Vec<String>> {
    match lang {
        "" | "python" | "python3" | "py" => Some(vec!["python3".into()]),
        "sh" | "bash" | "shell" => Some(vec!["sh".into()]),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use planshape_core::env::{LbfConfig, MpeConfig};
    use planshape_core::EnvConfig;

    #[test]
    fn bundles_are_deterministic() {
        for cfg in [EnvConfig::Lbf(LbfConfig::default()), EnvConfig::MpeSpread(MpeConfig::default())] {
            let a = PromptBundle::new(&cfg.spec());
            let b = PromptBundle::new(&cfg.spec());
            assert_eq!(a.canonical_json(), b.canonical_json());
            assert_eq!(a.hash(), b.hash());
        }
    }

    #[test]
    fn sections_chain_in_order() {
        let spec = EnvConfig::Lbf(LbfConfig::default()).spec();
        let b = PromptBundle::new(&spec).with_strategy(Some("STRATEGY-MARK".into()));
        let p = b.planning_prompt();
        let at = |needle: &str| p.find(needle).unwrap();
        assert!(at("Environment:") < at("STRATEGY-MARK"));
        assert!(at("STRATEGY-MARK") < at("State interpretation"));
        assert!(at("State interpretation") < at("Output contract"));
    }

    #[test]
    fn empty_strategy_is_skipped() {
        let spec = EnvConfig::Lbf(LbfConfig::default()).spec();
        let p = PromptBundle::new(&spec).planning_prompt();
        assert!(!p.contains("Strategy to implement"));
    }

    #[test]
    fn code_extraction() {
        let text = "Here:\n```python\nprint(1)\n```\nthanks";
        assert_eq!(extract_code(text), Some(("python".into(), "print(1)\n".into())));
        assert_eq!(extract_code("no code"), None);
        assert_eq!(runtime_for("py"), Some(vec!["python3".to_string()]));
        assert_eq!(runtime_for("rust"), None);
    }
}
