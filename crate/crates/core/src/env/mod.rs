//! Cooperative Markov games with a single shared reward.
//!
//! Two environments are provided: Level-Based Foraging ([`lbf`]) in its
//! forced-cooperation form, and the particle "simple spread" task with
//! discrete actions ([`mpe`]). Both expose the full global state as a flat
//! vector whose layout is described by [`StateLayout`].

pub mod lbf;
pub mod mpe;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::plan::Assignment;

pub use lbf::{Lbf, LbfConfig};
pub use mpe::{MpeConfig, MpeSpread};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    Lbf,
    MpeSpread,
}

impl EnvId {
    /// Wire name used by the planner protocol and the artifact store.
    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::Lbf => "lbf",
            EnvId::MpeSpread => "mpe_spread",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lbf" => Some(EnvId::Lbf),
            "mpe_spread" | "mpe" => Some(EnvId::MpeSpread),
            _ => None,
        }
    }
}

impl core::fmt::Display for EnvId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// LBF action labels, in index order.
pub const LBF_ACTIONS: [&str; 6] = ["NONE", "NORTH", "SOUTH", "WEST", "EAST", "LOAD"];
/// Simple-spread action labels, in index order.
pub const MPE_ACTIONS: [&str; 5] = ["no_action", "move_left", "move_right", "move_down", "move_up"];

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("joint action has {got} entries, expected {expected}")]
    ActionCount { expected: usize, got: usize },
    #[error("action index {action} for agent {agent} is outside the action set")]
    ActionRange { agent: usize, action: usize },
    #[error("state vector has length {got}, layout expects {expected}")]
    StateLength { expected: usize, got: usize },
    #[error("step called on a finished episode")]
    EpisodeOver,
}

/// One named slot of the flat state vector.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayoutEntry {
    pub index: usize,
    pub entity: String,
    pub field: &'static str,
    pub unit: &'static str,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StateLayout {
    pub entries: Vec<LayoutEntry>,
}

impl StateLayout {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Markdown table of the layout.
    pub fn markdown_table(&self) -> String {
        let mut out = String::from("| index | entity | field | unit |\n|---|---|---|---|\n");
        for e in &self.entries {
            out.push_str(&format!("| {} | {} | {} | {} |\n", e.index, e.entity, e.field, e.unit));
        }
        out
    }

    fn push_group(&mut self, entity: String, fields: &[(&'static str, &'static str)]) {
        for &(field, unit) in fields {
            let index = self.entries.len();
            self.entries.push(LayoutEntry { index, entity: entity.clone(), field, unit });
        }
    }
}

/// Static description of an environment instance.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub env_id: EnvId,
    pub n_agents: usize,
    /// Foods (LBF) or landmarks (MPE).
    pub n_targets: usize,
    pub action_set: &'static [&'static str],
    pub assignment_set: Vec<Assignment>,
    pub episode_limit: usize,
    pub state_layout: StateLayout,
    /// Side length of the LBF grid; `None` for continuous environments.
    pub grid_size: Option<usize>,
}

impl EnvSpec {
    pub fn n_actions(&self) -> usize {
        self.action_set.len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_layout.len()
    }

    /// Width of a per-agent observation.
    pub fn obs_dim(&self) -> usize {
        self.obs_frame().dim()
    }

    pub fn obs_frame(&self) -> ObsFrame {
        ObsFrame { env_id: self.env_id, n_agents: self.n_agents, n_targets: self.n_targets }
    }

    pub fn assignment_labels(&self) -> Vec<String> {
        self.assignment_set.iter().map(|a| a.label()).collect()
    }
}

/// Flat environment state vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalState {
    pub values: Vec<f64>,
}

impl GlobalState {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

}

/// Egocentric view of the global state used as a per-agent observation.
///
/// The observing agent's own slots come first in absolute units; every
/// other agent and target follows in index order with its position given
/// relative to the observer. Velocities and levels are copied unchanged. A
/// one-hot agent id closes the vector. The content is the full global
/// state, only re-expressed around the observer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObsFrame {
    pub env_id: EnvId,
    pub n_agents: usize,
    pub n_targets: usize,
}

impl ObsFrame {
    fn widths(&self) -> (usize, usize) {
        match self.env_id {
            EnvId::Lbf => (3, 3),
            EnvId::MpeSpread => (4, 2),
        }
    }

    pub fn dim(&self) -> usize {
        let (aw, tw) = self.widths();
        self.n_agents * aw + self.n_targets * tw + self.n_agents
    }

    pub fn observe(&self, state: &GlobalState, agent: usize) -> Vec<f64> {
        let (aw, tw) = self.widths();
        let v = &state.values;
        let own = &v[agent * aw..(agent + 1) * aw];
        let mut obs = Vec::with_capacity(self.dim());
        obs.extend_from_slice(own);
        for k in (0..self.n_agents).filter(|&k| k != agent) {
            let slot = &v[k * aw..(k + 1) * aw];
            obs.push(slot[0] - own[0]);
            obs.push(slot[1] - own[1]);
            obs.extend_from_slice(&slot[2..]);
        }
        let base = self.n_agents * aw;
        for j in 0..self.n_targets {
            let slot = &v[base + j * tw..base + (j + 1) * tw];
            obs.push(slot[0] - own[0]);
            obs.push(slot[1] - own[1]);
            obs.extend_from_slice(&slot[2..]);
        }
        obs.extend((0..self.n_agents).map(|i| if i == agent { 1.0 } else { 0.0 }));
        obs
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointAction {
    pub actions: Vec<usize>,
}

impl JointAction {
    pub fn new(actions: Vec<usize>) -> Self {
        Self { actions }
    }

    pub fn validate(&self, spec: &EnvSpec) -> Result<(), EnvError> {
        if self.actions.len() != spec.n_agents {
            return Err(EnvError::ActionCount { expected: spec.n_agents, got: self.actions.len() });
        }
        for (agent, &action) in self.actions.iter().enumerate() {
            if action >= spec.n_actions() {
                return Err(EnvError::ActionRange { agent, action });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepInfo {
    pub foods_remaining: Option<usize>,
    pub collisions: Option<usize>,
    /// Episode ended on the step limit rather than a terminal condition.
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: GlobalState,
    /// Shared environment reward.
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

impl StepResult {
    /// True when the episode ended on a real terminal condition, so no
    /// value should be bootstrapped from `next_state`.
    pub fn terminal(&self) -> bool {
        self.done && !self.info.truncated
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvConfig {
    Lbf(LbfConfig),
    MpeSpread(MpeConfig),
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::Lbf(LbfConfig::default())
    }
}

impl EnvConfig {
    pub fn env_id(&self) -> EnvId {
        match self {
            EnvConfig::Lbf(_) => EnvId::Lbf,
            EnvConfig::MpeSpread(_) => EnvId::MpeSpread,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        match self {
            EnvConfig::Lbf(c) => c.validate(),
            EnvConfig::MpeSpread(c) => c.validate(),
        }
    }

    pub fn spec(&self) -> EnvSpec {
        match self {
            EnvConfig::Lbf(c) => c.spec(),
            EnvConfig::MpeSpread(c) => c.spec(),
        }
    }
}

/// A running environment instance.
#[derive(Clone, Debug)]
pub enum Env {
    Lbf(Lbf),
    MpeSpread(MpeSpread),
}

impl Env {
    pub fn new(config: &EnvConfig) -> Result<Self, EnvError> {
        Ok(match config {
            EnvConfig::Lbf(c) => Env::Lbf(Lbf::new(c.clone())?),
            EnvConfig::MpeSpread(c) => Env::MpeSpread(MpeSpread::new(c.clone())?),
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        match self {
            Env::Lbf(e) => e.spec(),
            Env::MpeSpread(e) => e.spec(),
        }
    }

    pub fn reset(&mut self, seed: u64) -> Result<GlobalState, EnvError> {
        match self {
            Env::Lbf(e) => e.reset(seed),
            Env::MpeSpread(e) => Ok(e.reset(seed)),
        }
    }

    pub fn step(&mut self, action: &JointAction) -> Result<StepResult, EnvError> {
        match self {
            Env::Lbf(e) => e.step(action),
            Env::MpeSpread(e) => e.step(action),
        }
    }

    pub fn state(&self) -> &GlobalState {
        match self {
            Env::Lbf(e) => e.state(),
            Env::MpeSpread(e) => e.state(),
        }
    }
}

/// Fresh initial state for `config`, deterministic in `seed`.
pub fn reset(config: &EnvConfig, seed: u64) -> Result<GlobalState, EnvError> {
    Env::new(config)?.reset(seed)
}

/// Undiscounted sum of environment rewards over one episode.
pub fn episode_return(rewards: &[f64]) -> f64 {
    rewards.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn episode_return_sums() {
        assert_eq!(episode_return(&[0.0, 0.0, 0.5, 0.5]), 1.0);
        assert_eq!(episode_return(&[]), 0.0);
    }

    #[test]
    fn mpe_layout_length() {
        let cfg = EnvConfig::MpeSpread(MpeConfig { n_agents: 3, ..MpeConfig::default() });
        let s = reset(&cfg, 3).unwrap();
        assert_eq!(s.len(), 3 * 4 + 3 * 2);
        assert_eq!(cfg.spec().state_dim(), 18);
    }

    #[test]
    fn action_sets_are_fixed() {
        let lbf = EnvConfig::Lbf(LbfConfig::default()).spec();
        assert_eq!(lbf.action_set, &["NONE", "NORTH", "SOUTH", "WEST", "EAST", "LOAD"]);
        let mpe = EnvConfig::MpeSpread(MpeConfig::default()).spec();
        assert_eq!(
            mpe.action_set,
            &["no_action", "move_left", "move_right", "move_down", "move_up"]
        );
    }

    #[test]
    fn assignment_labels_unique() {
        for cfg in [
            EnvConfig::Lbf(LbfConfig::default()),
            EnvConfig::MpeSpread(MpeConfig { n_agents: 4, ..MpeConfig::default() }),
        ] {
            let labels = cfg.spec().assignment_labels();
            let mut sorted = labels.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), labels.len());
        }
    }

    #[test]
    fn malformed_joint_action_rejected() {
        let spec = EnvConfig::Lbf(LbfConfig::default()).spec();
        assert_eq!(
            JointAction::new(vec![0]).validate(&spec),
            Err(EnvError::ActionCount { expected: 2, got: 1 })
        );
        assert_eq!(
            JointAction::new(vec![0, 6]).validate(&spec),
            Err(EnvError::ActionRange { agent: 1, action: 6 })
        );
    }

    #[test]
    fn lbf_observation_is_egocentric() {
        let frame = EnvConfig::Lbf(LbfConfig::default()).spec().obs_frame();
        let s = GlobalState::new(vec![1., 2., 1., 4., 6., 1., 3., 3., 2., 5., 1., 0.]);
        assert_eq!(
            frame.observe(&s, 1),
            vec![4., 6., 1., -3., -4., 1., -1., -3., 2., 1., -5., 0., 0., 1.]
        );
        assert_eq!(frame.observe(&s, 0).len(), frame.dim());
    }

    #[test]
    fn mpe_observation_is_egocentric() {
        let cfg = MpeConfig { n_agents: 3, ..MpeConfig::default() };
        let frame = EnvConfig::MpeSpread(cfg).spec().obs_frame();
        let mut values = vec![0.0; 18];
        values[4..8].copy_from_slice(&[0.5, -0.5, 0.1, 0.2]);
        values[12..14].copy_from_slice(&[1.0, 1.0]);
        let obs = frame.observe(&GlobalState::new(values), 1);
        assert_eq!(obs.len(), 21);
        assert_eq!(&obs[..4], &[0.5, -0.5, 0.1, 0.2]);
        assert_eq!(&obs[4..8], &[-0.5, 0.5, 0.0, 0.0]);
        assert_eq!(&obs[12..14], &[0.5, 1.5]);
        assert_eq!(&obs[18..], &[0.0, 1.0, 0.0]);
    }
}
