//! Centralised-training learners (MAPPO, QMIX) and the shaped training loop.
//!
//! During training every environment step runs the planning pipeline:
//! interpret the state, ask the planner for assignments, act with the
//! current policy, and replace the environment reward by the shaped reward
//! before it reaches any learner. Evaluation runs on separate environment
//! instances with greedy actions and reports the raw environment return.

mod eval;
pub mod gae;
pub mod mappo;
pub mod qmix;
mod train;

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvError, GlobalState, JointAction, ObsFrame};
use crate::interp::InterpError;
use crate::math;
use crate::nn::{Activation, Mlp, NnError};
use crate::plan::PlanError;

pub use eval::{evaluate, EvalResult, Policy};
pub use gae::gae;
pub use mappo::{Mappo, MappoConfig, MappoLosses};
pub use qmix::{Mixer, Qmix, QmixConfig};
pub use train::{train, MetricsRow, PlannerFallback, TrainConfig, TrainOutcome};

/// One environment step as seen by a learner.
///
/// Per-agent observations are not stored: they are recomputed from `state`
/// through the environment's [`ObsFrame`].
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: GlobalState,
    pub actions: Vec<usize>,
    /// Environment reward `r`.
    pub env_reward: f64,
    /// Shaped training reward `R`.
    pub reward: f64,
    pub aligned: Vec<bool>,
    /// Episode ended on a terminal condition: nothing to bootstrap.
    pub terminal: bool,
    /// Episode ended for any reason (terminal or step limit).
    pub episode_end: bool,
    /// Behaviour-policy log-probabilities (MAPPO only, empty otherwise).
    pub log_probs: Vec<f64>,
    pub next_state: GlobalState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum AlgorithmConfig {
    Mappo(MappoConfig),
    Qmix(QmixConfig),
}

impl AlgorithmConfig {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmConfig::Mappo(_) => "mappo",
            AlgorithmConfig::Qmix(_) => "qmix",
        }
    }

    pub fn validate(&self) -> Result<(), MarlError> {
        match self {
            AlgorithmConfig::Mappo(c) => c.validate(),
            AlgorithmConfig::Qmix(c) => c.validate(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MarlError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("non-finite {what} at update {update}")]
    NonFinite { what: &'static str, update: u64 },
    #[error("planner failed at step {step}: {source}")]
    Planner {
        step: u64,
        source: PlanError,
        /// Metrics and policy as they stood when the planner failed.
        partial: alloc::boxed::Box<TrainOutcome>,
    },
}

/// Per-agent networks, either one shared network or one per agent.
///
/// Inputs are egocentric agent observations.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentNets {
    pub nets: Vec<Mlp>,
    pub shared: bool,
    pub frame: ObsFrame,
}

impl AgentNets {
    pub fn net(&self, agent: usize) -> &Mlp {
        if self.shared {
            &self.nets[0]
        } else {
            &self.nets[agent]
        }
    }

    pub fn slot(&self, agent: usize) -> usize {
        if self.shared {
            0
        } else {
            agent
        }
    }

    pub fn n_agents(&self) -> usize {
        self.frame.n_agents
    }

    pub fn observe(&self, state: &GlobalState, agent: usize) -> Vec<f64> {
        self.frame.observe(state, agent)
    }

    /// Raw outputs (logits or Q-values) for every agent.
    pub fn outputs(&self, state: &GlobalState) -> Result<Vec<Vec<f64>>, NnError> {
        (0..self.n_agents()).map(|i| self.net(i).forward(&self.observe(state, i))).collect()
    }

    pub fn greedy(&self, state: &GlobalState) -> Result<JointAction, NnError> {
        let outs = self.outputs(state)?;
        Ok(JointAction::new(outs.iter().map(|o| math::argmax(o)).collect()))
    }
}

/// Trained decentralised policy: greedy in its per-agent network outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedPolicy {
    pub algorithm: &'static str,
    pub agents: AgentNets,
}

impl Policy for TrainedPolicy {
    fn greedy_actions(&self, state: &GlobalState) -> JointAction {
        self.agents.greedy(state).expect("policy input matches its environment")
    }
}

/// Network shape shared by actors, critics and agent Q-networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { hidden: alloc::vec![64, 64], activation: Activation::Relu }
    }
}

impl NetConfig {
    pub fn sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.hidden.len() + 2);
        s.push(input);
        s.extend_from_slice(&self.hidden);
        s.push(output);
        s
    }
}

/// Samples an index from a categorical distribution given by `probs`.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
