//! Alignment reward shaping.
//!
//! Each agent whose action lies in the admissible set of its assignment
//! earns `r_prime`; every other agent receives `p_prime`. The training
//! reward is the environment reward plus the sum of these deltas.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::env::{EnvSpec, JointAction};
use crate::interp::InterpretedState;
use crate::plan::{admissible_actions, AssignmentVector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapingConfig {
    pub r_prime: f64,
    pub p_prime: f64,
    pub enabled: bool,
}

impl Default for ShapingConfig {
    fn default() -> Self {
        Self { r_prime: 0.05, p_prime: -0.05, enabled: true }
    }
}

impl ShapingConfig {
    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ShapingError> {
        if !(self.r_prime > 0.0 && self.r_prime.is_finite()) {
            return Err(ShapingError::RewardSignal(self.r_prime));
        }
        if !(self.p_prime <= 0.0 && self.p_prime.is_finite()) {
            return Err(ShapingError::PenaltySignal(self.p_prime));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ShapingError {
    #[error("r_prime must be positive and finite, got {0}")]
    RewardSignal(f64),
    #[error("p_prime must be nonpositive and finite, got {0}")]
    PenaltySignal(f64),
    #[error("{actions} actions but {assignments} assignments")]
    LengthMismatch { actions: usize, assignments: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapedStep {
    pub env_reward: f64,
    pub deltas: Vec<f64>,
    pub total: f64,
    pub aligned: Vec<bool>,
}

impl ShapedStep {
    pub fn aligned_count(&self) -> usize {
        self.aligned.iter().filter(|&&a| a).count()
    }
}

/// Shapes one step of environment reward.
pub fn shape(
    r: f64,
    actions: &JointAction,
    assignments: &AssignmentVector,
    state: &InterpretedState,
    spec: &EnvSpec,
    cfg: &ShapingConfig,
) -> Result<ShapedStep, ShapingError> {
    if actions.actions.len() != assignments.len() {
        return Err(ShapingError::LengthMismatch {
            actions: actions.actions.len(),
            assignments: assignments.len(),
        });
    }
    let aligned: Vec<bool> = actions
        .actions
        .iter()
        .zip(&assignments.0)
        .enumerate()
        .map(|(i, (&a, &task))| admissible_actions(state, i, task, spec).contains(a))
        .collect();
    if !cfg.enabled {
        let deltas = alloc::vec![0.0; aligned.len()];
        return Ok(ShapedStep { env_reward: r, deltas, total: r, aligned });
    }
    let deltas: Vec<f64> =
        aligned.iter().map(|&ok| if ok { cfg.r_prime } else { cfg.p_prime }).collect();
    let total = r + deltas.iter().sum::<f64>();
    Ok(ShapedStep { env_reward: r, deltas, total, aligned })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{lbf, EnvConfig, GlobalState, LbfConfig, MpeConfig};
    use crate::interp::interpret;
    use crate::plan::Assignment;
    use alloc::vec;

    fn lbf_case() -> (InterpretedState, EnvSpec) {
        let spec = EnvConfig::Lbf(LbfConfig::default()).spec();
        // agent0 (2,2) next to food0 (2,3); agent1 far away at (6,6)
        let s = GlobalState::new(vec![2., 2., 1., 6., 6., 1., 2., 3., 2., 5., 1., 2.]);
        (interpret(&s, &spec).unwrap(), spec)
    }

    #[test]
    fn both_aligned() {
        let (s, spec) = lbf_case();
        let tasks = AssignmentVector(vec![Assignment::Food(0), Assignment::Food(0)]);
        let acts = JointAction::new(vec![lbf::LOAD, lbf::NORTH]);
        let out = shape(1.0, &acts, &tasks, &s, &spec, &ShapingConfig::default()).unwrap();
        assert_eq!(out.aligned, vec![true, true]);
        assert!((out.total - 1.10).abs() < 1e-12);
    }

    #[test]
    fn symmetric_cancellation() {
        let (s, spec) = lbf_case();
        let tasks = AssignmentVector(vec![Assignment::Food(0), Assignment::Food(0)]);
        let acts = JointAction::new(vec![lbf::LOAD, lbf::SOUTH]);
        let out = shape(0.0, &acts, &tasks, &s, &spec, &ShapingConfig::default()).unwrap();
        assert_eq!(out.deltas, vec![0.05, -0.05]);
        assert_eq!(out.total, 0.0);
    }

    #[test]
    fn three_misaligned() {
        let spec = EnvConfig::MpeSpread(MpeConfig::default()).spec();
        let s = interpret(&GlobalState::new(vec![0.0; 18]), &spec).unwrap();
        let tasks = AssignmentVector(vec![Assignment::NoAction; 3]);
        let acts = JointAction::new(vec![1, 2, 3]);
        let out = shape(0.0, &acts, &tasks, &s, &spec, &ShapingConfig::default()).unwrap();
        assert!((out.total + 0.15).abs() < 1e-12);
    }

    #[test]
    fn disabled_passes_reward_through() {
        let (s, spec) = lbf_case();
        let tasks = AssignmentVector(vec![Assignment::Food(0), Assignment::Food(0)]);
        let acts = JointAction::new(vec![lbf::LOAD, lbf::SOUTH]);
        for r in [-0.0, 0.0, 0.5, 1e-300] {
            let out = shape(r, &acts, &tasks, &s, &spec, &ShapingConfig::disabled()).unwrap();
            assert_eq!(out.total.to_bits(), r.to_bits());
            assert_eq!(out.deltas, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn config_validation() {
        assert!(ShapingConfig::default().validate().is_ok());
        assert!(ShapingConfig { r_prime: 0.0, ..Default::default() }.validate().is_err());
        assert!(ShapingConfig { p_prime: 0.1, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn length_mismatch() {
        let (s, spec) = lbf_case();
        let tasks = AssignmentVector(vec![Assignment::Load]);
        let acts = JointAction::new(vec![0, 0]);
        assert!(shape(0.0, &acts, &tasks, &s, &spec, &ShapingConfig::default()).is_err());
    }
}
