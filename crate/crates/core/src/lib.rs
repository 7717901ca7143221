//! Allocation-only core of the planning-guided multi-agent RL stack.
//!
//! Everything here is pure computation: the two cooperative environments,
//! state interpretation, planning functions and their admissible-action
//! relation, alignment reward shaping, a small MLP/Adam kit, and the MAPPO
//! and QMIX learners together with the shaped training loop. IO (planner
//! subprocesses, LLM calls, files, CLI) lives in the `planshape` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod env;
pub mod interp;
pub mod marl;
pub mod nn;
pub mod plan;
pub mod shaping;

mod math;

pub use env::{Env, EnvConfig, EnvId, EnvSpec, GlobalState, JointAction, StepResult};
pub use interp::{interpret, interpretation_source, InterpretedState};
pub use plan::{admissible_actions, plan_reference, ActionSet, Assignment, AssignmentVector, PlanError, Planner};
pub use shaping::{shape, ShapedStep, ShapingConfig};
