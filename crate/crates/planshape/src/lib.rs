//! Process-level half of the planning-guided MARL stack.
//!
//! [`planshape_core`] does the computation; this crate adds everything that
//! touches the operating system: planner subprocesses, the LLM generation
//! pipeline and its artifact store, checkpoints, and the experiment harness
//! behind the `planshape` binary.
//!
//! Training never depends on [`llmgen`]: the harness only reads stored
//! artifacts, and the core crate has no path to this one.

pub mod artifact;
pub mod checkpoint;
pub mod harness;
pub mod layouts;
pub mod llmgen;
pub mod planner;
pub mod validate;

pub use planshape_core as core;
