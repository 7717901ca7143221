//! Generated reference for the flat state layouts.

use planshape_core::env::{LbfConfig, MpeConfig};
use planshape_core::EnvConfig;

/// Markdown for `docs/state-layouts.md`, built from the environments' own
/// layout tables at their default sizes.
pub fn state_layouts_markdown() -> String {
    let mut out = String::from(
        "# State layouts\n\n\
         Generated by `planshape layouts`; do not edit by hand.\n\n\
         Every environment exposes its global state as one flat vector of numbers. \
         The tables below list each slot at the default environment sizes. Larger \
         instances repeat the per-agent and per-target groups in index order.\n",
    );
    let envs = [
        ("Level-Based Foraging", EnvConfig::Lbf(LbfConfig::default()), "Grid cells; rows grow downward. A food level of 0 means the food was collected."),
        ("Simple spread", EnvConfig::MpeSpread(MpeConfig::default()), "World units, with y pointing up; velocities in world units per step."),
    ];
    for (title, cfg, note) in envs {
        let spec = cfg.spec();
        out.push_str(&format!(
            "\n## {title} (`{}`, {} agents, {} targets)\n\n{note}\n\n",
            spec.env_id,
            spec.n_agents,
            spec.n_targets
        ));
        out.push_str(&spec.state_layout.markdown_table());
    }
    out
}
