//! State interpretation: flat state vector to a semantic record.
//!
//! [`InterpretedState`] is the payload planners receive, in-process or over
//! the planner wire protocol, so its serde shape is part of the protocol.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::env::{lbf, mpe, EnvError, EnvId, EnvSpec, GlobalState};
use crate::math;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum InterpError {
    #[error("state does not match the {env} layout: {source}")]
    Layout { env: EnvId, source: EnvError },
    #[error("slot {index} holds {value}, not a valid grid value")]
    NotAGridValue { index: usize, value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Position {
    Cell { row: i64, col: i64 },
    Point { x: f64, y: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Offset {
    Cell { d_row: i64, d_col: i64 },
    Point { dx: f64, dy: f64 },
}

impl Position {
    /// Offset pointing from `self` to `to`.
    pub fn offset_to(&self, to: &Position) -> Offset {
        match (*self, *to) {
            (Position::Cell { row: r0, col: c0 }, Position::Cell { row: r1, col: c1 }) => {
                Offset::Cell { d_row: r1 - r0, d_col: c1 - c0 }
            }
            (Position::Point { x: x0, y: y0 }, Position::Point { x: x1, y: y1 }) => {
                Offset::Point { dx: x1 - x0, dy: y1 - y0 }
            }
            _ => panic!("mixed position kinds"),
        }
    }
}

impl Offset {
    /// Manhattan length for cells, Euclidean for points.
    pub fn length(&self) -> f64 {
        match *self {
            Offset::Cell { d_row, d_col } => (d_row.abs() + d_col.abs()) as f64,
            Offset::Point { dx, dy } => math::hypot(dx, dy),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Velocity {
    pub vx: f64,
    pub vy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentView {
    pub id: usize,
    pub position: Position,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<Velocity>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Food,
    Landmark,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetView {
    pub id: usize,
    pub kind: TargetKind,
    pub position: Position,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u32>,
    pub active: bool,
}

/// Agent-to-target relation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub offset: Offset,
    pub distance: f64,
    /// Orthogonal adjacency on the grid; absent for particles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacent: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpretedState {
    pub env: EnvId,
    pub agents: Vec<AgentView>,
    pub targets: Vec<TargetView>,
    /// `relative[i][j]` relates agent `i` to target `j`.
    pub relative: Vec<Vec<Relation>>,
}

impl InterpretedState {
    pub fn relation(&self, agent: usize, target: usize) -> &Relation {
        &self.relative[agent][target]
    }

    pub fn active_targets(&self) -> impl Iterator<Item = &TargetView> {
        self.targets.iter().filter(|t| t.active)
    }

    /// Recomputes the relation matrix from positions alone.
    pub fn recompute_relative(agents: &[AgentView], targets: &[TargetView]) -> Vec<Vec<Relation>> {
        agents
            .iter()
            .map(|a| {
                targets
                    .iter()
                    .map(|t| {
                        let offset = a.position.offset_to(&t.position);
                        let distance = offset.length();
                        let adjacent = match offset {
                            Offset::Cell { .. } => Some(distance == 1.0),
                            Offset::Point { .. } => None,
                        };
                        Relation { offset, distance, adjacent }
                    })
                    .collect()
            })
            .collect()
    }
}

fn grid_value(state: &GlobalState, index: usize) -> Result<i64, InterpError> {
    let value = state.values[index];
    if value < 0.0 || libm::trunc(value) != value || !value.is_finite() {
        return Err(InterpError::NotAGridValue { index, value });
    }
    Ok(value as i64)
}

/// Interprets a flat state for the environment described by `spec`.
pub fn interpret(state: &GlobalState, spec: &EnvSpec) -> Result<InterpretedState, InterpError> {
    let layout_err = |source| InterpError::Layout { env: spec.env_id, source };
    if state.len() != spec.state_dim() {
        return Err(layout_err(EnvError::StateLength {
            expected: spec.state_dim(),
            got: state.len(),
        }));
    }
    let (agents, targets) = match spec.env_id {
        EnvId::Lbf => {
            // validates the length once more against the agent/food split
            lbf::Grid::decode(state, spec.n_agents, spec.n_targets).map_err(layout_err)?;
            let mut agents = Vec::with_capacity(spec.n_agents);
            let mut targets = Vec::with_capacity(spec.n_targets);
            for k in 0..spec.n_agents + spec.n_targets {
                let row = grid_value(state, 3 * k)?;
                let col = grid_value(state, 3 * k + 1)?;
                let level = grid_value(state, 3 * k + 2)? as u32;
                let position = Position::Cell { row, col };
                if k < spec.n_agents {
                    agents.push(AgentView { id: k, position, level: Some(level), velocity: None });
                } else {
                    targets.push(TargetView {
                        id: k - spec.n_agents,
                        kind: TargetKind::Food,
                        position,
                        level: Some(level),
                        active: level > 0,
                    });
                }
            }
            (agents, targets)
        }
        EnvId::MpeSpread => {
            let (particles, landmarks) = mpe::decode(state, spec.n_agents).map_err(layout_err)?;
            let agents = particles
                .iter()
                .enumerate()
                .map(|(id, p)| AgentView {
                    id,
                    position: Position::Point { x: p.x, y: p.y },
                    level: None,
                    velocity: Some(Velocity { vx: p.vx, vy: p.vy }),
                })
                .collect();
            let targets = landmarks
                .iter()
                .enumerate()
                .map(|(id, &(x, y))| TargetView {
                    id,
                    kind: TargetKind::Landmark,
                    position: Position::Point { x, y },
                    level: None,
                    active: true,
                })
                .collect();
            (agents, targets)
        }
    };
    let relative = InterpretedState::recompute_relative(&agents, &targets);
    Ok(InterpretedState { env: spec.env_id, agents, targets, relative })
}

/// Readable listing of the interpretation function for `spec`, used as a
/// prompt section. Stable across calls.
pub fn interpretation_source(spec: &EnvSpec) -> String {
    let n = spec.n_agents;
    let m = spec.n_targets;
    let mut out = String::new();
    match spec.env_id {
        EnvId::Lbf => {
            out.push_str(&format!(
                "State interpretation for Level-Based Foraging ({n} agents, {m} foods).\n\n\
                 The raw state is a flat list of {} numbers laid out as follows:\n\n",
                spec.state_dim()
            ));
            out.push_str(&spec.state_layout.markdown_table());
            out.push_str(&format!(
                "\nRows grow downward (NORTH decreases row), columns grow to the right \
                 (EAST increases col). A food whose level is 0 has been collected.\n\n\
                 ```python\n\
                 def interpret(state):\n\
                 \x20   agents, targets = [], []\n\
                 \x20   for i in range({n}):\n\
                 \x20       row, col, level = state[3 * i : 3 * i + 3]\n\
                 \x20       agents.append({{\"id\": i, \"position\": {{\"row\": int(row), \"col\": int(col)}}, \"level\": int(level)}})\n\
                 \x20   for j in range({m}):\n\
                 \x20       row, col, level = state[3 * ({n} + j) : 3 * ({n} + j) + 3]\n\
                 \x20       targets.append({{\"id\": j, \"kind\": \"food\", \"position\": {{\"row\": int(row), \"col\": int(col)}},\n\
                 \x20                       \"level\": int(level), \"active\": level > 0}})\n\
                 \x20   relative = []\n\
                 \x20   for a in agents:\n\
                 \x20       row = []\n\
                 \x20       for t in targets:\n\
                 \x20           d_row = t[\"position\"][\"row\"] - a[\"position\"][\"row\"]\n\
                 \x20           d_col = t[\"position\"][\"col\"] - a[\"position\"][\"col\"]\n\
                 \x20           dist = abs(d_row) + abs(d_col)  # Manhattan\n\
                 \x20           row.append({{\"offset\": {{\"d_row\": d_row, \"d_col\": d_col}}, \"distance\": float(dist),\n\
                 \x20                       \"adjacent\": dist == 1}})\n\
                 \x20       relative.append(row)\n\
                 \x20   return {{\"env\": \"lbf\", \"agents\": agents, \"targets\": targets, \"relative\": relative}}\n\
                 ```\n"
            ));
        }
        EnvId::MpeSpread => {
            out.push_str(&format!(
                "State interpretation for simple spread ({n} agents, {m} landmarks).\n\n\
                 The raw state is a flat list of {} numbers laid out as follows:\n\n",
                spec.state_dim()
            ));
            out.push_str(&spec.state_layout.markdown_table());
            out.push_str(&format!(
                "\nx grows to the right (move_right), y grows upward (move_up). \
                 Each agent carries its velocity fields vx and vy.\n\n\
                 ```python\n\
                 import math\n\n\
                 def interpret(state):\n\
                 \x20   agents, targets = [], []\n\
                 \x20   for i in range({n}):\n\
                 \x20       x, y, vx, vy = state[4 * i : 4 * i + 4]\n\
                 \x20       agents.append({{\"id\": i, \"position\": {{\"x\": x, \"y\": y}}, \"velocity\": {{\"vx\": vx, \"vy\": vy}}}})\n\
                 \x20   base = 4 * {n}\n\
                 \x20   for j in range({m}):\n\
                 \x20       x, y = state[base + 2 * j : base + 2 * j + 2]\n\
                 \x20       targets.append({{\"id\": j, \"kind\": \"landmark\", \"position\": {{\"x\": x, \"y\": y}}, \"active\": True}})\n\
                 \x20   relative = []\n\
                 \x20   for a in agents:\n\
                 \x20       row = []\n\
                 \x20       for t in targets:\n\
                 \x20           dx = t[\"position\"][\"x\"] - a[\"position\"][\"x\"]\n\
                 \x20           dy = t[\"position\"][\"y\"] - a[\"position\"][\"y\"]\n\
                 \x20           row.append({{\"offset\": {{\"dx\": dx, \"dy\": dy}}, \"distance\": math.hypot(dx, dy)}})\n\
                 \x20       relative.append(row)\n\
                 \x20   return {{\"env\": \"mpe_spread\", \"agents\": agents, \"targets\": targets, \"relative\": relative}}\n\
                 ```\n"
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, LbfConfig, MpeConfig};
    use alloc::vec;

    fn lbf_spec() -> EnvSpec {
        EnvConfig::Lbf(LbfConfig::default()).spec()
    }

    #[test]
    fn lbf_offsets_and_adjacency() {
        let state = GlobalState::new(vec![
            2.0, 2.0, 1.0, 6.0, 6.0, 1.0, // agents
            2.0, 3.0, 2.0, 5.0, 1.0, 0.0, // foods
        ]);
        let s = interpret(&state, &lbf_spec()).unwrap();
        let rel = s.relation(0, 0);
        assert_eq!(rel.offset, Offset::Cell { d_row: 0, d_col: 1 });
        assert_eq!(rel.distance, 1.0);
        assert_eq!(rel.adjacent, Some(true));
        assert!(s.targets[0].active);
        assert!(!s.targets[1].active);
    }

    #[test]
    fn mpe_agent_on_landmark() {
        let spec = EnvConfig::MpeSpread(MpeConfig::default()).spec();
        let mut values = vec![0.0; 18];
        values[0] = 0.3;
        values[1] = -0.2;
        values[12] = 0.3;
        values[13] = -0.2;
        let s = interpret(&GlobalState::new(values), &spec).unwrap();
        assert_eq!(s.relation(0, 0).distance, 0.0);
        assert!(s.agents[0].velocity.is_some());
    }

    #[test]
    fn layout_mismatch_is_an_error() {
        let err = interpret(&GlobalState::new(vec![0.0; 5]), &lbf_spec()).unwrap_err();
        assert!(matches!(err, InterpError::Layout { env: EnvId::Lbf, .. }));
        let mut v = vec![1.0; 12];
        v[4] = 1.5;
        assert!(matches!(
            interpret(&GlobalState::new(v), &lbf_spec()),
            Err(InterpError::NotAGridValue { index: 4, .. })
        ));
    }

    #[test]
    fn source_text_is_stable_and_specific() {
        let lbf = interpretation_source(&lbf_spec());
        assert_eq!(lbf, interpretation_source(&lbf_spec()));
        assert!(lbf.contains("| 6 | food0 | row | cell |"));
        let mpe = interpretation_source(&EnvConfig::MpeSpread(MpeConfig::default()).spec());
        assert!(mpe.contains("vx") && mpe.contains("velocity"));
    }
}
