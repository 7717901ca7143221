//! High-level planning: assignment labels, the reference planning
//! functions, and the many-to-many map from assignments to admissible
//! low-level actions.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::env::{lbf, mpe, EnvId, EnvSpec};
use crate::interp::{InterpretedState, Offset, Position};

/// Per-axis distance below which a particle counts as already aligned with
/// its landmark on that axis.
pub const MPE_DEAD_BAND: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Assignment {
    None,
    Food(usize),
    Load,
    Landmark(usize),
    NoAction,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("unknown assignment label {0:?}")]
    UnknownLabel(String),
    #[error("assignment {label} is not valid for {env}")]
    InvalidLabel { label: String, env: EnvId },
    #[error("planner returned {got} assignments for {expected} agents")]
    WrongLength { expected: usize, got: usize },
    #[error("planner protocol error: {0}")]
    Protocol(String),
    #[error("planner timed out after {0} ms")]
    Timeout(u64),
    #[error("planner process failed: {0}")]
    Crashed(String),
}

impl Assignment {
    pub fn label(&self) -> String {
        match self {
            Assignment::None => "None".to_string(),
            Assignment::Food(i) => format!("Food{i}"),
            Assignment::Load => "Load".to_string(),
            Assignment::Landmark(i) => format!("Landmark{i}"),
            Assignment::NoAction => "NoAction".to_string(),
        }
    }

    /// Parses a wire label without checking it against any environment.
    pub fn parse(label: &str) -> Result<Self, PlanError> {
        let indexed = |prefix: &str| -> Option<usize> {
            let digits = label.strip_prefix(prefix)?;
            if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            digits.parse().ok()
        };
        match label {
            "None" => Ok(Assignment::None),
            "Load" => Ok(Assignment::Load),
            "NoAction" => Ok(Assignment::NoAction),
            _ => indexed("Food")
                .map(Assignment::Food)
                .or_else(|| indexed("Landmark").map(Assignment::Landmark))
                .ok_or_else(|| PlanError::UnknownLabel(label.to_string())),
        }
    }

    /// Parses a label and checks it belongs to `spec`'s assignment set.
    pub fn parse_for(label: &str, spec: &EnvSpec) -> Result<Self, PlanError> {
        let a = Self::parse(label)?;
        if !spec.assignment_set.contains(&a) {
            return Err(PlanError::InvalidLabel { label: label.to_string(), env: spec.env_id });
        }
        Ok(a)
    }
}

impl Serialize for Assignment {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for Assignment {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let label = String::deserialize(d)?;
        Assignment::parse(&label).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssignmentVector(pub Vec<Assignment>);

impl AssignmentVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, spec: &EnvSpec) -> Result<(), PlanError> {
        if self.0.len() != spec.n_agents {
            return Err(PlanError::WrongLength { expected: spec.n_agents, got: self.0.len() });
        }
        for a in &self.0 {
            if !spec.assignment_set.contains(a) {
                return Err(PlanError::InvalidLabel { label: a.label(), env: spec.env_id });
            }
        }
        Ok(())
    }

    /// Validates wire labels and builds the vector.
    pub fn from_labels<S: AsRef<str>>(labels: &[S], spec: &EnvSpec) -> Result<Self, PlanError> {
        let v = labels
            .iter()
            .map(|l| Assignment::parse_for(l.as_ref(), spec))
            .collect::<Result<Vec<_>, _>>()?;
        let v = AssignmentVector(v);
        v.validate(spec)?;
        Ok(v)
    }
}

/// Planning function: interpreted state to one assignment per agent.
pub trait Planner {
    fn plan(&mut self, state: &InterpretedState) -> Result<AssignmentVector, PlanError>;
}

/// In-process reference planner.
#[derive(Clone, Debug)]
pub struct ReferencePlanner {
    spec: EnvSpec,
}

impl ReferencePlanner {
    pub fn new(spec: EnvSpec) -> Self {
        Self { spec }
    }
}

impl Planner for ReferencePlanner {
    fn plan(&mut self, state: &InterpretedState) -> Result<AssignmentVector, PlanError> {
        Ok(plan_reference(state, &self.spec))
    }
}

/// Reference planning function.
///
/// LBF: all agents share the active food with the smallest summed Manhattan
/// distance, and switch to `Load` once all of them are adjacent to it.
/// Simple spread: greedy closest-pair matching of agents to landmarks.
/// Ties go to the lowest index.
pub fn plan_reference(state: &InterpretedState, spec: &EnvSpec) -> AssignmentVector {
    let n = spec.n_agents;
    match spec.env_id {
        EnvId::Lbf => {
            let mut best: Option<(usize, f64)> = None;
            for t in state.active_targets() {
                let total: f64 = (0..n).map(|i| state.relation(i, t.id).distance).sum();
                if best.is_none_or(|(_, d)| total < d) {
                    best = Some((t.id, total));
                }
            }
            let Some((food, _)) = best else {
                return AssignmentVector(alloc::vec![Assignment::None; n]);
            };
            let all_adjacent = (0..n).all(|i| state.relation(i, food).adjacent == Some(true));
            let a = if all_adjacent { Assignment::Load } else { Assignment::Food(food) };
            AssignmentVector(alloc::vec![a; n])
        }
        EnvId::MpeSpread => {
            let m = state.targets.len();
            let mut out = alloc::vec![Assignment::NoAction; n];
            let mut agent_free = alloc::vec![true; n];
            let mut target_free = alloc::vec![true; m];
            for _ in 0..n.min(m) {
                let mut best: Option<(usize, usize, f64)> = None;
                for i in (0..n).filter(|&i| agent_free[i]) {
                    for j in (0..m).filter(|&j| target_free[j]) {
                        let d = state.relation(i, j).distance;
                        if best.is_none_or(|(_, _, bd)| d < bd) {
                            best = Some((i, j, d));
                        }
                    }
                }
                let (i, j, _) = best.expect("free agent and landmark remain");
                out[i] = Assignment::Landmark(j);
                agent_free[i] = false;
                target_free[j] = false;
            }
            AssignmentVector(out)
        }
    }
}

/// Small set of action indices.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ActionSet(u16);

impl ActionSet {
    pub const EMPTY: ActionSet = ActionSet(0);

    pub fn of(actions: &[usize]) -> Self {
        let mut s = Self::EMPTY;
        for &a in actions {
            s.insert(a);
        }
        s
    }

    pub fn insert(&mut self, action: usize) {
        assert!(action < 16);
        self.0 |= 1 << action;
    }

    pub fn contains(&self, action: usize) -> bool {
        action < 16 && self.0 & (1 << action) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..16).filter(move |&a| self.contains(a))
    }
}

impl core::fmt::Debug for ActionSet {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Actions that count as following `assignment` for `agent`.
///
/// For `Food(i)` away from the food, these are the moves into a free cell
/// that shorten the agent's shortest path to a free cell beside the food,
/// with other agents and uncollected foods as obstacles. An agent with no
/// such path is told to wait. Assignments from the other environment's
/// vocabulary admit nothing.
pub fn admissible_actions(
    state: &InterpretedState,
    agent: usize,
    assignment: Assignment,
    spec: &EnvSpec,
) -> ActionSet {
    match (spec.env_id, assignment) {
        (EnvId::Lbf, Assignment::None) => ActionSet::of(&[lbf::NONE]),
        (EnvId::Lbf, Assignment::Load) => ActionSet::of(&[lbf::LOAD]),
        (EnvId::Lbf, Assignment::Food(i)) => {
            let active = state.targets.get(i).is_some_and(|t| t.active);
            if !active {
                return ActionSet::of(&[lbf::NONE]);
            }
            let rel = state.relation(agent, i);
            if rel.adjacent == Some(true) {
                return ActionSet::of(&[lbf::LOAD, lbf::NONE]);
            }
            lbf_approach_moves(state, agent, i, spec)
        }
        (EnvId::MpeSpread, Assignment::NoAction) => ActionSet::of(&[mpe::NO_ACTION]),
        (EnvId::MpeSpread, Assignment::Landmark(i)) => {
            if i >= state.targets.len() {
                return ActionSet::of(&[mpe::NO_ACTION]);
            }
            let Offset::Point { dx, dy } = state.relation(agent, i).offset else {
                return ActionSet::EMPTY;
            };
            let mut set = ActionSet::EMPTY;
            if dx > MPE_DEAD_BAND {
                set.insert(mpe::MOVE_RIGHT);
            } else if dx < -MPE_DEAD_BAND {
                set.insert(mpe::MOVE_LEFT);
            }
            if dy > MPE_DEAD_BAND {
                set.insert(mpe::MOVE_UP);
            } else if dy < -MPE_DEAD_BAND {
                set.insert(mpe::MOVE_DOWN);
            }
            if set.is_empty() {
                set.insert(mpe::NO_ACTION);
            }
            set
        }
        _ => ActionSet::EMPTY,
    }
}

fn lbf_approach_moves(state: &InterpretedState, agent: usize, food: usize, spec: &EnvSpec) -> ActionSet {
    let cell = |p: &Position| match *p {
        Position::Cell { row, col } => Some((row, col)),
        Position::Point { .. } => None,
    };
    let cells: Vec<(i64, i64)> = state
        .agents
        .iter()
        .map(|a| &a.position)
        .chain(state.targets.iter().map(|t| &t.position))
        .filter_map(cell)
        .collect();
    let g = spec
        .grid_size
        .map(|g| g as i64)
        .unwrap_or_else(|| cells.iter().map(|&(r, c)| r.max(c) + 1).max().unwrap_or(1));
    let (Some(me), Some(goal)) =
        (cell(&state.agents[agent].position), cell(&state.targets[food].position))
    else {
        return ActionSet::EMPTY;
    };
    let inside = |(r, c): (i64, i64)| r >= 0 && c >= 0 && r < g && c < g;
    let idx = |(r, c): (i64, i64)| (r * g + c) as usize;
    let mut blocked = vec![false; (g * g) as usize];
    let others = state.agents.iter().filter(|a| a.id != agent).map(|a| &a.position);
    let foods = state.targets.iter().filter(|t| t.active).map(|t| &t.position);
    for p in others.chain(foods).filter_map(cell).filter(|&p| inside(p)) {
        blocked[idx(p)] = true;
    }
    let step = |(r, c): (i64, i64), a: usize| {
        let (dr, dc) = lbf::displacement(a).expect("movement action");
        (r + dr, c + dc)
    };
    const MOVES: [usize; 4] = [lbf::NORTH, lbf::SOUTH, lbf::WEST, lbf::EAST];

    // breadth-first distances from the free cells beside the food
    let mut dist = vec![usize::MAX; (g * g) as usize];
    let mut queue = VecDeque::new();
    for a in MOVES {
        let p = step(goal, a);
        if inside(p) && !blocked[idx(p)] {
            dist[idx(p)] = 0;
            queue.push_back(p);
        }
    }
    while let Some(p) = queue.pop_front() {
        for a in MOVES {
            let q = step(p, a);
            if inside(q) && !blocked[idx(q)] && dist[idx(q)] == usize::MAX {
                dist[idx(q)] = dist[idx(p)] + 1;
                queue.push_back(q);
            }
        }
    }
    if !inside(me) || dist[idx(me)] == usize::MAX {
        return ActionSet::of(&[lbf::NONE]);
    }
    let here = dist[idx(me)];
    let mut set = ActionSet::EMPTY;
    for a in MOVES {
        let q = step(me, a);
        if inside(q) && !blocked[idx(q)] && dist[idx(q)] < here {
            set.insert(a);
        }
    }
    set
}
