//! Level-Based Foraging on a square grid.
//!
//! State layout: `(row, col, level)` for every agent, then `(row, col, level)`
//! for every food. A collected food keeps its cell but its level drops to 0
//! and it no longer blocks movement.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    EnvError, EnvId, EnvSpec, GlobalState, JointAction, StateLayout, StepInfo, StepResult,
    LBF_ACTIONS,
};
use crate::plan::Assignment;

pub const NONE: usize = 0;
pub const NORTH: usize = 1;
pub const SOUTH: usize = 2;
pub const WEST: usize = 3;
pub const EAST: usize = 4;
pub const LOAD: usize = 5;

/// Row/column displacement of a movement action.
pub fn displacement(action: usize) -> Option<(i64, i64)> {
    match action {
        NORTH => Some((-1, 0)),
        SOUTH => Some((1, 0)),
        WEST => Some((0, -1)),
        EAST => Some((0, 1)),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfConfig {
    pub grid_size: usize,
    pub n_agents: usize,
    pub n_foods: usize,
    /// Every food needs the combined level of all agents.
    pub force_coop: bool,
    pub agent_levels: Vec<u32>,
    pub episode_limit: usize,
}

impl Default for LbfConfig {
    fn default() -> Self {
        Self {
            grid_size: 8,
            n_agents: 2,
            n_foods: 2,
            force_coop: true,
            agent_levels: vec![1, 1],
            episode_limit: 50,
        }
    }
}

impl LbfConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let err = |m: String| Err(EnvError::Config(m));
        if self.grid_size < 3 {
            return err(format!("grid_size must be at least 3, got {}", self.grid_size));
        }
        if self.n_agents == 0 {
            return err("n_agents must be positive".into());
        }
        if self.agent_levels.len() != self.n_agents {
            return err(format!(
                "agent_levels has {} entries for {} agents",
                self.agent_levels.len(),
                self.n_agents
            ));
        }
        if self.agent_levels.iter().any(|&l| l == 0) {
            return err("agent levels must be at least 1".into());
        }
        if self.n_foods == 0 {
            return err("n_foods must be positive".into());
        }
        let cells = self.grid_size * self.grid_size;
        if self.n_foods + self.n_agents > cells {
            return err(format!(
                "{} foods and {} agents do not fit in {} cells",
                self.n_foods, self.n_agents, cells
            ));
        }
        // Foods sit off the border and never touch each other, so a lattice
        // with stride 2 over the interior bounds how many can be placed.
        let lattice = (self.grid_size - 2).div_ceil(2);
        if self.n_foods > lattice * lattice {
            return err(format!(
                "{} foods cannot be spaced apart on a {}x{} grid",
                self.n_foods, self.grid_size, self.grid_size
            ));
        }
        if self.episode_limit == 0 {
            return err("episode_limit must be at least 1".into());
        }
        Ok(())
    }

    pub fn spec(&self) -> EnvSpec {
        let mut layout = StateLayout { entries: Vec::new() };
        let fields = [("row", "cell"), ("col", "cell"), ("level", "level")];
        for i in 0..self.n_agents {
            layout.push_group(format!("agent{i}"), &fields);
        }
        for j in 0..self.n_foods {
            layout.push_group(format!("food{j}"), &fields);
        }
        let mut assignment_set = vec![Assignment::None];
        assignment_set.extend((0..self.n_foods).map(Assignment::Food));
        assignment_set.push(Assignment::Load);
        EnvSpec {
            env_id: EnvId::Lbf,
            n_agents: self.n_agents,
            n_targets: self.n_foods,
            action_set: &LBF_ACTIONS,
            assignment_set,
            episode_limit: self.episode_limit,
            state_layout: layout,
            grid_size: Some(self.grid_size),
        }
    }
}

/// Decoded grid entity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Entity {
    pub row: usize,
    pub col: usize,
    pub level: u32,
}

impl Entity {
    pub fn manhattan(&self, other: &Entity) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }

    pub fn adjacent(&self, other: &Entity) -> bool {
        self.manhattan(other) == 1
    }
}

/// Agents and foods decoded from a [`GlobalState`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grid {
    pub agents: Vec<Entity>,
    pub foods: Vec<Entity>,
}

impl Grid {
    pub fn decode(state: &GlobalState, n_agents: usize, n_foods: usize) -> Result<Self, EnvError> {
        let expected = 3 * (n_agents + n_foods);
        if state.len() != expected {
            return Err(EnvError::StateLength { expected, got: state.len() });
        }
        let ent = |k: usize| Entity {
            row: state.values[3 * k] as usize,
            col: state.values[3 * k + 1] as usize,
            level: state.values[3 * k + 2] as u32,
        };
        Ok(Self {
            agents: (0..n_agents).map(ent).collect(),
            foods: (n_agents..n_agents + n_foods).map(ent).collect(),
        })
    }

    pub fn encode(&self) -> GlobalState {
        let values = self
            .agents
            .iter()
            .chain(&self.foods)
            .flat_map(|e| [e.row as f64, e.col as f64, e.level as f64])
            .collect();
        GlobalState { values }
    }

    pub fn active_foods(&self) -> usize {
        self.foods.iter().filter(|f| f.level > 0).count()
    }

    fn blocked(&self, row: usize, col: usize) -> bool {
        self.agents.iter().any(|a| a.row == row && a.col == col)
            || self.foods.iter().any(|f| f.level > 0 && f.row == row && f.col == col)
    }
}

/// Applies one joint action. Agents move in index order and a move into a
/// wall, an agent, or an uncollected food leaves the agent in place. A food
/// is collected when the agents issuing LOAD next to it have summed level at
/// least the food level. Returns the reward for the step.
pub fn transition(
    grid: &mut Grid,
    grid_size: usize,
    actions: &[usize],
    total_food_level: f64,
) -> f64 {
    for i in 0..grid.agents.len() {
        let Some((dr, dc)) = displacement(actions[i]) else { continue };
        let row = grid.agents[i].row as i64 + dr;
        let col = grid.agents[i].col as i64 + dc;
        if row < 0 || col < 0 || row >= grid_size as i64 || col >= grid_size as i64 {
            continue;
        }
        let (row, col) = (row as usize, col as usize);
        if !grid.blocked(row, col) {
            grid.agents[i].row = row;
            grid.agents[i].col = col;
        }
    }

    let mut reward = 0.0;
    for j in 0..grid.foods.len() {
        let food = grid.foods[j];
        if food.level == 0 {
            continue;
        }
        let loaders: u32 = grid
            .agents
            .iter()
            .zip(actions)
            .filter(|(a, &act)| act == LOAD && a.adjacent(&food))
            .map(|(a, _)| a.level)
            .sum();
        if loaders > 0 && loaders >= food.level {
            reward += food.level as f64 / total_food_level;
            grid.foods[j].level = 0;
        }
    }
    reward
}

#[derive(Clone, Debug)]
pub struct Lbf {
    config: LbfConfig,
    spec: EnvSpec,
    grid: Grid,
    state: GlobalState,
    total_food_level: f64,
    t: usize,
    done: bool,
}

impl Lbf {
    pub fn new(config: LbfConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let spec = config.spec();
        let grid = Grid { agents: Vec::new(), foods: Vec::new() };
        Ok(Self {
            config,
            spec,
            grid,
            state: GlobalState { values: Vec::new() },
            total_food_level: 0.0,
            t: 0,
            done: true,
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn config(&self) -> &LbfConfig {
        &self.config
    }

    pub fn state(&self) -> &GlobalState {
        &self.state
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn reset(&mut self, seed: u64) -> Result<GlobalState, EnvError> {
        let cfg = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = cfg.grid_size;
        let mut foods: Vec<Entity> = Vec::with_capacity(cfg.n_foods);
        let coop_level: u32 = cfg.agent_levels.iter().sum();
        let max_level = cfg.agent_levels.iter().copied().max().unwrap_or(1);
        let mut attempts = 0;
        while foods.len() < cfg.n_foods {
            attempts += 1;
            if attempts > 100_000 {
                return Err(EnvError::Config("could not place foods".into()));
            }
            let row = rng.gen_range(1..g - 1);
            let col = rng.gen_range(1..g - 1);
            let crowded = foods
                .iter()
                .any(|f| f.row.abs_diff(row) <= 1 && f.col.abs_diff(col) <= 1);
            if crowded {
                continue;
            }
            let level = if cfg.force_coop { coop_level } else { rng.gen_range(1..=max_level) };
            foods.push(Entity { row, col, level });
        }

        let mut agents: Vec<Entity> = Vec::with_capacity(cfg.n_agents);
        while agents.len() < cfg.n_agents {
            let row = rng.gen_range(0..g);
            let col = rng.gen_range(0..g);
            let taken = foods.iter().chain(&agents).any(|e| e.row == row && e.col == col);
            if !taken {
                agents.push(Entity { row, col, level: cfg.agent_levels[agents.len()] });
            }
        }

        self.total_food_level = foods.iter().map(|f| f.level as f64).sum();
        self.grid = Grid { agents, foods };
        self.state = self.grid.encode();
        self.t = 0;
        self.done = false;
        Ok(self.state.clone())
    }

    pub fn step(&mut self, action: &JointAction) -> Result<StepResult, EnvError> {
        action.validate(&self.spec)?;
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let reward = transition(
            &mut self.grid,
            self.config.grid_size,
            &action.actions,
            self.total_food_level,
        );
        self.t += 1;
        self.state = self.grid.encode();
        let remaining = self.grid.active_foods();
        let limit = self.t >= self.config.episode_limit;
        self.done = remaining == 0 || limit;
        Ok(StepResult {
            next_state: self.state.clone(),
            reward,
            done: self.done,
            info: StepInfo {
                foods_remaining: Some(remaining),
                collisions: None,
                truncated: limit && remaining > 0,
            },
        })
    }
}
