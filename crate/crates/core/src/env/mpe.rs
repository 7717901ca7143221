//! Particle "simple spread" with discrete actions.
//!
//! N agents and N fixed landmarks in a square world. State layout:
//! `(x, y, vx, vy)` per agent, then `(x, y)` per landmark.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    EnvError, EnvId, EnvSpec, GlobalState, JointAction, StateLayout, StepInfo, StepResult,
    MPE_ACTIONS,
};
use crate::math;
use crate::plan::Assignment;

pub const NO_ACTION: usize = 0;
pub const MOVE_LEFT: usize = 1;
pub const MOVE_RIGHT: usize = 2;
pub const MOVE_DOWN: usize = 3;
pub const MOVE_UP: usize = 4;

/// Unit force of an action.
pub fn force(action: usize) -> (f64, f64) {
    match action {
        MOVE_LEFT => (-1.0, 0.0),
        MOVE_RIGHT => (1.0, 0.0),
        MOVE_DOWN => (0.0, -1.0),
        MOVE_UP => (0.0, 1.0),
        _ => (0.0, 0.0),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpeConfig {
    /// Landmarks always match the agent count.
    pub n_agents: usize,
    pub dt: f64,
    pub damping: f64,
    pub accel: f64,
    pub max_speed: f64,
    pub world_extent: f64,
    pub collision_radius: f64,
    pub collision_penalty: f64,
    pub episode_limit: usize,
}

impl Default for MpeConfig {
    fn default() -> Self {
        Self {
            n_agents: 3,
            dt: 0.1,
            damping: 0.25,
            accel: 5.0,
            max_speed: 1.3,
            world_extent: 1.0,
            collision_radius: 0.15,
            collision_penalty: 1.0,
            episode_limit: 25,
        }
    }
}

impl MpeConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::Config(m.into()));
        if self.n_agents == 0 {
            return bad("n_agents must be positive");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(0.0..1.0).contains(&self.damping) {
            return bad("damping must lie in [0, 1)");
        }
        if !(self.accel >= 0.0 && self.max_speed > 0.0 && self.world_extent > 0.0) {
            return bad("accel, max_speed and world_extent must be positive");
        }
        if !(self.collision_radius >= 0.0 && self.collision_penalty >= 0.0) {
            return bad("collision radius and penalty must be nonnegative");
        }
        if self.episode_limit == 0 {
            return bad("episode_limit must be at least 1");
        }
        Ok(())
    }

    pub fn spec(&self) -> EnvSpec {
        let mut layout = StateLayout { entries: Vec::new() };
        for i in 0..self.n_agents {
            layout.push_group(
                format!("agent{i}"),
                &[("x", "world"), ("y", "world"), ("vx", "world/step"), ("vy", "world/step")],
            );
        }
        for j in 0..self.n_agents {
            layout.push_group(format!("landmark{j}"), &[("x", "world"), ("y", "world")]);
        }
        let mut assignment_set: Vec<Assignment> =
            (0..self.n_agents).map(Assignment::Landmark).collect();
        assignment_set.push(Assignment::NoAction);
        EnvSpec {
            env_id: EnvId::MpeSpread,
            n_agents: self.n_agents,
            n_targets: self.n_agents,
            action_set: &MPE_ACTIONS,
            assignment_set,
            episode_limit: self.episode_limit,
            state_layout: layout,
            grid_size: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl Particle {
    pub fn speed(&self) -> f64 {
        math::hypot(self.vx, self.vy)
    }
}

/// Splits a state into agent particles and landmark positions.
pub fn decode(state: &GlobalState, n: usize) -> Result<(Vec<Particle>, Vec<(f64, f64)>), EnvError> {
    let expected = 6 * n;
    if state.len() != expected {
        return Err(EnvError::StateLength { expected, got: state.len() });
    }
    let v = &state.values;
    let agents = (0..n)
        .map(|i| Particle { x: v[4 * i], y: v[4 * i + 1], vx: v[4 * i + 2], vy: v[4 * i + 3] })
        .collect();
    let landmarks = (0..n).map(|j| (v[4 * n + 2 * j], v[4 * n + 2 * j + 1])).collect();
    Ok((agents, landmarks))
}

pub fn encode(agents: &[Particle], landmarks: &[(f64, f64)]) -> GlobalState {
    let mut values = Vec::with_capacity(agents.len() * 4 + landmarks.len() * 2);
    for a in agents {
        values.extend_from_slice(&[a.x, a.y, a.vx, a.vy]);
    }
    for &(x, y) in landmarks {
        values.extend_from_slice(&[x, y]);
    }
    GlobalState { values }
}

/// Coverage term: sum over landmarks of the distance to the closest agent.
pub fn coverage_distance(agents: &[Particle], landmarks: &[(f64, f64)]) -> f64 {
    landmarks
        .iter()
        .map(|&(lx, ly)| {
            agents
                .iter()
                .map(|a| math::hypot(a.x - lx, a.y - ly))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Number of agent pairs closer than two collision radii.
pub fn collisions(agents: &[Particle], radius: f64) -> usize {
    let mut count = 0;
    for i in 0..agents.len() {
        for j in i + 1..agents.len() {
            if math::hypot(agents[i].x - agents[j].x, agents[i].y - agents[j].y) < 2.0 * radius {
                count += 1;
            }
        }
    }
    count
}

/// Integrates one step of damped point-mass dynamics in place.
pub fn integrate(agents: &mut [Particle], actions: &[usize], cfg: &MpeConfig) {
    for (a, &act) in agents.iter_mut().zip(actions) {
        let (fx, fy) = force(act);
        a.vx = a.vx * (1.0 - cfg.damping) + fx * cfg.accel * cfg.dt;
        a.vy = a.vy * (1.0 - cfg.damping) + fy * cfg.accel * cfg.dt;
        let speed = a.speed();
        if speed > cfg.max_speed {
            let scale = cfg.max_speed / speed;
            a.vx *= scale;
            a.vy *= scale;
        }
        a.x = (a.x + a.vx * cfg.dt).clamp(-cfg.world_extent, cfg.world_extent);
        a.y = (a.y + a.vy * cfg.dt).clamp(-cfg.world_extent, cfg.world_extent);
    }
}

/// Shared reward for a configuration of agents.
pub fn reward(agents: &[Particle], landmarks: &[(f64, f64)], cfg: &MpeConfig) -> (f64, usize) {
    let hits = collisions(agents, cfg.collision_radius);
    (-coverage_distance(agents, landmarks) - cfg.collision_penalty * hits as f64, hits)
}

#[derive(Clone, Debug)]
pub struct MpeSpread {
    config: MpeConfig,
    spec: EnvSpec,
    agents: Vec<Particle>,
    landmarks: Vec<(f64, f64)>,
    state: GlobalState,
    t: usize,
    done: bool,
}

impl MpeSpread {
    pub fn new(config: MpeConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let spec = config.spec();
        Ok(Self {
            config,
            spec,
            agents: Vec::new(),
            landmarks: Vec::new(),
            state: GlobalState { values: Vec::new() },
            t: 0,
            done: true,
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn config(&self) -> &MpeConfig {
        &self.config
    }

    pub fn state(&self) -> &GlobalState {
        &self.state
    }

    pub fn reset(&mut self, seed: u64) -> GlobalState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.config.n_agents;
        self.agents = (0..n)
            .map(|_| Particle {
                x: rng.gen_range(-1.0..=1.0),
                y: rng.gen_range(-1.0..=1.0),
                vx: 0.0,
                vy: 0.0,
            })
            .collect();
        self.landmarks =
            (0..n).map(|_| (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0))).collect();
        self.state = encode(&self.agents, &self.landmarks);
        self.t = 0;
        self.done = false;
        self.state.clone()
    }

    pub fn step(&mut self, action: &JointAction) -> Result<StepResult, EnvError> {
        action.validate(&self.spec)?;
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        integrate(&mut self.agents, &action.actions, &self.config);
        let (r, hits) = reward(&self.agents, &self.landmarks, &self.config);
        self.t += 1;
        self.done = self.t >= self.config.episode_limit;
        self.state = encode(&self.agents, &self.landmarks);
        Ok(StepResult {
            next_state: self.state.clone(),
            reward: r,
            done: self.done,
            info: StepInfo { foods_remaining: None, collisions: Some(hits), truncated: self.done },
        })
    }
}
