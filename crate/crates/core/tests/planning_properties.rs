use std::collections::VecDeque;

use planshape_core::env::lbf::{self, Grid};
use planshape_core::env::{LbfConfig, MpeConfig};
use planshape_core::interp::{Position, TargetKind};
use planshape_core::plan::Assignment;
use planshape_core::{
    admissible_actions, interpret, plan_reference, shape, ActionSet, AssignmentVector, Env, EnvConfig, GlobalState,
    InterpretedState, JointAction, ShapingConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// States reached by random play, several per episode.
fn visited_states(cfg: &EnvConfig, seed: u64, n: usize) -> Vec<GlobalState> {
    let spec = cfg.spec();
    let mut env = Env::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = env.reset(rng.gen()).unwrap();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        out.push(state.clone());
        let a = JointAction::new((0..spec.n_agents).map(|_| rng.gen_range(0..spec.n_actions())).collect());
        let step = env.step(&a).unwrap();
        state = if step.done { env.reset(rng.gen()).unwrap() } else { step.next_state };
    }
    out
}

/// Moves that shorten the breadth-first distance to a free cell beside
/// `food`, or NONE when no such cell is reachable.
fn bfs_oracle(grid: &Grid, size: usize, agent: usize, food: usize) -> ActionSet {
    let blocked = |r: usize, c: usize| {
        grid.agents.iter().enumerate().any(|(k, a)| k != agent && (a.row, a.col) == (r, c))
            || grid.foods.iter().any(|f| f.level > 0 && (f.row, f.col) == (r, c))
    };
    let f = grid.foods[food];
    let mut dist = vec![usize::MAX; size * size];
    let mut queue = VecDeque::new();
    for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
        let (r, c) = (f.row as i64 + dr, f.col as i64 + dc);
        if r >= 0 && c >= 0 && (r as usize) < size && (c as usize) < size && !blocked(r as usize, c as usize) {
            dist[r as usize * size + c as usize] = 0;
            queue.push_back((r as usize, c as usize));
        }
    }
    while let Some((r, c)) = queue.pop_front() {
        let d = dist[r * size + c];
        for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let (nr, nc) = (r as i64 + dr, c as i64 + dc);
            if nr < 0 || nc < 0 || nr as usize >= size || nc as usize >= size {
                continue;
            }
            let (nr, nc) = (nr as usize, nc as usize);
            if !blocked(nr, nc) && dist[nr * size + nc] == usize::MAX {
                dist[nr * size + nc] = d + 1;
                queue.push_back((nr, nc));
            }
        }
    }
    let me = grid.agents[agent];
    let here = dist[me.row * size + me.col];
    let mut set = ActionSet::EMPTY;
    if here != usize::MAX {
        for act in [lbf::NORTH, lbf::SOUTH, lbf::WEST, lbf::EAST] {
            let (dr, dc) = lbf::displacement(act).unwrap();
            let (r, c) = (me.row as i64 + dr, me.col as i64 + dc);
            if r < 0 || c < 0 || r as usize >= size || c as usize >= size {
                continue;
            }
            if dist[r as usize * size + c as usize] == here - 1 {
                set.insert(act);
            }
        }
    }
    if set.is_empty() {
        set.insert(lbf::NONE);
    }
    set
}

#[test]
fn lbf_food_moves_follow_shortest_paths() {
    let cfg = EnvConfig::Lbf(LbfConfig::default());
    let spec = cfg.spec();
    let mut checked = 0;
    for state in visited_states(&cfg, 11, 3000) {
        let grid = Grid::decode(&state, 2, 2).unwrap();
        let view = interpret(&state, &spec).unwrap();
        for agent in 0..2 {
            for food in 0..2 {
                if grid.foods[food].level == 0 || grid.agents[agent].manhattan(&grid.foods[food]) == 1 {
                    continue;
                }
                let got = admissible_actions(&view, agent, Assignment::Food(food), &spec);
                assert_eq!(got, bfs_oracle(&grid, 8, agent, food), "state {:?} agent {agent} food {food}", state.values);
                checked += 1;
            }
        }
    }
    assert!(checked > 1000);
}

#[test]
fn boxed_in_agent_is_told_to_wait() {
    // Agent 0 in the corner, hemmed in by agent 1 and an uncollected food.
    let spec = EnvConfig::Lbf(LbfConfig::default()).spec();
    let state = GlobalState::new(vec![0., 0., 1., 1., 0., 1., 0., 1., 2., 5., 5., 2.]);
    let view = interpret(&state, &spec).unwrap();
    assert_eq!(admissible_actions(&view, 0, Assignment::Food(1), &spec), ActionSet::of(&[lbf::NONE]));
}

#[test]
fn one_action_can_serve_several_assignments() {
    // Both agents beside food 0: LOAD is admissible under Food(0) and Load.
    let spec = EnvConfig::Lbf(LbfConfig::default()).spec();
    let state = GlobalState::new(vec![3., 2., 1., 3., 4., 1., 3., 3., 2., 7., 7., 2.]);
    let view = interpret(&state, &spec).unwrap();
    for task in [Assignment::Food(0), Assignment::Load] {
        assert!(admissible_actions(&view, 0, task, &spec).contains(lbf::LOAD), "{task:?}");
    }
    assert_eq!(plan_reference(&view, &spec).0, vec![Assignment::Load; 2]);
}

#[test]
fn interpretation_reads_the_layout_back() {
    for cfg in [EnvConfig::Lbf(LbfConfig::default()), EnvConfig::MpeSpread(MpeConfig::default())] {
        let spec = cfg.spec();
        for state in visited_states(&cfg, 5, 500) {
            let view = interpret(&state, &spec).unwrap();
            let v = &state.values;
            let agent_width = if spec.env_id == planshape_core::EnvId::Lbf { 3 } else { 4 };
            for (i, a) in view.agents.iter().enumerate() {
                let base = agent_width * i;
                match a.position {
                    Position::Cell { row, col } => assert_eq!((row as f64, col as f64), (v[base], v[base + 1])),
                    Position::Point { x, y } => assert_eq!((x, y), (v[base], v[base + 1])),
                }
            }
            let offset = agent_width * spec.n_agents;
            let target_width = if agent_width == 3 { 3 } else { 2 };
            for (j, t) in view.targets.iter().enumerate() {
                let base = offset + target_width * j;
                match (t.kind, t.position) {
                    (TargetKind::Food, Position::Cell { row, col }) => {
                        assert_eq!((row as f64, col as f64), (v[base], v[base + 1]));
                        assert_eq!(t.active, v[base + 2] > 0.0);
                    }
                    (TargetKind::Landmark, Position::Point { x, y }) => assert_eq!((x, y), (v[base], v[base + 1])),
                    other => panic!("unexpected target {other:?}"),
                }
            }
            assert_eq!(view.relative, InterpretedState::recompute_relative(&view.agents, &view.targets));
        }
    }
}

#[test]
fn reference_plans_are_total_and_actionable() {
    for cfg in [
        EnvConfig::Lbf(LbfConfig::default()),
        EnvConfig::MpeSpread(MpeConfig::default()),
        EnvConfig::MpeSpread(MpeConfig { n_agents: 4, ..MpeConfig::default() }),
    ] {
        let spec = cfg.spec();
        for state in visited_states(&cfg, 21, 2000) {
            let view = interpret(&state, &spec).unwrap();
            let plan = plan_reference(&view, &spec);
            plan.validate(&spec).unwrap();
            for (i, &task) in plan.0.iter().enumerate() {
                assert!(!admissible_actions(&view, i, task, &spec).is_empty());
            }
        }
    }
}

#[test]
fn greedy_matching_assigns_each_landmark_once() {
    let cfg = EnvConfig::MpeSpread(MpeConfig::default());
    let spec = cfg.spec();
    for state in visited_states(&cfg, 8, 500) {
        let plan = plan_reference(&interpret(&state, &spec).unwrap(), &spec);
        let mut seen: Vec<usize> = plan
            .0
            .iter()
            .map(|a| match a {
                Assignment::Landmark(j) => *j,
                other => panic!("{other:?}"),
            })
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2]);
    }
}

proptest! {
    #[test]
    fn shaping_adds_exactly_the_deltas(
        pattern in 0u32..8,
        r in -10.0f64..10.0,
        r_prime in 1e-6f64..5.0,
        p_prime in -5.0f64..=0.0,
    ) {
        let spec = EnvConfig::MpeSpread(MpeConfig::default()).spec();
        let state = Env::new(&EnvConfig::MpeSpread(MpeConfig::default())).unwrap().reset(1).unwrap();
        let view = interpret(&state, &spec).unwrap();
        let plan = AssignmentVector(vec![Assignment::NoAction; 3]);
        // NoAction admits only action 0.
        let actions: Vec<usize> = (0..3).map(|i| if pattern >> i & 1 == 1 { 0 } else { 1 }).collect();
        let cfg = ShapingConfig { r_prime, p_prime, enabled: true };
        let out = shape(r, &JointAction::new(actions), &plan, &view, &spec, &cfg).unwrap();
        let want: Vec<f64> = (0..3).map(|i| if pattern >> i & 1 == 1 { r_prime } else { p_prime }).collect();
        prop_assert_eq!(&out.deltas, &want);
        prop_assert_eq!(out.total, r + want.iter().sum::<f64>());
        prop_assert_eq!(out.aligned_count(), pattern.count_ones() as usize);
        let bound = 3.0 * r_prime.max(-p_prime);
        prop_assert!((out.total - r).abs() <= bound + 1e-12);
    }

    #[test]
    fn labels_round_trip(k in 0usize..64) {
        for a in [Assignment::Food(k), Assignment::Landmark(k), Assignment::Load, Assignment::None, Assignment::NoAction] {
            prop_assert_eq!(Assignment::parse(&a.label()).unwrap(), a);
        }
    }
}
