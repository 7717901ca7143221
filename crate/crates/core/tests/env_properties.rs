use planshape_core::env::lbf::{Grid, LOAD};
use planshape_core::env::mpe::{self, MpeConfig, Particle, NO_ACTION};
use planshape_core::env::LbfConfig;
use planshape_core::{Env, EnvConfig, JointAction};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lbf() -> EnvConfig {
    EnvConfig::Lbf(LbfConfig::default())
}

/// Foods the step should collect, computed from the pre-step grid. Loading
/// agents never move, so pre-step adjacency is what counts.
fn expected_collections(before: &Grid, actions: &[usize]) -> Vec<bool> {
    before
        .foods
        .iter()
        .map(|f| {
            if f.level == 0 {
                return false;
            }
            let mut sum = 0;
            for (a, &act) in before.agents.iter().zip(actions) {
                let touching = a.row.abs_diff(f.row) + a.col.abs_diff(f.col) == 1;
                if act == LOAD && touching {
                    sum += a.level;
                }
            }
            sum > 0 && sum >= f.level
        })
        .collect()
}

fn assert_exclusive(g: &Grid, size: usize) {
    for (i, a) in g.agents.iter().enumerate() {
        assert!(a.row < size && a.col < size, "agent {i} off the grid: {a:?}");
        for b in &g.agents[i + 1..] {
            assert!((a.row, a.col) != (b.row, b.col), "two agents share a cell");
        }
        for f in g.foods.iter().filter(|f| f.level > 0) {
            assert!((a.row, a.col) != (f.row, f.col), "agent {i} stands on an uncollected food");
        }
    }
}

#[test]
fn lbf_fuzzed_steps_obey_the_rules() {
    let cfg = lbf();
    let spec = cfg.spec();
    let mut env = Env::new(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xF00D);
    let mut state = env.reset(rng.gen()).unwrap();
    let mut episode_return = 0.0;
    let mut collections = 0;
    for _ in 0..10_000 {
        let before = Grid::decode(&state, spec.n_agents, spec.n_targets).unwrap();
        // Bias towards LOAD so joint loads actually happen.
        let actions: Vec<usize> =
            (0..spec.n_agents).map(|_| if rng.gen_bool(0.4) { LOAD } else { rng.gen_range(0..6) }).collect();
        let step = env.step(&JointAction::new(actions.clone())).unwrap();
        let after = Grid::decode(&step.next_state, spec.n_agents, spec.n_targets).unwrap();
        let want = expected_collections(&before, &actions);
        for (j, &collected) in want.iter().enumerate() {
            let got = before.foods[j].level > 0 && after.foods[j].level == 0;
            assert_eq!(got, collected, "food {j}: before {before:?}, actions {actions:?}");
            collections += collected as usize;
        }
        assert!(step.reward >= 0.0);
        assert_exclusive(&after, 8);
        episode_return += step.reward;
        assert!(episode_return <= 1.0 + 1e-12, "episode return {episode_return}");
        if step.done {
            episode_return = 0.0;
            state = env.reset(rng.gen()).unwrap();
        } else {
            state = step.next_state;
        }
    }
    assert!(collections > 0, "fuzzing never exercised a collection");
}

#[test]
fn mpe_idle_speed_decays_geometrically() {
    let cfg = MpeConfig::default();
    let mut agents = vec![Particle { x: 0.0, y: 0.0, vx: 0.6, vy: -0.3 }];
    let mut speed = agents[0].speed();
    for _ in 0..20 {
        mpe::integrate(&mut agents, &[NO_ACTION], &cfg);
        let next = agents[0].speed();
        assert!((next - speed * (1.0 - cfg.damping)).abs() < 1e-12);
        speed = next;
    }
}

#[test]
fn mpe_agents_on_landmarks_earn_zero() {
    let cfg = MpeConfig::default();
    let landmarks = [(-0.5, 0.5), (0.5, 0.5), (0.0, -0.5)];
    let agents: Vec<Particle> = landmarks.iter().map(|&(x, y)| Particle { x, y, vx: 0.0, vy: 0.0 }).collect();
    assert_eq!(mpe::reward(&agents, &landmarks, &cfg), (0.0, 0));
}

#[test]
fn mpe_fuzzed_steps_stay_in_bounds() {
    let cfg = MpeConfig::default();
    let ec = EnvConfig::MpeSpread(cfg.clone());
    let mut env = Env::new(&ec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut state = env.reset(rng.gen()).unwrap();
    for _ in 0..10_000 {
        let step = env.step(&JointAction::new((0..3).map(|_| rng.gen_range(0..5)).collect())).unwrap();
        let (agents, _) = mpe::decode(&step.next_state, 3).unwrap();
        for a in &agents {
            assert!(a.x.abs() <= cfg.world_extent && a.y.abs() <= cfg.world_extent);
            assert!(a.speed() <= cfg.max_speed + 1e-12);
        }
        assert!(step.reward <= 0.0 && step.reward.is_finite());
        state = if step.done { env.reset(rng.gen()).unwrap() } else { step.next_state };
    }
    assert_eq!(state.len(), 18);
}

proptest! {
    #[test]
    fn reset_is_a_function_of_the_seed(seed in any::<u64>(), mpe in any::<bool>()) {
        let cfg = if mpe { EnvConfig::MpeSpread(MpeConfig::default()) } else { lbf() };
        let a = Env::new(&cfg).unwrap().reset(seed).unwrap();
        let b = Env::new(&cfg).unwrap().reset(seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn rollouts_are_deterministic(seed in any::<u64>(), actions in prop::collection::vec(0usize..6, 2..100)) {
        let cfg = lbf();
        let run = || {
            let mut env = Env::new(&cfg).unwrap();
            let mut out = vec![env.reset(seed).unwrap()];
            for pair in actions.chunks_exact(2) {
                let step = env.step(&JointAction::new(pair.to_vec())).unwrap();
                let done = step.done;
                out.push(step.next_state);
                if done {
                    break;
                }
            }
            out
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn lbf_reset_is_exclusive(seed in any::<u64>()) {
        let state = Env::new(&lbf()).unwrap().reset(seed).unwrap();
        assert_exclusive(&Grid::decode(&state, 2, 2).unwrap(), 8);
    }
}
