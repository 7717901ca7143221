use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{episode_return, Env, EnvConfig, EnvError, GlobalState, JointAction};

/// Deterministic decentralised policy used for evaluation.
pub trait Policy {
    fn greedy_actions(&self, state: &GlobalState) -> JointAction;
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub returns: Vec<f64>,
}

/// Runs `n_episodes` greedy episodes on fresh environments and reports raw
/// environment returns. Episode seeds are drawn from `seed`.
pub fn evaluate<P: Policy + ?Sized>(
    policy: &P,
    env_config: &EnvConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalResult, EnvError> {
    if n_episodes == 0 {
        return Err(EnvError::Config("evaluation needs at least one episode".into()));
    }
    let mut env = Env::new(env_config)?;
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let mut state = env.reset(seeds.next_u64())?;
        let mut rewards = Vec::with_capacity(env.spec().episode_limit);
        loop {
            let action = policy.greedy_actions(&state);
            let step = env.step(&action)?;
            rewards.push(step.reward);
            state = step.next_state;
            if step.done {
                break;
            }
        }
        returns.push(episode_return(&rewards));
    }
    let mean = returns.iter().sum::<f64>() / n_episodes as f64;
    let min = returns.iter().copied().fold(f64::INFINITY, f64::min);
    let max = returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(EvalResult { mean, min, max, returns })
}
