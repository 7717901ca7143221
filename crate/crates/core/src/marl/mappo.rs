//! MAPPO: PPO actors on agent observations with a centralised critic on
//! the global state.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gae, sample_categorical, AgentNets, MarlError, NetConfig, TrainedPolicy, Transition};
use crate::env::{EnvSpec, GlobalState};
use crate::math;
use crate::nn::{clip_grad_norm, AdamConfig, InitScheme, Mlp, OptimState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    /// Clip range for the value loss.
    pub value_clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    /// Steps per environment per rollout.
    pub rollout_len: usize,
    pub n_envs: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
    pub parameter_sharing: bool,
    pub net: NetConfig,
}

impl Default for MappoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            value_clip: 0.2,
            epochs: 4,
            minibatches: 4,
            rollout_len: 128,
            n_envs: 8,
            entropy_coef: 0.01,
            value_coef: 0.5,
            actor_lr: 5e-4,
            critic_lr: 5e-4,
            max_grad_norm: 10.0,
            normalize_advantages: true,
            parameter_sharing: true,
            net: NetConfig::default(),
        }
    }
}

impl MappoConfig {
    pub fn validate(&self) -> Result<(), MarlError> {
        let bad = |m: &str| Err(MarlError::Config(m.into()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_eps > 0.0 && self.value_clip > 0.0) {
            return bad("clip ranges must be positive");
        }
        if self.epochs == 0 || self.minibatches == 0 || self.rollout_len == 0 || self.n_envs == 0 {
            return bad("epochs, minibatches, rollout_len and n_envs must be positive");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0 && self.max_grad_norm > 0.0) {
            return bad("learning rates and max_grad_norm must be positive");
        }
        if self.net.hidden.contains(&0) {
            return bad("hidden sizes must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MappoLosses {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
}

/// One environment's contiguous slice of a rollout.
#[derive(Clone, Debug, Default)]
pub struct Segment {
    pub transitions: Vec<Transition>,
    /// Critic value of each transition's `state` at collection time.
    pub values: Vec<f64>,
    /// Critic value of each transition's `next_state` (unused if terminal).
    pub next_values: Vec<f64>,
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + math::ln(logits.iter().map(|l| math::exp(l - max)).sum::<f64>());
    logits.iter().map(|l| l - lse).collect()
}

/// Loss terms of one (sample, agent) pair and the gradient of
/// `surrogate - entropy_coef * entropy` with respect to the logits.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorTerms {
    pub surrogate: f64,
    pub entropy: f64,
    pub ratio: f64,
    pub logit_grad: Vec<f64>,
}

pub fn actor_terms(
    logits: &[f64],
    action: usize,
    old_log_prob: f64,
    advantage: f64,
    clip_eps: f64,
    entropy_coef: f64,
) -> ActorTerms {
    let logp = log_softmax(logits);
    let probs: Vec<f64> = logp.iter().map(|l| math::exp(*l)).collect();
    let ratio = math::exp(logp[action] - old_log_prob);
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * advantage;
    let surrogate = -unclipped.min(clipped);
    // The clipped branch is only strictly smaller when the ratio is outside
    // the trust region, where its gradient vanishes.
    let d_logp = if unclipped <= clipped { -ratio * advantage } else { 0.0 };
    let entropy: f64 = -probs.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
    let logit_grad = probs
        .iter()
        .zip(&logp)
        .enumerate()
        .map(|(k, (&p, &l))| {
            let onehot = if k == action { 1.0 } else { 0.0 };
            d_logp * (onehot - p) + entropy_coef * p * (l + entropy)
        })
        .collect();
    ActorTerms { surrogate, entropy, ratio, logit_grad }
}

/// Clipped value loss `0.5 * max((v - ret)^2, (v_clip - ret)^2)` and its
/// derivative in `v`.
pub fn value_terms(value: f64, old_value: f64, ret: f64, clip: f64) -> (f64, f64) {
    let clipped = old_value + (value - old_value).clamp(-clip, clip);
    let plain = (value - ret) * (value - ret);
    let capped = (clipped - ret) * (clipped - ret);
    if plain >= capped {
        (0.5 * plain, value - ret)
    } else {
        let inside = (value - old_value).abs() < clip;
        (0.5 * capped, if inside { clipped - ret } else { 0.0 })
    }
}

#[derive(Clone, Debug)]
pub struct Mappo {
    cfg: MappoConfig,
    n_agents: usize,
    actors: AgentNets,
    critic: Mlp,
    actor_opts: Vec<OptimState>,
    critic_opt: OptimState,
    updates: u64,
}

impl Mappo {
    pub fn new<R: Rng + ?Sized>(spec: &EnvSpec, cfg: MappoConfig, rng: &mut R) -> Result<Self, MarlError> {
        cfg.validate()?;
        let n_agents = spec.n_agents;
        let act = cfg.net.activation;
        let n_nets = if cfg.parameter_sharing { 1 } else { n_agents };
        let actor_sizes = cfg.net.sizes(spec.obs_dim(), spec.n_actions());
        let nets = (0..n_nets)
            .map(|_| Mlp::new(&actor_sizes, act, InitScheme::orthogonal(act, 0.01), rng))
            .collect::<Result<Vec<_>, _>>()?;
        let critic = Mlp::new(
            &cfg.net.sizes(spec.state_dim(), 1),
            act,
            InitScheme::orthogonal(act, 1.0),
            rng,
        )?;
        let actor_adam = AdamConfig { lr: cfg.actor_lr, eps: 1e-5, ..AdamConfig::default() };
        let critic_adam = AdamConfig { lr: cfg.critic_lr, eps: 1e-5, ..AdamConfig::default() };
        let actor_opts = nets.iter().map(|n| OptimState::new(n.num_params(), actor_adam)).collect();
        let critic_opt = OptimState::new(critic.num_params(), critic_adam);
        Ok(Self {
            cfg,
            n_agents,
            actors: AgentNets { nets, shared: n_nets == 1, frame: spec.obs_frame() },
            critic,
            actor_opts,
            critic_opt,
            updates: 0,
        })
    }

    pub fn config(&self) -> &MappoConfig {
        &self.cfg
    }

    pub fn actors(&self) -> &AgentNets {
        &self.actors
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    /// Samples one action per agent; returns actions and their log-probabilities.
    pub fn act<R: Rng + ?Sized>(
        &self,
        state: &GlobalState,
        rng: &mut R,
    ) -> Result<(Vec<usize>, Vec<f64>), MarlError> {
        let mut actions = Vec::with_capacity(self.n_agents);
        let mut log_probs = Vec::with_capacity(self.n_agents);
        for i in 0..self.n_agents {
            let logits = self.actors.net(i).forward(&self.actors.observe(state, i))?;
            let logp = log_softmax(&logits);
            let probs: Vec<f64> = logp.iter().map(|l| math::exp(*l)).collect();
            let a = sample_categorical(&probs, rng);
            actions.push(a);
            log_probs.push(logp[a]);
        }
        Ok((actions, log_probs))
    }

    pub fn value(&self, state: &GlobalState) -> Result<f64, MarlError> {
        Ok(self.critic.forward(&state.values)?[0])
    }

    pub fn policy(&self) -> TrainedPolicy {
        TrainedPolicy { algorithm: "mappo", agents: self.actors.clone() }
    }

    /// PPO update over a full rollout: GAE on the shaped rewards, then
    /// `epochs` passes of shuffled minibatches.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        segments: &[Segment],
        rng: &mut R,
    ) -> Result<MappoLosses, MarlError> {
        let cfg = self.cfg.clone();
        let mut samples: Vec<(&Transition, f64, f64, f64)> = Vec::new();
        for seg in segments {
            let rewards: Vec<f64> = seg.transitions.iter().map(|t| t.reward).collect();
            let terminal: Vec<bool> = seg.transitions.iter().map(|t| t.terminal).collect();
            let ends: Vec<bool> = seg.transitions.iter().map(|t| t.episode_end).collect();
            let (adv, ret) = gae(
                &rewards,
                &seg.values,
                &seg.next_values,
                &terminal,
                &ends,
                cfg.gamma,
                cfg.gae_lambda,
            );
            for (k, t) in seg.transitions.iter().enumerate() {
                samples.push((t, adv[k], ret[k], seg.values[k]));
            }
        }
        if samples.is_empty() {
            return Ok(MappoLosses::default());
        }
        if cfg.normalize_advantages {
            let n = samples.len() as f64;
            let mean = samples.iter().map(|s| s.1).sum::<f64>() / n;
            let var = samples.iter().map(|s| (s.1 - mean) * (s.1 - mean)).sum::<f64>() / n;
            let std = math::sqrt(var) + 1e-8;
            for s in samples.iter_mut() {
                s.1 = (s.1 - mean) / std;
            }
        }

        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mb_size = samples.len().div_ceil(cfg.minibatches);
        let mut totals = MappoLosses::default();
        let mut n_batches = 0usize;
        let mut actor_grads: Vec<Vec<f64>> =
            self.actors.nets.iter().map(|n| vec![0.0; n.num_params()]).collect();
        let mut critic_grad = vec![0.0; self.critic.num_params()];

        for _ in 0..cfg.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(mb_size) {
                actor_grads.iter_mut().for_each(|g| g.fill(0.0));
                critic_grad.fill(0.0);
                let (mut surr, mut ent, mut vloss) = (0.0, 0.0, 0.0);
                let actor_scale = 1.0 / (chunk.len() * self.n_agents) as f64;
                let critic_scale = cfg.value_coef / chunk.len() as f64;
                for &idx in chunk {
                    let (t, adv, ret, old_v) = samples[idx];
                    for i in 0..self.n_agents {
                        let net = self.actors.net(i);
                        let cache = net.forward_cached(&self.actors.observe(&t.state, i))?;
                        let terms = actor_terms(
                            cache.output(),
                            t.actions[i],
                            t.log_probs[i],
                            adv,
                            cfg.clip_eps,
                            cfg.entropy_coef,
                        );
                        surr += terms.surrogate;
                        ent += terms.entropy;
                        let g: Vec<f64> = terms.logit_grad.iter().map(|x| x * actor_scale).collect();
                        net.backward_into(&cache, &g, &mut actor_grads[self.actors.slot(i)])?;
                    }
                    let cache = self.critic.forward_cached(&t.state.values)?;
                    let (l, dv) = value_terms(cache.output()[0], old_v, ret, cfg.value_clip);
                    vloss += l;
                    self.critic.backward_into(&cache, &[dv * critic_scale], &mut critic_grad)?;
                }
                let pairs = (chunk.len() * self.n_agents) as f64;
                let (surr, ent, vloss) = (surr / pairs, ent / pairs, vloss / chunk.len() as f64);
                if !(surr.is_finite() && ent.is_finite()) {
                    return Err(MarlError::NonFinite { what: "actor loss", update: self.updates });
                }
                if !vloss.is_finite() {
                    return Err(MarlError::NonFinite { what: "critic loss", update: self.updates });
                }
                totals.actor_loss += surr - cfg.entropy_coef * ent;
                totals.entropy += ent;
                totals.critic_loss += vloss;
                n_batches += 1;

                let mut views: Vec<&mut [f64]> =
                    actor_grads.iter_mut().map(|g| g.as_mut_slice()).collect();
                clip_grad_norm(&mut views, cfg.max_grad_norm);
                clip_grad_norm(&mut [critic_grad.as_mut_slice()], cfg.max_grad_norm);
                for ((net, opt), g) in
                    self.actors.nets.iter_mut().zip(&mut self.actor_opts).zip(&actor_grads)
                {
                    opt.step(net.params_mut(), g)?;
                }
                self.critic_opt.step(self.critic.params_mut(), &critic_grad)?;
            }
        }
        self.updates += 1;
        let n = n_batches as f64;
        Ok(MappoLosses {
            actor_loss: totals.actor_loss / n,
            critic_loss: totals.critic_loss / n,
            entropy: totals.entropy / n,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_ratio_gives_vanilla_policy_gradient() {
        let logits = [0.3, -1.2, 0.8, 0.0];
        let logp = log_softmax(&logits);
        let adv = 1.7;
        let t = actor_terms(&logits, 2, logp[2], adv, 0.2, 0.0);
        assert!((t.ratio - 1.0).abs() < 1e-15);
        for k in 0..4 {
            let onehot = if k == 2 { 1.0 } else { 0.0 };
            let vanilla = -adv * (onehot - math::exp(logp[k]));
            assert!((t.logit_grad[k] - vanilla).abs() < 1e-12);
        }
    }

    #[test]
    fn clipped_region_has_no_policy_gradient() {
        let logits = [2.0, 0.0];
        let logp = log_softmax(&logits);
        // ratio = e^0.5 > 1.2 with positive advantage: clipped
        let t = actor_terms(&logits, 0, logp[0] - 0.5, 1.0, 0.2, 0.0);
        assert!(t.ratio > 1.2);
        assert!(t.logit_grad.iter().all(|g| *g == 0.0));
        // same ratio with negative advantage keeps the gradient
        let t = actor_terms(&logits, 0, logp[0] - 0.5, -1.0, 0.2, 0.0);
        assert!(t.logit_grad.iter().any(|g| *g != 0.0));
    }

    fn surrogate_objective(logits: &[f64], action: usize, old: f64, adv: f64, coef: f64) -> f64 {
        let t = actor_terms(logits, action, old, adv, 0.2, coef);
        t.surrogate - coef * t.entropy
    }

    #[test]
    fn logit_gradient_matches_finite_differences() {
        let logits = [0.1, -0.4, 0.25, 0.9, -1.0];
        let old = log_softmax(&logits)[3] + 0.05;
        let (adv, coef) = (-0.6, 0.01);
        let t = actor_terms(&logits, 3, old, adv, 0.2, coef);
        let h = 1e-6;
        for k in 0..5 {
            let mut up = logits;
            up[k] += h;
            let mut dn = logits;
            dn[k] -= h;
            let fd = (surrogate_objective(&up, 3, old, adv, coef)
                - surrogate_objective(&dn, 3, old, adv, coef))
                / (2.0 * h);
            assert!((fd - t.logit_grad[k]).abs() < 1e-7, "{k}: {fd} vs {}", t.logit_grad[k]);
        }
    }

    #[test]
    fn value_loss_clip() {
        assert_eq!(value_terms(1.0, 1.0, 0.0, 0.2), (0.5, 1.0));
        // v moved beyond the clip toward the target: clipped loss dominates,
        // gradient stops
        let (l, g) = value_terms(2.0, 0.0, 3.0, 0.2);
        assert!((l - 0.5 * 2.8 * 2.8).abs() < 1e-12);
        assert_eq!(g, 0.0);
    }
}

#[cfg(test)]
mod bandit {
    use super::*;
    use crate::env::{EnvConfig, LbfConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn learns_state_dependent_bandit() {
        let spec = EnvConfig::Lbf(LbfConfig::default()).spec();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = Mappo::new(&spec, MappoConfig::default(), &mut rng).unwrap();
        // reward each agent for picking NORTH when the first slot is below 4
        let target = |s: &GlobalState| if s.values[0] < 4.0 { 1 } else { 2 };
        let mut hit_rate = 0.0;
        for _ in 0..60 {
            let mut seg = Segment::default();
            let mut hits = 0;
            for _ in 0..256 {
                let values: Vec<f64> =
                    (0..spec.state_dim()).map(|_| rng.gen_range(0..8) as f64).collect();
                let state = GlobalState::new(values);
                let (actions, log_probs) = m.act(&state, &mut rng).unwrap();
                let good = actions.iter().filter(|&&a| a == target(&state)).count();
                hits += good;
                seg.transitions.push(Transition {
                    state: state.clone(),
                    actions,
                    env_reward: 0.0,
                    reward: good as f64,
                    aligned: Vec::new(),
                    terminal: true,
                    episode_end: true,
                    log_probs,
                    next_state: state.clone(),
                });
                seg.values.push(m.value(&state).unwrap());
                seg.next_values.push(0.0);
            }
            hit_rate = hits as f64 / 512.0;
            m.update(&[seg], &mut rng).unwrap();
        }
        assert!(hit_rate > 0.8, "hit rate {hit_rate}");
    }
}
