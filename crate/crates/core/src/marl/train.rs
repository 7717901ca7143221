use alloc::boxed::Box;
use alloc::string::ToString;
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mappo::{Mappo, MappoLosses, Segment};
use super::qmix::Qmix;
use super::{evaluate, AlgorithmConfig, MarlError, TrainedPolicy, Transition};
use crate::env::{Env, EnvConfig, EnvSpec, GlobalState, JointAction};
use crate::interp::interpret;
use crate::plan::{plan_reference, AssignmentVector, PlanError, Planner};
use crate::shaping::{shape, ShapingConfig};

/// Mixed into the training seed to get the evaluation seed.
const EVAL_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
/// Mixed into the training seed to get the environment-reset stream.
const ENV_SALT: u64 = 0xd1b5_4a32_d192_ed03;

/// What to do when the planner fails mid-training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerFallback {
    /// Stop and return the run state inside [`MarlError::Planner`].
    #[default]
    Abort,
    /// Substitute the reference planner's output for the failed step.
    Reference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub shaping: ShapingConfig,
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub seed: u64,
    #[serde(default)]
    pub planner_fallback: PlannerFallback,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MarlError> {
        self.env.validate()?;
        self.algorithm.validate()?;
        if self.shaping.enabled {
            self.shaping.validate().map_err(|e| MarlError::Config(e.to_string()))?;
        }
        if self.eval_interval == 0 || self.eval_episodes == 0 {
            return Err(MarlError::Config("eval_interval and eval_episodes must be positive".into()));
        }
        Ok(())
    }

    pub fn eval_seed(&self) -> u64 {
        self.seed ^ EVAL_SALT
    }
}

/// One evaluation checkpoint. Loss and alignment columns are `None` until
/// there is something to report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub mean_eval_return: f64,
    pub min: f64,
    pub max: f64,
    pub actor_loss: Option<f64>,
    pub critic_or_td_loss: Option<f64>,
    pub epsilon: Option<f64>,
    /// Fraction of agent-steps since the previous row whose action was
    /// admissible for the planner's assignment.
    pub alignment_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub policy: TrainedPolicy,
    pub metrics: Vec<MetricsRow>,
    pub steps: u64,
}

enum Learner {
    Mappo(Mappo),
    Qmix(Qmix),
}

impl Learner {
    fn policy(&self) -> TrainedPolicy {
        match self {
            Learner::Mappo(m) => m.policy(),
            Learner::Qmix(q) => q.policy(),
        }
    }
}

struct Run<'a, 'p> {
    cfg: &'a TrainConfig,
    spec: EnvSpec,
    planner: Option<&'p mut dyn Planner>,
    metrics: Vec<MetricsRow>,
    step: u64,
    aligned: u64,
    judged: u64,
    actor_loss: Option<f64>,
    critic_loss: Option<f64>,
}

impl Run<'_, '_> {
    /// Shaped reward and alignment flags for one step.
    fn shaped(
        &mut self,
        state: &GlobalState,
        actions: &JointAction,
        env_reward: f64,
        learner: &Learner,
    ) -> Result<(f64, Vec<bool>), MarlError> {
        let Some(planner) = self.planner.as_deref_mut() else {
            return Ok((env_reward, Vec::new()));
        };
        let view = interpret(state, &self.spec)?;
        let planned = planner.plan(&view).and_then(|v| {
            v.validate(&self.spec)?;
            Ok::<AssignmentVector, PlanError>(v)
        });
        let assignments = match planned {
            Ok(v) => v,
            Err(source) => match self.cfg.planner_fallback {
                PlannerFallback::Reference => plan_reference(&view, &self.spec),
                PlannerFallback::Abort => {
                    return Err(MarlError::Planner {
                        step: self.step,
                        source,
                        partial: Box::new(self.outcome(learner)),
                    })
                }
            },
        };
        let shaped = shape(env_reward, actions, &assignments, &view, &self.spec, &self.cfg.shaping)
            .map_err(|e| MarlError::Config(e.to_string()))?;
        self.aligned += shaped.aligned_count() as u64;
        self.judged += shaped.aligned.len() as u64;
        Ok((shaped.total, shaped.aligned))
    }

    fn outcome(&self, learner: &Learner) -> TrainOutcome {
        TrainOutcome { policy: learner.policy(), metrics: self.metrics.clone(), steps: self.step }
    }

    fn record(&mut self, learner: &Learner) -> Result<(), MarlError> {
        let policy = learner.policy();
        let eval = evaluate(&policy, &self.cfg.env, self.cfg.eval_episodes, self.cfg.eval_seed())?;
        let alignment_rate =
            if self.judged > 0 { Some(self.aligned as f64 / self.judged as f64) } else { None };
        let epsilon = match learner {
            Learner::Qmix(q) => Some(q.epsilon()),
            Learner::Mappo(_) => None,
        };
        self.metrics.push(MetricsRow {
            step: self.step,
            mean_eval_return: eval.mean,
            min: eval.min,
            max: eval.max,
            actor_loss: self.actor_loss,
            critic_or_td_loss: self.critic_loss,
            epsilon,
            alignment_rate,
        });
        self.aligned = 0;
        self.judged = 0;
        Ok(())
    }

    /// Advances the step counter and evaluates on interval crossings.
    fn tick(&mut self, learner: &Learner) -> Result<(), MarlError> {
        self.step += 1;
        if self.step % self.cfg.eval_interval == 0 {
            self.record(learner)?;
        }
        Ok(())
    }

    fn finish(mut self, learner: &Learner) -> Result<TrainOutcome, MarlError> {
        if self.step > 0 && self.metrics.last().map(|m| m.step) != Some(self.step) {
            self.record(learner)?;
        }
        Ok(self.outcome(learner))
    }
}

/// Trains a policy with per-step planning and reward shaping.
///
/// The planner, when given, is consulted every environment step even with
/// shaping disabled so that alignment can be logged; it never touches the
/// learner's random streams, so a disabled-shaping run is bit-identical to
/// a run without a planner. `total_steps` counts environment steps summed
/// over parallel environments.
pub fn train(
    cfg: &TrainConfig,
    planner: Option<&mut dyn Planner>,
) -> Result<TrainOutcome, MarlError> {
    cfg.validate()?;
    if cfg.shaping.enabled && planner.is_none() {
        return Err(MarlError::Config("shaping is enabled but no planner was supplied".into()));
    }
    let spec = cfg.env.spec();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut env_seeds = ChaCha8Rng::seed_from_u64(cfg.seed ^ ENV_SALT);
    let mut run = Run {
        cfg,
        spec: spec.clone(),
        planner,
        metrics: Vec::new(),
        step: 0,
        aligned: 0,
        judged: 0,
        actor_loss: None,
        critic_loss: None,
    };
    match &cfg.algorithm {
        AlgorithmConfig::Mappo(mc) => {
            let mut learner = Learner::Mappo(Mappo::new(&spec, mc.clone(), &mut rng)?);
            let mut envs = (0..mc.n_envs).map(|_| Env::new(&cfg.env)).collect::<Result<Vec<_>, _>>()?;
            let mut states = Vec::with_capacity(envs.len());
            for env in envs.iter_mut() {
                states.push(env.reset(env_seeds.next_u64())?);
            }
            while run.step < cfg.total_steps {
                let mut segments: Vec<Segment> = (0..envs.len()).map(|_| Segment::default()).collect();
                'rollout: for _ in 0..mc.rollout_len {
                    for (e, env) in envs.iter_mut().enumerate() {
                        if run.step >= cfg.total_steps {
                            break 'rollout;
                        }
                        let Learner::Mappo(m) = &learner else { unreachable!() };
                        let (actions, log_probs) = m.act(&states[e], &mut rng)?;
                        let joint = JointAction::new(actions);
                        let result = env.step(&joint)?;
                        let (reward, aligned) = run.shaped(&states[e], &joint, result.reward, &learner)?;
                        let terminal = result.terminal();
                        let next_state = result.next_state.clone();
                        segments[e].transitions.push(Transition {
                            state: core::mem::replace(&mut states[e], result.next_state),
                            actions: joint.actions,
                            env_reward: result.reward,
                            reward,
                            aligned,
                            terminal,
                            episode_end: result.done,
                            log_probs,
                            next_state,
                        });
                        if result.done {
                            states[e] = env.reset(env_seeds.next_u64())?;
                        }
                        run.tick(&learner)?;
                    }
                }
                let Learner::Mappo(m) = &mut learner else { unreachable!() };
                for seg in segments.iter_mut() {
                    fill_values(m, seg)?;
                }
                let MappoLosses { actor_loss, critic_loss, .. } = m.update(&segments, &mut rng)?;
                run.actor_loss = Some(actor_loss);
                run.critic_loss = Some(critic_loss);
            }
            run.finish(&learner)
        }
        AlgorithmConfig::Qmix(qc) => {
            let mut learner = Learner::Qmix(Qmix::new(&spec, qc.clone(), &mut rng)?);
            let mut env = Env::new(&cfg.env)?;
            let mut state = env.reset(env_seeds.next_u64())?;
            while run.step < cfg.total_steps {
                let Learner::Qmix(q) = &learner else { unreachable!() };
                let joint = JointAction::new(q.act(&state, &mut rng)?);
                let result = env.step(&joint)?;
                let (reward, aligned) = run.shaped(&state, &joint, result.reward, &learner)?;
                let t = Transition {
                    state: core::mem::replace(&mut state, result.next_state.clone()),
                    actions: joint.actions,
                    env_reward: result.reward,
                    reward,
                    aligned,
                    terminal: result.terminal(),
                    episode_end: result.done,
                    log_probs: Vec::new(),
                    next_state: result.next_state,
                };
                if t.episode_end {
                    state = env.reset(env_seeds.next_u64())?;
                }
                let Learner::Qmix(q) = &mut learner else { unreachable!() };
                if let Some(loss) = q.observe(t, &mut rng)? {
                    run.critic_loss = Some(loss);
                }
                run.tick(&learner)?;
            }
            run.finish(&learner)
        }
    }
}

/// Critic values for a collected segment, reusing the next transition's
/// state value where the trajectory continues.
fn fill_values(m: &Mappo, seg: &mut Segment) -> Result<(), MarlError> {
    let n = seg.transitions.len();
    seg.values = seg.transitions.iter().map(|t| m.value(&t.state)).collect::<Result<_, _>>()?;
    seg.next_values = Vec::with_capacity(n);
    for (k, t) in seg.transitions.iter().enumerate() {
        let v = if t.terminal {
            0.0
        } else if !t.episode_end && k + 1 < n {
            seg.values[k + 1]
        } else {
            m.value(&t.next_state)?
        };
        seg.next_values.push(v);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::LbfConfig;
    use crate::marl::MappoConfig;
    use crate::plan::ReferencePlanner;

    fn small(shaping: ShapingConfig, total_steps: u64) -> TrainConfig {
        TrainConfig {
            env: EnvConfig::Lbf(LbfConfig::default()),
            algorithm: AlgorithmConfig::Mappo(MappoConfig {
                rollout_len: 16,
                n_envs: 2,
                ..MappoConfig::default()
            }),
            shaping,
            total_steps,
            eval_interval: 40,
            eval_episodes: 2,
            seed: 11,
            planner_fallback: PlannerFallback::Abort,
        }
    }

    #[test]
    fn zero_budget_gives_empty_metrics() {
        let out = train(&small(ShapingConfig::disabled(), 0), None).unwrap();
        assert!(out.metrics.is_empty());
        assert_eq!(out.steps, 0);
    }

    #[test]
    fn shaping_without_planner_is_rejected() {
        assert!(matches!(
            train(&small(ShapingConfig::default(), 10), None),
            Err(MarlError::Config(_))
        ));
    }

    #[test]
    fn rows_at_interval_crossings_and_end() {
        let out = train(&small(ShapingConfig::disabled(), 100), None).unwrap();
        let steps: Vec<u64> = out.metrics.iter().map(|m| m.step).collect();
        assert_eq!(steps, alloc::vec![40, 80, 100]);
        assert!(out.metrics.iter().all(|m| m.alignment_rate.is_none()));
    }

    #[test]
    fn disabled_shaping_ignores_planner() {
        let cfg = small(ShapingConfig::disabled(), 100);
        let mut planner = ReferencePlanner::new(cfg.env.spec());
        let with = train(&cfg, Some(&mut planner)).unwrap();
        let without = train(&cfg, None).unwrap();
        assert_eq!(with.policy, without.policy);
        for (a, b) in with.metrics.iter().zip(&without.metrics) {
            assert_eq!(a.mean_eval_return.to_bits(), b.mean_eval_return.to_bits());
            assert_eq!(a.actor_loss.map(f64::to_bits), b.actor_loss.map(f64::to_bits));
        }
        assert!(with.metrics[0].alignment_rate.is_some());
    }

    struct Failing;

    impl Planner for Failing {
        fn plan(&mut self, _: &crate::interp::InterpretedState) -> Result<AssignmentVector, PlanError> {
            Err(PlanError::Timeout(5))
        }
    }

    #[test]
    fn planner_failure_aborts_or_falls_back() {
        let mut cfg = small(ShapingConfig::default(), 60);
        match train(&cfg, Some(&mut Failing)) {
            Err(MarlError::Planner { step: 0, source: PlanError::Timeout(5), partial }) => {
                assert_eq!(partial.steps, 0)
            }
            other => panic!("unexpected {other:?}"),
        }
        cfg.planner_fallback = PlannerFallback::Reference;
        let mut reference = ReferencePlanner::new(cfg.env.spec());
        let fallback = train(&cfg, Some(&mut Failing)).unwrap();
        let direct = train(&cfg, Some(&mut reference)).unwrap();
        assert_eq!(fallback.policy, direct.policy);
    }
}
