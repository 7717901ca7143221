//! QMIX: per-agent Q-networks combined by a monotonic mixing network whose
//! weights come from hypernetworks on the global state.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AgentNets, MarlError, NetConfig, TrainedPolicy, Transition};
use crate::env::{EnvSpec, GlobalState};
use crate::math;
use crate::nn::{clip_grad_norm, Activation, AdamConfig, ForwardCache, InitScheme, Mlp, NnError, OptimState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QmixConfig {
    pub gamma: f64,
    pub buffer_capacity: usize,
    /// Transitions per update.
    pub batch_size: usize,
    /// Gradient updates between target-network syncs.
    pub target_update_interval: u64,
    /// Environment steps between updates.
    pub train_interval: u64,
    /// Environment steps collected before the first update.
    pub learning_starts: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_anneal_steps: u64,
    pub embed_dim: usize,
    pub lr: f64,
    pub max_grad_norm: f64,
    pub double_q: bool,
    pub parameter_sharing: bool,
    pub net: NetConfig,
}

impl Default for QmixConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            buffer_capacity: 50_000,
            batch_size: 256,
            target_update_interval: 200,
            train_interval: 8,
            learning_starts: 1_000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_anneal_steps: 50_000,
            embed_dim: 32,
            lr: 5e-4,
            max_grad_norm: 10.0,
            double_q: true,
            parameter_sharing: true,
            net: NetConfig::default(),
        }
    }
}

impl QmixConfig {
    pub fn validate(&self) -> Result<(), MarlError> {
        let bad = |m: &str| Err(MarlError::Config(m.into()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("buffer_capacity must be at least batch_size, which must be positive");
        }
        let unit = 0.0..=1.0;
        if !(unit.contains(&self.epsilon_start) && unit.contains(&self.epsilon_end)) {
            return bad("epsilon must lie in [0, 1]");
        }
        if self.target_update_interval == 0 || self.train_interval == 0 || self.embed_dim == 0 {
            return bad("intervals and embed_dim must be positive");
        }
        if !(self.lr > 0.0 && self.max_grad_norm > 0.0) {
            return bad("lr and max_grad_norm must be positive");
        }
        if self.net.hidden.contains(&0) {
            return bad("hidden sizes must be positive");
        }
        Ok(())
    }

    /// Linearly annealed exploration rate after `step` environment steps.
    pub fn epsilon(&self, step: u64) -> f64 {
        if step >= self.epsilon_anneal_steps {
            return self.epsilon_end;
        }
        let frac = step as f64 / self.epsilon_anneal_steps as f64;
        self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
    }
}

/// Fixed-capacity ring buffer of transitions.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, items: Vec::new(), next: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition> {
        (0..n).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }
}

fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        math::exp(z) - 1.0
    }
}

fn elu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        math::exp(z)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Monotonic mixing network.
///
/// `Q_tot = sum_e |w2_e| * elu(sum_i q_i |w1_ie| + b1_e) + V(s)` where
/// `w1`, `b1`, `w2` and `V` are hypernetwork outputs on the global state.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixer {
    pub n_agents: usize,
    pub embed_dim: usize,
    pub hyper_w1: Mlp,
    pub hyper_b1: Mlp,
    pub hyper_w2: Mlp,
    pub hyper_v: Mlp,
}

#[derive(Clone, Debug)]
pub struct MixerCache {
    qs: Vec<f64>,
    w1: ForwardCache,
    b1: ForwardCache,
    w2: ForwardCache,
    v: ForwardCache,
    z: Vec<f64>,
}

impl Mixer {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        n_agents: usize,
        embed_dim: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let act = Activation::Relu;
        let init = InitScheme::orthogonal(act, 1.0);
        Ok(Self {
            n_agents,
            embed_dim,
            hyper_w1: Mlp::new(&[state_dim, n_agents * embed_dim], act, init, rng)?,
            hyper_b1: Mlp::new(&[state_dim, embed_dim], act, init, rng)?,
            hyper_w2: Mlp::new(&[state_dim, embed_dim], act, init, rng)?,
            hyper_v: Mlp::new(&[state_dim, embed_dim, 1], act, init, rng)?,
        })
    }

    pub fn nets(&self) -> [&Mlp; 4] {
        [&self.hyper_w1, &self.hyper_b1, &self.hyper_w2, &self.hyper_v]
    }

    pub fn nets_mut(&mut self) -> [&mut Mlp; 4] {
        [&mut self.hyper_w1, &mut self.hyper_b1, &mut self.hyper_w2, &mut self.hyper_v]
    }

    pub fn q_total(&self, qs: &[f64], state: &[f64]) -> Result<f64, NnError> {
        Ok(self.forward(qs, state)?.0)
    }

    pub fn forward(&self, qs: &[f64], state: &[f64]) -> Result<(f64, MixerCache), NnError> {
        if qs.len() != self.n_agents {
            return Err(NnError::InputDim { expected: self.n_agents, got: qs.len() });
        }
        let w1 = self.hyper_w1.forward_cached(state)?;
        let b1 = self.hyper_b1.forward_cached(state)?;
        let w2 = self.hyper_w2.forward_cached(state)?;
        let v = self.hyper_v.forward_cached(state)?;
        let e = self.embed_dim;
        let mut z = b1.output().to_vec();
        for (i, q) in qs.iter().enumerate() {
            for (k, zk) in z.iter_mut().enumerate() {
                *zk += q * w1.output()[i * e + k].abs();
            }
        }
        let q_tot = z.iter().zip(w2.output()).map(|(zk, wk)| wk.abs() * elu(*zk)).sum::<f64>()
            + v.output()[0];
        Ok((q_tot, MixerCache { qs: qs.to_vec(), w1, b1, w2, v, z }))
    }

    /// Accumulates `g * dQ_tot/dparams` into `grads` (one vector per
    /// hypernetwork, in [`Mixer::nets`] order) and returns `g * dQ_tot/dq`.
    pub fn backward_into(
        &self,
        cache: &MixerCache,
        g: f64,
        grads: &mut [Vec<f64>],
    ) -> Result<Vec<f64>, NnError> {
        let e = self.embed_dim;
        let w1 = cache.w1.output();
        let w2 = cache.w2.output();
        let dz: Vec<f64> =
            (0..e).map(|k| g * w2[k].abs() * elu_grad(cache.z[k])).collect();
        let dw2: Vec<f64> = (0..e).map(|k| g * elu(cache.z[k]) * sign(w2[k])).collect();
        let mut dw1 = vec![0.0; self.n_agents * e];
        let mut dq = vec![0.0; self.n_agents];
        for i in 0..self.n_agents {
            for k in 0..e {
                let w = w1[i * e + k];
                dw1[i * e + k] = dz[k] * cache.qs[i] * sign(w);
                dq[i] += dz[k] * w.abs();
            }
        }
        self.hyper_w1.backward_into(&cache.w1, &dw1, &mut grads[0])?;
        self.hyper_b1.backward_into(&cache.b1, &dz, &mut grads[1])?;
        self.hyper_w2.backward_into(&cache.w2, &dw2, &mut grads[2])?;
        self.hyper_v.backward_into(&cache.v, &[g], &mut grads[3])?;
        Ok(dq)
    }
}

#[derive(Clone, Debug)]
pub struct Qmix {
    cfg: QmixConfig,
    n_agents: usize,
    n_actions: usize,
    agents: AgentNets,
    mixer: Mixer,
    target_agents: AgentNets,
    target_mixer: Mixer,
    agent_opts: Vec<OptimState>,
    mixer_opts: Vec<OptimState>,
    buffer: ReplayBuffer,
    env_steps: u64,
    updates: u64,
}

impl Qmix {
    pub fn new<R: Rng + ?Sized>(spec: &EnvSpec, cfg: QmixConfig, rng: &mut R) -> Result<Self, MarlError> {
        cfg.validate()?;
        let n_agents = spec.n_agents;
        let act = cfg.net.activation;
        let n_nets = if cfg.parameter_sharing { 1 } else { n_agents };
        let sizes = cfg.net.sizes(spec.obs_dim(), spec.n_actions());
        let nets = (0..n_nets)
            .map(|_| Mlp::new(&sizes, act, InitScheme::orthogonal(act, 1.0), rng))
            .collect::<Result<Vec<_>, _>>()?;
        let agents = AgentNets { nets, shared: n_nets == 1, frame: spec.obs_frame() };
        let mixer = Mixer::new(spec.state_dim(), n_agents, cfg.embed_dim, rng)?;
        let adam = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
        let agent_opts = agents.nets.iter().map(|n| OptimState::new(n.num_params(), adam)).collect();
        let mixer_opts = mixer.nets().iter().map(|n| OptimState::new(n.num_params(), adam)).collect();
        Ok(Self {
            n_agents,
            n_actions: spec.n_actions(),
            target_agents: agents.clone(),
            target_mixer: mixer.clone(),
            agents,
            mixer,
            agent_opts,
            mixer_opts,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            env_steps: 0,
            updates: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &QmixConfig {
        &self.cfg
    }

    pub fn agents(&self) -> &AgentNets {
        &self.agents
    }

    pub fn mixer(&self) -> &Mixer {
        &self.mixer
    }

    pub fn epsilon(&self) -> f64 {
        self.cfg.epsilon(self.env_steps)
    }

    pub fn policy(&self) -> TrainedPolicy {
        TrainedPolicy { algorithm: "qmix", agents: self.agents.clone() }
    }

    /// Epsilon-greedy joint action.
    pub fn act<R: Rng + ?Sized>(&self, state: &GlobalState, rng: &mut R) -> Result<Vec<usize>, MarlError> {
        let eps = self.epsilon();
        let greedy = self.agents.greedy(state)?;
        Ok(greedy
            .actions
            .into_iter()
            .map(|a| if rng.gen::<f64>() < eps { rng.gen_range(0..self.n_actions) } else { a })
            .collect())
    }

    /// Stores a transition and runs any update or target sync that falls
    /// due. Returns the TD loss when an update ran.
    pub fn observe<R: Rng + ?Sized>(
        &mut self,
        t: Transition,
        rng: &mut R,
    ) -> Result<Option<f64>, MarlError> {
        self.buffer.push(t);
        self.env_steps += 1;
        let mut loss = None;
        if self.env_steps >= self.cfg.learning_starts
            && self.buffer.len() >= self.cfg.batch_size
            && self.env_steps % self.cfg.train_interval == 0
        {
            loss = Some(self.update(rng)?);
            if self.updates % self.cfg.target_update_interval == 0 {
                self.target_agents = self.agents.clone();
                self.target_mixer = self.mixer.clone();
            }
        }
        Ok(loss)
    }

    /// TD target `R + gamma * Q_tot_target(next)`, or `R` on terminal steps.
    pub fn td_target(&self, t: &Transition) -> Result<f64, MarlError> {
        if t.terminal {
            return Ok(t.reward);
        }
        let online = self.agents.outputs(&t.next_state)?;
        let target = self.target_agents.outputs(&t.next_state)?;
        let qs: Vec<f64> = (0..self.n_agents)
            .map(|i| {
                let pick = if self.cfg.double_q { &online[i] } else { &target[i] };
                target[i][math::argmax(pick)]
            })
            .collect();
        Ok(t.reward + self.cfg.gamma * self.target_mixer.q_total(&qs, &t.next_state.values)?)
    }

    /// One gradient step on a sampled batch; returns the mean squared TD error.
    pub fn update<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64, MarlError> {
        let batch = self.buffer.sample(self.cfg.batch_size, rng);
        let scale = 2.0 / batch.len() as f64;
        let mut agent_grads: Vec<Vec<f64>> =
            self.agents.nets.iter().map(|n| vec![0.0; n.num_params()]).collect();
        let mut mixer_grads: Vec<Vec<f64>> =
            self.mixer.nets().iter().map(|n| vec![0.0; n.num_params()]).collect();
        let mut loss = 0.0;
        for &t in &batch {
            let y = self.td_target(t)?;
            let caches = (0..self.n_agents)
                .map(|i| self.agents.net(i).forward_cached(&self.agents.observe(&t.state, i)))
                .collect::<Result<Vec<_>, _>>()?;
            let qs: Vec<f64> = caches.iter().zip(&t.actions).map(|(c, &a)| c.output()[a]).collect();
            let (q_tot, mcache) = self.mixer.forward(&qs, &t.state.values)?;
            let td = q_tot - y;
            loss += td * td;
            let dq = self.mixer.backward_into(&mcache, scale * td, &mut mixer_grads)?;
            for (i, cache) in caches.iter().enumerate() {
                let mut og = vec![0.0; self.n_actions];
                og[t.actions[i]] = dq[i];
                let slot = self.agents.slot(i);
                self.agents.net(i).backward_into(cache, &og, &mut agent_grads[slot])?;
            }
        }
        let loss = loss / batch.len() as f64;
        if !loss.is_finite() {
            return Err(MarlError::NonFinite { what: "td loss", update: self.updates });
        }
        let mut views: Vec<&mut [f64]> = agent_grads
            .iter_mut()
            .chain(mixer_grads.iter_mut())
            .map(|g| g.as_mut_slice())
            .collect();
        clip_grad_norm(&mut views, self.cfg.max_grad_norm);
        for ((net, opt), g) in self.agents.nets.iter_mut().zip(&mut self.agent_opts).zip(&agent_grads) {
            opt.step(net.params_mut(), g)?;
        }
        for ((net, opt), g) in self.mixer.nets_mut().into_iter().zip(&mut self.mixer_opts).zip(&mixer_grads) {
            opt.step(net.params_mut(), g)?;
        }
        self.updates += 1;
        Ok(loss)
    }
}
