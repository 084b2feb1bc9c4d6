//! Factored centralised actor-critic: per-agent critics `Q_i(o_i, a_i)`
//! combined by a monotonic mixer conditioned on the global state, a
//! deterministic (shared or per-agent) actor trained through the mixed
//! value, optional hysteretic critic updates and a demonstrator penalty.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::mixer::{Mixer, MixerGrads, MixerOptimiser};
use super::replay::Transition;
use crate::environment::OBS_WINDOW;
use crate::error::{Error, Result};
use crate::neural::{
    soft_update, Activation, LayerSpec, Network, NetworkSpec, Optimiser, OptimiserKind,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FacmacConfig {
    pub actor_lr: f64,
    /// Critic and mixer learning rate; the hysteretic `alpha`.
    pub critic_lr: f64,
    /// Learning rate applied to samples with negative TD error. `None`
    /// disables hysteresis.
    pub hysteresis_beta: Option<f64>,
    pub gamma: f64,
    pub tau: f64,
    pub optimiser: OptimiserKind,
    pub use_conv: bool,
    pub conv_channels: usize,
    pub actor_hidden: usize,
    pub critic_hidden: usize,
    pub mixer_width: usize,
    pub shared_actor: bool,
    /// Append battery level, air temperature and queued demand to the price
    /// window observation.
    pub local_features: bool,
    /// Weight `C` of the demonstrator penalty.
    pub supervised_weight: f64,
    /// Share of each batch drawn from demonstrator transitions when present.
    pub demo_ratio: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Environment steps between gradient updates.
    pub update_every: usize,
    pub sigma_start: f64,
    pub sigma_end: f64,
    pub reward_scale: f64,
}

impl Default for FacmacConfig {
    fn default() -> Self {
        Self {
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            hysteresis_beta: None,
            gamma: 0.99,
            tau: 0.01,
            optimiser: OptimiserKind::Adam,
            use_conv: true,
            conv_channels: 8,
            actor_hidden: 64,
            critic_hidden: 64,
            mixer_width: 32,
            shared_actor: true,
            local_features: true,
            supervised_weight: 1.0,
            demo_ratio: 0.5,
            batch_size: 32,
            buffer_capacity: 50_000,
            update_every: 1,
            sigma_start: 0.3,
            sigma_end: 0.05,
            reward_scale: 1.0,
        }
    }
}

impl FacmacConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("facmac: {m}")));
        for (name, v) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("tau", self.tau),
            ("reward_scale", self.reward_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.tau > 1.0 {
            return bad("tau must lie in (0, 1]".into());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if let Some(beta) = self.hysteresis_beta {
            if !(beta > 0.0 && beta <= self.critic_lr) {
                return bad(format!("hysteresis beta must lie in (0, critic_lr], got {beta}"));
            }
        }
        if self.supervised_weight < 0.0 || !self.supervised_weight.is_finite() {
            return bad("supervised_weight must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.demo_ratio) {
            return bad("demo_ratio must lie in [0, 1]".into());
        }
        if self.sigma_start < 0.0 || self.sigma_end < 0.0 {
            return bad("exploration noise must be non-negative".into());
        }
        for (name, v) in [
            ("conv_channels", self.conv_channels),
            ("actor_hidden", self.actor_hidden),
            ("critic_hidden", self.critic_hidden),
            ("mixer_width", self.mixer_width),
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("update_every", self.update_every),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        Ok(())
    }

    /// Ratio applied to the gradient of samples with negative TD error.
    pub fn hysteresis_factor(&self) -> Option<f64> {
        self.hysteresis_beta.map(|beta| beta / self.critic_lr)
    }
}

/// Actor: optional conv over the price window, two hidden layers and
/// bounded heads (tanh for the battery, logistic for heating and
/// consumption).
pub fn actor_spec(cfg: &FacmacConfig, extra: usize) -> Result<NetworkSpec> {
    let h = cfg.actor_hidden;
    let mut layers = Vec::new();
    let mut width = OBS_WINDOW + extra;
    if cfg.use_conv {
        layers.push(LayerSpec::Conv1d {
            channels_in: 1,
            channels_out: cfg.conv_channels,
            length: OBS_WINDOW,
            passthrough: extra,
            activation: Activation::Relu,
        });
        width = cfg.conv_channels * OBS_WINDOW + extra;
    }
    let dense = |i, o, activation| LayerSpec::Dense {
        inputs: i,
        outputs: o,
        activation,
    };
    layers.push(dense(width, h, Activation::Relu));
    layers.push(dense(h, h, Activation::Relu));
    layers.push(dense(h, 3, Activation::Identity));
    layers.push(LayerSpec::Heads {
        activations: vec![Activation::Tanh, Activation::Sigmoid, Activation::Sigmoid],
    });
    NetworkSpec::new(OBS_WINDOW + extra, layers)
}

/// Per-agent critic on `o_i ++ a_i` with one hidden layer.
pub fn critic_spec(cfg: &FacmacConfig, obs_dim: usize) -> Result<NetworkSpec> {
    NetworkSpec::new(
        obs_dim + 3,
        vec![
            LayerSpec::Dense {
                inputs: obs_dim + 3,
                outputs: cfg.critic_hidden,
                activation: Activation::Relu,
            },
            LayerSpec::Dense {
                inputs: cfg.critic_hidden,
                outputs: 1,
                activation: Activation::Identity,
            },
        ],
    )
}

fn joined(obs: &[f64], a: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(obs.len() + a.len());
    x.extend_from_slice(obs);
    x.extend_from_slice(a);
    x
}

fn to_triple(v: &[f64]) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

/// Gradients of the critic loss.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticGrads {
    pub critic: Vec<f64>,
    pub mixer: MixerGrads,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Facmac {
    pub cfg: FacmacConfig,
    pub n_agents: usize,
    pub actors: Vec<Network>,
    pub actor_targets: Vec<Network>,
    pub critic: Network,
    pub critic_target: Network,
    pub mixer: Mixer,
    pub mixer_target: Mixer,
    actor_opt: Vec<Optimiser>,
    critic_opt: Optimiser,
    mixer_opt: MixerOptimiser,
}

impl Facmac {
    /// `obs_dim` must be the price window plus any local features.
    pub fn new<R: Rng>(
        cfg: FacmacConfig,
        n_agents: usize,
        obs_dim: usize,
        state_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.check()?;
        if obs_dim < OBS_WINDOW {
            return Err(Error::Shape(format!(
                "observation of {obs_dim} values is shorter than the price window"
            )));
        }
        let spec = actor_spec(&cfg, obs_dim - OBS_WINDOW)?;
        let n_actors = if cfg.shared_actor { 1 } else { n_agents };
        let actors = (0..n_actors)
            .map(|_| Network::init(spec.clone(), rng))
            .collect::<Result<Vec<_>>>()?;
        let critic = Network::init(critic_spec(&cfg, obs_dim)?, rng)?;
        let mixer = Mixer::new(n_agents, state_dim, cfg.mixer_width, rng)?;
        Ok(Self::from_parts(cfg, actors, critic, mixer))
    }

    /// Assembles a trainer from given networks; targets start as copies.
    pub fn from_parts(cfg: FacmacConfig, actors: Vec<Network>, critic: Network, mixer: Mixer) -> Self {
        let actor_opt = actors
            .iter()
            .map(|a| Optimiser::new(cfg.optimiser, a.params().len(), cfg.actor_lr))
            .collect();
        let critic_opt = Optimiser::new(cfg.optimiser, critic.params().len(), cfg.critic_lr);
        let mixer_opt = MixerOptimiser::new(&mixer, cfg.optimiser, cfg.critic_lr);
        Self {
            n_agents: mixer.n_agents,
            actor_targets: actors.clone(),
            critic_target: critic.clone(),
            mixer_target: mixer.clone(),
            actors,
            critic,
            mixer,
            actor_opt,
            critic_opt,
            mixer_opt,
            cfg,
        }
    }

    pub fn actor_index(&self, agent: usize) -> usize {
        if self.actors.len() == 1 {
            0
        } else {
            agent
        }
    }

    /// Deterministic policy output.
    pub fn act(&self, obs: &[f64], agent: usize) -> Result<[f64; 3]> {
        self.actors[self.actor_index(agent)]
            .predict(obs)
            .map(|v| to_triple(&v))
    }

    /// Policy output plus Gaussian noise of scale `sigma`, clipped to bounds.
    pub fn select_action<R: Rng>(
        &self,
        obs: &[f64],
        agent: usize,
        sigma: f64,
        rng: &mut R,
    ) -> Result<[f64; 3]> {
        let mut a = self.act(obs, agent)?;
        if sigma > 0.0 {
            let noise = Normal::new(0.0, sigma)
                .map_err(|e| Error::InvalidArgument(format!("noise scale: {e}")))?;
            for v in &mut a {
                *v += noise.sample(rng);
            }
        }
        a[0] = a[0].clamp(-1.0, 1.0);
        a[1] = a[1].clamp(0.0, 1.0);
        a[2] = a[2].clamp(0.0, 1.0);
        Ok(a)
    }

    /// `y = r + gamma Q_tot'(s', mu'(o'))`, or `r` at the end of the day.
    pub fn td_target(&self, t: &Transition) -> Result<f64> {
        if t.done {
            return Ok(t.reward);
        }
        let mut q = Vec::with_capacity(self.n_agents);
        for (i, o) in t.next_obs.iter().enumerate() {
            let a = self.actor_targets[self.actor_index(i)].predict(o)?;
            q.push(self.critic_target.predict(&joined(o, &a))?[0]);
        }
        let (q_tot, _) = self.mixer_target.forward(&q, &t.next_state)?;
        Ok(t.reward + self.cfg.gamma * q_tot)
    }

    /// Mean squared TD loss and its gradients. With hysteresis on, samples
    /// with negative TD error contribute `beta / alpha` of their gradient.
    pub fn critic_loss_and_grads(&self, batch: &[&Transition]) -> Result<(f64, CriticGrads)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let scale_neg = self.cfg.hysteresis_factor();
        let b = batch.len() as f64;
        let mut grads = CriticGrads {
            critic: vec![0.0; self.critic.params().len()],
            mixer: self.mixer.zero_grads(),
        };
        let mut loss = 0.0;
        for t in batch {
            let y = self.td_target(t)?;
            let mut q = Vec::with_capacity(self.n_agents);
            let mut caches = Vec::with_capacity(self.n_agents);
            for (o, a) in t.obs.iter().zip(&t.actions) {
                let (out, cache) = self.critic.forward(&joined(o, a))?;
                q.push(out[0]);
                caches.push(cache);
            }
            let (q_tot, mcache) = self.mixer.forward(&q, &t.state)?;
            let delta = y - q_tot;
            loss += delta * delta / b;
            let weight = match scale_neg {
                Some(f) if delta < 0.0 => f,
                _ => 1.0,
            };
            let g = -2.0 * delta / b * weight;
            let gq = self.mixer.backward(&mcache, g, &mut grads.mixer)?;
            for (cache, gqi) in caches.iter().zip(gq) {
                self.critic.backward_into(cache, &[gqi], &mut grads.critic)?;
            }
        }
        Ok((loss, grads))
    }

    /// Applies one critic and mixer step; returns the loss before the step.
    pub fn critic_update(&mut self, batch: &[&Transition]) -> Result<f64> {
        let (loss, grads) = self.critic_loss_and_grads(batch)?;
        self.critic_opt.step(self.critic.params_mut(), &grads.critic)?;
        self.mixer_opt.step(&mut self.mixer, &grads.mixer)?;
        Ok(loss)
    }

    /// Actor loss `-mean Q_tot(s, mu(o)) + C/B sum_demo |mu(o) - a_demo|^2`
    /// and its gradient per actor network.
    pub fn actor_loss_and_grads(&self, batch: &[&Transition]) -> Result<(f64, Vec<Vec<f64>>)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let b = batch.len() as f64;
        let c = self.cfg.supervised_weight;
        let mut grads: Vec<Vec<f64>> = self.actors.iter().map(|a| vec![0.0; a.params().len()]).collect();
        let mut scratch_critic = vec![0.0; self.critic.params().len()];
        let mut scratch_mixer = self.mixer.zero_grads();
        let mut loss = 0.0;
        let act_dim = 3;
        for t in batch {
            let mut acts = Vec::with_capacity(self.n_agents);
            let mut q = Vec::with_capacity(self.n_agents);
            let mut c_caches = Vec::with_capacity(self.n_agents);
            for (i, o) in t.obs.iter().enumerate() {
                let (a, a_cache) = self.actors[self.actor_index(i)].forward(o)?;
                let (out, c_cache) = self.critic.forward(&joined(o, &a))?;
                q.push(out[0]);
                c_caches.push(c_cache);
                acts.push((a, a_cache));
            }
            let (q_tot, mcache) = self.mixer.forward(&q, &t.state)?;
            loss -= q_tot / b;
            let gq = self.mixer.backward(&mcache, -1.0 / b, &mut scratch_mixer)?;
            for (i, ((a, a_cache), c_cache)) in acts.iter().zip(&c_caches).enumerate() {
                let gx = self.critic.backward_into(c_cache, &[gq[i]], &mut scratch_critic)?;
                let mut ga = gx[gx.len() - act_dim..].to_vec();
                if t.demo && c > 0.0 {
                    let (pen, gpen) = supervised_penalty(a, &t.actions[i], c);
                    loss += pen / b;
                    for (g, gp) in ga.iter_mut().zip(gpen) {
                        *g += gp / b;
                    }
                }
                let k = self.actor_index(i);
                self.actors[k].backward_into(a_cache, &ga, &mut grads[k])?;
            }
        }
        Ok((loss, grads))
    }

    pub fn actor_update(&mut self, batch: &[&Transition]) -> Result<f64> {
        let (loss, grads) = self.actor_loss_and_grads(batch)?;
        for ((actor, opt), g) in self.actors.iter_mut().zip(&mut self.actor_opt).zip(&grads) {
            opt.step(actor.params_mut(), g)?;
        }
        Ok(loss)
    }

    pub fn update_targets(&mut self) -> Result<()> {
        let tau = self.cfg.tau;
        for (t, o) in self.actor_targets.iter_mut().zip(&self.actors) {
            soft_update(t.params_mut(), o.params(), tau)?;
        }
        soft_update(self.critic_target.params_mut(), self.critic.params(), tau)?;
        self.mixer_target.soft_update_from(&self.mixer, tau)
    }
}

/// `C * sum_k (a_k - a_demo_k)^2` and its gradient in `a`.
pub fn supervised_penalty(actor_out: &[f64], demo: &[f64; 3], weight: f64) -> (f64, [f64; 3]) {
    let mut loss = 0.0;
    let mut grad = [0.0; 3];
    for k in 0..3 {
        let d = actor_out[k] - demo[k];
        loss += weight * d * d;
        grad[k] = 2.0 * weight * d;
    }
    (loss, grad)
}
