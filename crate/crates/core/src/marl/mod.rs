//! Multi-agent trainers: FACMAC (optionally with a demonstrator penalty)
//! and four tabular IQL variants.

mod facmac;
mod iql;
mod mixer;
mod replay;

pub use facmac::{actor_spec, critic_spec, supervised_penalty, CriticGrads, Facmac, FacmacConfig};
pub use iql::{
    action_index, action_value, equal_frequency_edges, parse_qtable, write_qtable, IqlTransition, QTable,
    RewardSignal, AXIS_POINTS, N_ACTIONS, QTABLE_MAGIC,
};
pub use mixer::{MixCache, Mixer, MixerGrads, MixerOptimiser};
pub use replay::{ReplayBuffer, Transition};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{
    CostBreakdown, EnvConfig, EnvState, Environment, HomeAction, JointAction, ObservationMode, OBS_WINDOW,
};
use crate::error::{Error, Result};
use crate::harness::compute_savings;
use crate::neural::Network;
use crate::oracle::{baseline_day, extract_demonstrations, solve_day};
use crate::profiles::ScenarioData;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Method {
    #[default]
    #[serde(rename = "facmac")]
    Facmac,
    #[serde(rename = "facmac+supervised")]
    FacmacSupervised,
    #[serde(rename = "iql")]
    Iql,
    #[serde(rename = "iql+marginal")]
    IqlMarginal,
    #[serde(rename = "iql+opt")]
    IqlOpt,
    #[serde(rename = "iql+opt+marginal")]
    IqlOptMarginal,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Facmac,
        Method::FacmacSupervised,
        Method::Iql,
        Method::IqlMarginal,
        Method::IqlOpt,
        Method::IqlOptMarginal,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::Facmac => "facmac",
            Method::FacmacSupervised => "facmac+supervised",
            Method::Iql => "iql",
            Method::IqlMarginal => "iql+marginal",
            Method::IqlOpt => "iql+opt",
            Method::IqlOptMarginal => "iql+opt+marginal",
        }
    }

    pub fn is_facmac(self) -> bool {
        matches!(self, Method::Facmac | Method::FacmacSupervised)
    }

    /// Uses LP demonstrations during training.
    pub fn uses_demonstrator(self) -> bool {
        matches!(self, Method::FacmacSupervised | Method::IqlOpt | Method::IqlOptMarginal)
    }

    pub fn uses_marginal_reward(self) -> bool {
        matches!(self, Method::IqlMarginal | Method::IqlOptMarginal)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = Method::ALL.iter().map(|m| m.id()).collect();
                Error::Config(format!("unknown method `{s}` (expected one of {})", known.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IqlConfig {
    pub alpha: f64,
    /// Rate for non-positive TD errors; `None` (or `alpha`) disables
    /// hysteresis. Independent learners treat a teammate's exploration as
    /// noise, so a slow negative rate keeps them optimistic.
    pub hysteresis_beta: Option<f64>,
    pub gamma: f64,
    pub n_bins: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
}

impl Default for IqlConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            hysteresis_beta: Some(0.02),
            gamma: 0.99,
            n_bins: 10,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
        }
    }
}

impl IqlConfig {
    pub fn check(&self) -> Result<()> {
        QTable::new(vec![], 1, self.alpha, self.hysteresis_beta, self.gamma)?;
        if self.n_bins == 0 {
            return Err(Error::Config("iql n_bins must be positive".into()));
        }
        for e in [self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Config(format!("iql epsilon must lie in [0, 1], got {e}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Episodes between learning-curve evaluations; 0 evaluates only at the
    /// start and the end.
    pub eval_every: usize,
    pub env: EnvConfig,
    pub facmac: FacmacConfig,
    pub iql: IqlConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 200,
            eval_every: 0,
            env: EnvConfig::default(),
            facmac: FacmacConfig::default(),
            iql: IqlConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        self.facmac.check()?;
        self.iql.check()
    }
}

/// Fraction of the way through the decay, which spans the first half of
/// training.
fn decay(start: f64, end: f64, episode: usize, episodes: usize) -> f64 {
    let span = (episodes / 2).max(1) as f64;
    let frac = (episode as f64 / span).min(1.0);
    start * (1.0 - frac) + end * frac
}

/// Normalised actor-critic inputs: the price window is standardised with
/// the training scenario's grid-cost statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObsEncoder {
    pub mean: f64,
    pub scale: f64,
    pub local_features: bool,
}

impl ObsEncoder {
    pub fn fit(s: &ScenarioData, local_features: bool) -> Self {
        let c = &s.grid.cost_coeff;
        let n = c.len().max(1) as f64;
        let mean = c.iter().sum::<f64>() / n;
        let var = c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        Self {
            mean,
            scale: if sd > 1e-12 { 1.0 / sd } else { 1.0 },
            local_features,
        }
    }

    pub fn obs_dim(&self) -> usize {
        OBS_WINDOW + if self.local_features { 3 } else { 0 }
    }

    fn normalise(&self, window: &mut [f64]) {
        for v in window {
            *v = (*v - self.mean) * self.scale;
        }
    }

    pub fn observe(&self, env: &Environment, state: &EnvState, agent: usize) -> Vec<f64> {
        let mut o = env.observe(state, agent, ObservationMode::Facmac);
        self.normalise(&mut o);
        if self.local_features {
            o.extend(env.local_features(state, agent));
        }
        o
    }

    pub fn global_state(&self, env: &Environment, state: &EnvState) -> Vec<f64> {
        let mut s = env.global_state(state);
        self.normalise(&mut s[..OBS_WINDOW]);
        s
    }
}

/// Trained (or initial) decentralised policies: what each agent needs to
/// act on its own observation.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySet {
    /// One shared actor, or one per agent.
    Facmac { actors: Vec<Network>, encoder: ObsEncoder },
    Iql { tables: Vec<QTable> },
}

impl PolicySet {
    /// Greedy joint action.
    pub fn act(&self, env: &Environment, state: &EnvState) -> Result<JointAction> {
        let n = env.n_homes();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let a = match self {
                PolicySet::Facmac { actors, encoder } => {
                    let actor = &actors[if actors.len() == 1 { 0 } else { i }];
                    let y = actor.predict(&encoder.observe(env, state, i))?;
                    [y[0], y[1], y[2]]
                }
                PolicySet::Iql { tables } => {
                    let t = &tables[i];
                    let c = env.observe(state, i, ObservationMode::Iql)[0];
                    action_value(t.greedy(t.bin(c)))
                }
            };
            out.push(HomeAction::from_slice(&a));
        }
        Ok(JointAction(out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub cost_per_day: f64,
    /// Mean per-day cost terms.
    pub breakdown: CostBreakdown,
}

/// Mean daily cost of a deterministic policy over `days`.
pub fn evaluate_with(
    env: &Environment,
    days: &[usize],
    mut policy: impl FnMut(&Environment, &EnvState) -> Result<JointAction>,
) -> Result<Evaluation> {
    if days.is_empty() {
        return Err(Error::InvalidArgument("no evaluation days".into()));
    }
    let mut total = CostBreakdown::default();
    for &day in days {
        let mut state = env.reset(day);
        while state.step < env.horizon() {
            let a = policy(env, &state)?;
            env.step(&mut state, &a)?;
        }
        total.add(&state.costs);
    }
    let breakdown = total.scaled(1.0 / days.len() as f64);
    Ok(Evaluation {
        cost_per_day: breakdown.total(),
        breakdown,
    })
}

pub fn evaluate(env: &Environment, policy: &PolicySet, days: &[usize]) -> Result<Evaluation> {
    evaluate_with(env, days, |env, state| policy.act(env, state))
}

/// Team reward of `joint` and, per agent, the team reward minus the reward
/// with that agent switched to its default action. One simulation for the
/// joint action plus one per agent, each from a copy of `state`.
pub fn marginal_rewards(env: &Environment, state: &EnvState, joint: &JointAction) -> Result<(f64, Vec<f64>)> {
    let mut probe = state.clone();
    let r = env.step(&mut probe, joint)?.reward;
    let mut alt = joint.clone();
    let mut out = Vec::with_capacity(joint.0.len());
    for i in 0..joint.0.len() {
        let own = alt.0[i];
        alt.0[i] = HomeAction::DEFAULT;
        probe.clone_from(state);
        out.push(r - env.step(&mut probe, &alt)?.reward);
        alt.0[i] = own;
    }
    Ok((r, out))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub eval_cost: f64,
    pub savings: f64,
    /// Cumulative training seconds, evaluation excluded.
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub policy: PolicySet,
    pub curve: Vec<CurvePoint>,
    pub train_seconds: f64,
}

struct Curve<'a> {
    env: &'a Environment<'a>,
    days: Vec<usize>,
    baseline: f64,
    points: Vec<CurvePoint>,
}

impl<'a> Curve<'a> {
    fn new(env: &'a Environment<'a>) -> Result<Self> {
        let days: Vec<usize> = (0..env.scenario().n_days).collect();
        let mut baseline = 0.0;
        for &d in &days {
            baseline += baseline_day(env, d)?.total();
        }
        Ok(Self {
            env,
            baseline: baseline / days.len().max(1) as f64,
            days,
            points: Vec::new(),
        })
    }

    fn record(&mut self, episode: usize, policy: &PolicySet, seconds: f64) -> Result<()> {
        let cost = evaluate(self.env, policy, &self.days)?.cost_per_day;
        self.points.push(CurvePoint {
            episode,
            eval_cost: cost,
            savings: compute_savings(self.baseline, cost, self.env.n_homes())?,
            seconds,
        });
        Ok(())
    }

    fn due(&self, episode: usize, episodes: usize, every: usize) -> bool {
        episode == episodes || (every > 0 && episode % every == 0)
    }
}

/// Trains `method` on days sampled from `train_days` and evaluates on every
/// day of `eval_days`. Deterministic for a fixed `seed`.
pub fn train(
    method: Method,
    train_days: &ScenarioData,
    eval_days: &ScenarioData,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutput> {
    cfg.check()?;
    if train_days.n_homes != eval_days.n_homes || train_days.horizon != eval_days.horizon {
        return Err(Error::InvalidArgument(
            "training and evaluation scenarios differ in homes or horizon".into(),
        ));
    }
    let env = Environment::new(train_days, cfg.env)?;
    let eval_env = Environment::new(eval_days, cfg.env)?;
    let mut curve = Curve::new(&eval_env)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seconds = 0.0;
    if method.is_facmac() {
        let encoder = ObsEncoder::fit(train_days, cfg.facmac.local_features);
        let mut trainer = Facmac::new(
            cfg.facmac.clone(),
            env.n_homes(),
            encoder.obs_dim(),
            Environment::global_state_len(env.n_homes()),
            &mut rng,
        )?;
        let policy = |t: &Facmac| PolicySet::Facmac {
            actors: t.actors.clone(),
            encoder,
        };
        curve.record(0, &policy(&trainer), 0.0)?;
        let mut run = FacmacRun::new(&cfg.facmac);
        for ep in 1..=cfg.episodes {
            let start = Instant::now();
            run.episode(method, &env, &mut trainer, &encoder, ep - 1, cfg.episodes, &mut rng)?;
            seconds += start.elapsed().as_secs_f64();
            if curve.due(ep, cfg.episodes, cfg.eval_every) {
                curve.record(ep, &policy(&trainer), seconds)?;
            }
        }
        return Ok(TrainOutput {
            policy: policy(&trainer),
            curve: curve.points,
            train_seconds: seconds,
        });
    }

    let edges = equal_frequency_edges(&train_days.grid.cost_coeff, cfg.iql.n_bins)?;
    let tables = (0..env.n_homes())
        .map(|_| QTable::new(edges.clone(), N_ACTIONS, cfg.iql.alpha, cfg.iql.hysteresis_beta, cfg.iql.gamma))
        .collect::<Result<Vec<_>>>()?;
    let mut policy = PolicySet::Iql { tables };
    curve.record(0, &policy, 0.0)?;
    for ep in 1..=cfg.episodes {
        let start = Instant::now();
        let PolicySet::Iql { tables } = &mut policy else {
            unreachable!()
        };
        iql_episode(method, &env, tables, &cfg.iql, ep - 1, cfg.episodes, &mut rng)?;
        seconds += start.elapsed().as_secs_f64();
        if curve.due(ep, cfg.episodes, cfg.eval_every) {
            curve.record(ep, &policy, seconds)?;
        }
    }
    Ok(TrainOutput {
        policy,
        curve: curve.points,
        train_seconds: seconds,
    })
}

struct FacmacRun {
    buffer: ReplayBuffer<Transition>,
    demos: ReplayBuffer<Transition>,
    steps: usize,
}

impl FacmacRun {
    fn new(cfg: &FacmacConfig) -> Self {
        Self {
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            demos: ReplayBuffer::new(cfg.buffer_capacity),
            steps: 0,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn episode(
        &mut self,
        method: Method,
        env: &Environment,
        trainer: &mut Facmac,
        encoder: &ObsEncoder,
        episode: usize,
        episodes: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        let cfg = trainer.cfg.clone();
        let day = rng.random_range(0..env.scenario().n_days);
        let n = env.n_homes();
        if method == Method::FacmacSupervised {
            let demo = extract_demonstrations(env, &solve_day(env, day)?)?;
            let mut state = env.reset(day);
            for joint in &demo.actions {
                let t = transition(env, encoder, &mut state, joint, cfg.reward_scale, true)?;
                self.demos.push(t);
            }
        }
        let sigma = decay(cfg.sigma_start, cfg.sigma_end, episode, episodes);
        let mut state = env.reset(day);
        while state.step < env.horizon() {
            let mut joint = Vec::with_capacity(n);
            for i in 0..n {
                let o = encoder.observe(env, &state, i);
                joint.push(HomeAction::from_slice(&trainer.select_action(&o, i, sigma, rng)?));
            }
            let t = transition(env, encoder, &mut state, &JointAction(joint), cfg.reward_scale, false)?;
            self.buffer.push(t);
            self.steps += 1;
            if self.steps % cfg.update_every == 0 && self.buffer.len() >= cfg.batch_size {
                let batch = if self.demos.is_empty() {
                    self.buffer.sample(cfg.batch_size, rng)
                } else {
                    let k = (cfg.batch_size as f64 * cfg.demo_ratio).round() as usize;
                    let mut b = self.demos.sample(k, rng);
                    b.extend(self.buffer.sample(cfg.batch_size - k, rng));
                    b
                };
                trainer.critic_update(&batch)?;
                trainer.actor_update(&batch)?;
                trainer.update_targets()?;
            }
        }
        Ok(())
    }
}

/// Steps `state` with `joint` and records the transition.
fn transition(
    env: &Environment,
    encoder: &ObsEncoder,
    state: &mut EnvState,
    joint: &JointAction,
    reward_scale: f64,
    demo: bool,
) -> Result<Transition> {
    let n = env.n_homes();
    let obs: Vec<Vec<f64>> = (0..n).map(|i| encoder.observe(env, state, i)).collect();
    let s = encoder.global_state(env, state);
    let out = env.step(state, joint)?;
    Ok(Transition {
        obs,
        actions: joint.0.iter().map(|a| a.to_array()).collect(),
        reward: out.reward * reward_scale,
        next_obs: (0..n).map(|i| encoder.observe(env, state, i)).collect(),
        state: s,
        next_state: encoder.global_state(env, state),
        done: out.done,
        demo,
    })
}

fn iql_bins(env: &Environment, state: &EnvState, tables: &[QTable]) -> Vec<usize> {
    tables
        .iter()
        .enumerate()
        .map(|(i, t)| t.bin(env.observe(state, i, ObservationMode::Iql)[0]))
        .collect()
}

/// Steps the environment and updates every table with its own cell.
fn iql_step(
    env: &Environment,
    state: &mut EnvState,
    tables: &mut [QTable],
    joint: &JointAction,
    cells: &[usize],
    signal: RewardSignal,
) -> Result<()> {
    let bins = iql_bins(env, state, tables);
    let marginal = match signal {
        RewardSignal::Marginal => marginal_rewards(env, state, joint)?.1,
        RewardSignal::Team => vec![0.0; tables.len()],
    };
    let out = env.step(state, joint)?;
    let next = (!out.done).then(|| iql_bins(env, state, tables));
    for (i, table) in tables.iter_mut().enumerate() {
        table.update(
            &IqlTransition {
                bin: bins[i],
                action: cells[i],
                reward: out.reward,
                marginal_reward: marginal[i],
                next_bin: next.as_ref().map(|b| b[i]),
            },
            signal,
        )?;
    }
    Ok(())
}

fn iql_episode(
    method: Method,
    env: &Environment,
    tables: &mut [QTable],
    cfg: &IqlConfig,
    episode: usize,
    episodes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let signal = if method.uses_marginal_reward() {
        RewardSignal::Marginal
    } else {
        RewardSignal::Team
    };
    let day = rng.random_range(0..env.scenario().n_days);
    if method.uses_demonstrator() {
        // The demonstrator's exact actions drive the environment; each agent
        // credits the grid cell nearest to its own demonstrated action.
        let demo = extract_demonstrations(env, &solve_day(env, day)?)?;
        let mut state = env.reset(day);
        for joint in &demo.actions {
            let cells: Vec<usize> = joint.0.iter().map(|a| action_index(&a.to_array())).collect();
            iql_step(env, &mut state, tables, joint, &cells, signal)?;
        }
    }
    let eps = decay(cfg.epsilon_start, cfg.epsilon_end, episode, episodes);
    let mut state = env.reset(day);
    while state.step < env.horizon() {
        let bins = iql_bins(env, &state, tables);
        let cells: Vec<usize> = tables
            .iter()
            .zip(&bins)
            .map(|(t, &b)| {
                if rng.random::<f64>() < eps {
                    rng.random_range(0..N_ACTIONS)
                } else {
                    t.greedy(b)
                }
            })
            .collect();
        let joint = JointAction(cells.iter().map(|&c| HomeAction::from_slice(&action_value(c))).collect());
        iql_step(env, &mut state, tables, &joint, &cells, signal)?;
    }
    Ok(())
}
