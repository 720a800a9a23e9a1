//! DQN learner over final-hierarchy decisions, with prioritized replay,
//! a periodically synced target network and the cross-dataset loop.

mod replay;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use replay::{PrioritizedReplay, Sample, SumTree, PRIORITY_FLOOR};

use crate::environment::{EnvError, Environment, EnvironmentConfig, EpisodeResult, FlatActions, LearningJob, StateVector, StepOutcome};
use crate::hstep::{self, LevelContext, LevelSelector, Slot};
use crate::neuralnet::{huber, huber_grad, Adam, AdamSettings, NetConfig, NetError, QNetwork};
use crate::primitives::Catalog;
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("no dataset in the corpus passes the environment's checks")]
    NoUsableDataset,
    #[error("checkpoint was written for catalog {stored}, current catalog is {current}")]
    CatalogMismatch { stored: String, current: String },
    #[error("checkpoint head has {found} outputs, the action space needs {expected}")]
    HeadMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Episodes over which ε decays linearly.
    pub epsilon_episodes: usize,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub per_alpha: f64,
    pub per_beta_start: f64,
    pub per_beta_end: f64,
    /// Learner steps between target syncs.
    pub target_sync: u64,
    /// Environment steps between learner steps.
    pub train_every: u64,
    pub eval_epsilon: f64,
    /// Apply ε at intermediate tournament levels too, not only the last.
    pub explore_all_levels: bool,
    pub learning_rate: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_episodes: 2000,
            replay_capacity: 100_000,
            batch_size: 32,
            per_alpha: 0.6,
            per_beta_start: 0.4,
            per_beta_end: 1.0,
            target_sync: 1000,
            train_every: 4,
            eval_epsilon: 0.05,
            explore_all_levels: true,
            learning_rate: 5e-4,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let checks = [
            (unit(self.gamma), "gamma must lie in [0, 1]"),
            (
                unit(self.epsilon_start) && unit(self.epsilon_end) && unit(self.eval_epsilon),
                "exploration rates must lie in [0, 1]",
            ),
            (self.replay_capacity > 0 && self.batch_size > 0, "replay capacity and batch size must be positive"),
            (self.batch_size <= self.replay_capacity, "batch cannot exceed replay capacity"),
            (self.per_alpha >= 0.0, "priority exponent must be non-negative"),
            (
                unit(self.per_beta_start) && unit(self.per_beta_end),
                "importance exponents must lie in [0, 1]",
            ),
            (self.target_sync > 0 && self.train_every > 0, "sync and training periods must be positive"),
            (self.learning_rate > 0.0 && self.learning_rate.is_finite(), "learning rate must be positive"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(AgentError::Config((*msg).to_string())),
            None => Ok(()),
        }
    }

    /// Linear decay from start to end over `epsilon_episodes`.
    pub fn epsilon(&self, episode: usize) -> f64 {
        if self.epsilon_episodes == 0 {
            return self.epsilon_end;
        }
        let frac = (episode as f64 / self.epsilon_episodes as f64).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// With probability `epsilon` a uniform index, otherwise the first maximum.
pub fn epsilon_greedy<T: Scalar>(values: &[T], epsilon: f64, rng: &mut impl Rng) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        return rng.gen_range(0..values.len());
    }
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn bellman_target(reward: f64, done: bool, max_next_q: f64, gamma: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * max_next_q
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Hierarchical,
    Flat,
}

/// How decisions map to environment actions.
#[derive(Clone, Debug)]
pub enum ActionSpace {
    Hierarchical,
    Flat(FlatActions),
}

impl ActionSpace {
    pub fn new(mode: Mode, catalog: &Catalog, env: &EnvironmentConfig) -> Self {
        match mode {
            Mode::Hierarchical => ActionSpace::Hierarchical,
            Mode::Flat => ActionSpace::Flat(FlatActions::new(catalog, env.rows, env.n_in)),
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            ActionSpace::Hierarchical => Mode::Hierarchical,
            ActionSpace::Flat(_) => Mode::Flat,
        }
    }

    pub fn net_config(&self, catalog: &Catalog, env: &EnvironmentConfig) -> NetConfig {
        match self {
            ActionSpace::Hierarchical => NetConfig::hierarchical(catalog.len(), env.rows, env.n_in, env.cluster_size),
            ActionSpace::Flat(f) => NetConfig::flat(catalog.len(), env.rows, env.n_in, f.len()),
        }
    }

    /// An environment configured for this space.
    pub fn environment(&self, config: EnvironmentConfig, catalog: Arc<Catalog>) -> Result<Environment, AgentError> {
        let mut env = Environment::new(config, catalog)?;
        env.set_candidate_meta(matches!(self, ActionSpace::Hierarchical));
        Ok(env)
    }
}

/// One agent decision applied to the environment.
#[derive(Clone, Debug)]
pub struct Decision {
    /// The state the network chose from: base state plus the final
    /// cluster's slots (no slots in flat mode).
    pub state: StateVector,
    pub action: usize,
    pub outcome: StepOutcome,
    /// Q of the chosen action, when requested.
    pub q: Option<f64>,
}

struct NetSelector<'a, T> {
    net: &'a QNetwork<T>,
    epsilon: f64,
    explore_all_levels: bool,
    want_q: bool,
    rng: &'a mut ChaCha8Rng,
    final_q: Option<f64>,
    error: Option<NetError>,
}

impl<T: Scalar> LevelSelector for NetSelector<'_, T> {
    fn select(&mut self, ctx: &LevelContext<'_>, clusters: &[Vec<Slot>]) -> Vec<usize> {
        let last = clusters.len() == 1;
        let states: Vec<StateVector> = clusters
            .iter()
            .map(|c| StateVector::new(Arc::clone(ctx.base), ctx.encode(c)))
            .collect();
        let refs: Vec<&StateVector> = states.iter().collect();
        let batch = match self.net.batch(&refs) {
            Ok(b) => b,
            Err(e) => {
                self.error = Some(e);
                return vec![0; clusters.len()];
            }
        };
        let values = if last && self.want_q {
            self.net.forward(&batch).q
        } else {
            self.net.advantages(&batch)
        };
        let eps = if last || self.explore_all_levels { self.epsilon } else { 0.0 };
        let picks: Vec<usize> = values
            .rows()
            .into_iter()
            .map(|row| epsilon_greedy(row.as_slice().expect("row-major"), eps, self.rng))
            .collect();
        if last && self.want_q {
            self.final_q = Some(values[[0, picks[0]]].f64());
        }
        picks
    }
}

/// Chooses and applies one action with an ε-greedy policy over `net`.
#[allow(clippy::too_many_arguments)]
pub fn decide<T: Scalar>(
    net: &QNetwork<T>,
    space: &ActionSpace,
    env: &mut Environment,
    epsilon: f64,
    explore_all_levels: bool,
    rng: &mut ChaCha8Rng,
    step_seed: u64,
    want_q: bool,
) -> Result<Decision, AgentError> {
    match space {
        ActionSpace::Hierarchical => {
            let embedding = net.embedding_rows();
            let mut sel = NetSelector {
                net,
                epsilon,
                explore_all_levels,
                want_q,
                rng,
                final_q: None,
                error: None,
            };
            let step = hstep::hierarchical_step(env, &embedding, step_seed, &mut sel)?;
            if let Some(e) = sel.error {
                return Err(e.into());
            }
            Ok(Decision {
                state: step.state,
                action: step.action,
                outcome: step.outcome,
                q: sel.final_q,
            })
        }
        ActionSpace::Flat(flat) => {
            if env.is_done() {
                return Err(EnvError::EpisodeOver.into());
            }
            let state = StateVector::new(Arc::new(env.base_state()), Vec::new());
            let batch = net.batch(&[&state])?;
            let values = if want_q { net.forward(&batch).q } else { net.advantages(&batch) };
            let row = values.row(0);
            let action = epsilon_greedy(row.as_slice().expect("row-major"), epsilon, rng);
            let q = want_q.then(|| values[[0, action]].f64());
            let candidate = flat.candidate(action, env);
            let outcome = env.step(&candidate)?;
            Ok(Decision {
                state,
                action,
                outcome,
                q,
            })
        }
    }
}

/// Replay record of one final-hierarchy decision.
#[derive(Clone, Debug)]
pub struct Transition {
    pub state: StateVector,
    pub action: usize,
    pub reward: f64,
    /// Next decision's state; `None` when terminal.
    pub next: Option<StateVector>,
    pub done: bool,
}

/// Result of running one episode without learning.
#[derive(Clone, Debug)]
pub struct Rollout {
    pub total_reward: f64,
    pub steps: usize,
    /// Q of the action taken at the last decision.
    pub final_q: Option<f64>,
    pub result: EpisodeResult,
}

/// Plays one episode on `job`. Seeds for clustering derive from `seed`.
#[allow(clippy::too_many_arguments)]
pub fn rollout<T: Scalar>(
    net: &QNetwork<T>,
    space: &ActionSpace,
    env: &mut Environment,
    job: Arc<LearningJob>,
    epsilon: f64,
    explore_all_levels: bool,
    rng: &mut ChaCha8Rng,
    seed: u64,
) -> Result<Rollout, AgentError> {
    env.reset(job)?;
    let mut total_reward = 0.0;
    let mut steps = 0;
    let mut final_q = None;
    while !env.is_done() {
        let last = env.grid().cursor() == Some(env.config().n_cells());
        let d = decide(net, space, env, epsilon, explore_all_levels, rng, seed::mix(seed, steps as u64), last)?;
        total_reward += d.outcome.reward;
        steps += 1;
        if last {
            final_q = d.q;
        }
    }
    let result = env.result().expect("finished episode").clone();
    Ok(Rollout {
        total_reward,
        steps,
        final_q,
        result,
    })
}

/// Per-episode training record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub dataset: String,
    pub total_reward: f64,
    pub epsilon: f64,
    pub loss_mean: Option<f64>,
}

pub fn write_metrics(path: &Path, logs: &[EpisodeLog]) -> Result<(), AgentError> {
    let mut w = csv::Writer::from_path(path)?;
    for l in logs {
        w.serialize(l)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpisodeLog>, AgentError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub struct Agent<T> {
    pub config: AgentConfig,
    environment: EnvironmentConfig,
    catalog: Arc<Catalog>,
    space: ActionSpace,
    pub online: QNetwork<T>,
    pub target: QNetwork<T>,
    optimizer: Adam<T>,
    pub replay: PrioritizedReplay<Transition>,
    rng: ChaCha8Rng,
    seed: u64,
    beta: f64,
    learner_steps: u64,
    env_steps: u64,
    episodes_done: usize,
}

impl<T: Scalar> Agent<T> {
    pub fn new(
        config: AgentConfig,
        environment: EnvironmentConfig,
        catalog: Arc<Catalog>,
        mode: Mode,
        seed: u64,
    ) -> Result<Self, AgentError> {
        config.validate()?;
        environment.validate()?;
        let space = ActionSpace::new(mode, &catalog, &environment);
        let online = QNetwork::new(space.net_config(&catalog, &environment), seed::mix(seed, 1))?;
        let optimizer = Adam::new(
            online.config(),
            AdamSettings {
                lr: config.learning_rate,
                ..AdamSettings::default()
            },
        );
        Ok(Agent {
            replay: PrioritizedReplay::new(config.replay_capacity, config.per_alpha),
            target: online.clone(),
            online,
            optimizer,
            rng: seed::rng_for(seed, 2),
            seed,
            beta: config.per_beta_start,
            learner_steps: 0,
            env_steps: 0,
            episodes_done: 0,
            space,
            catalog,
            environment,
            config,
        })
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn environment_config(&self) -> &EnvironmentConfig {
        &self.environment
    }

    pub fn learner_steps(&self) -> u64 {
        self.learner_steps
    }

    pub fn episodes_done(&self) -> usize {
        self.episodes_done
    }

    /// ε-greedy pick with the agent's own random stream.
    pub fn select(&mut self, values: &[T], epsilon: f64) -> usize {
        epsilon_greedy(values, epsilon, &mut self.rng)
    }

    pub fn store(&mut self, t: Transition) -> usize {
        self.replay.push(t)
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    /// One prioritized, importance-weighted update. Returns the batch loss,
    /// or `None` when the buffer is too small or the update was skipped.
    pub fn train_step(&mut self) -> Option<f64> {
        let bs = self.config.batch_size;
        if self.replay.len() < bs {
            return None;
        }
        let samples = self.replay.sample(bs, self.beta, &mut self.rng);
        let picked: Vec<&Transition> = samples.iter().map(|s| self.replay.get(s.index)).collect();
        let states: Vec<&StateVector> = picked.iter().map(|t| &t.state).collect();
        let batch = match self.online.batch(&states) {
            Ok(b) => b,
            Err(e) => {
                log::warn!("replay batch rejected: {e}");
                return None;
            }
        };
        let nexts: Vec<&StateVector> = picked.iter().filter_map(|t| t.next.as_ref()).collect();
        let mut next_max = Vec::with_capacity(nexts.len());
        if !nexts.is_empty() {
            match self.target.batch(&nexts) {
                Ok(nb) => {
                    let q = self.target.forward(&nb).q;
                    next_max.extend(q.rows().into_iter().map(|r| r.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.f64()))));
                }
                Err(e) => {
                    log::warn!("replay batch rejected: {e}");
                    return None;
                }
            }
        }
        let (out, tape) = self.online.forward_train(&batch);
        let mut dq = Array2::<T>::zeros(out.q.dim());
        let mut loss = 0.0;
        let mut tds = Vec::with_capacity(bs);
        let mut next_iter = next_max.into_iter();
        for (k, (t, s)) in picked.iter().zip(&samples).enumerate() {
            let max_next = if t.next.is_some() { next_iter.next().expect("one per next state") } else { 0.0 };
            let y = bellman_target(t.reward, t.done || t.next.is_none(), max_next, self.config.gamma);
            let q = out.q[[k, t.action]].f64();
            let td = y - q;
            loss += s.weight * huber(td) / bs as f64;
            dq[[k, t.action]] = T::of(s.weight * huber_grad(q - y) / bs as f64);
            tds.push(td);
        }
        if !loss.is_finite() {
            log::warn!("non-finite loss, update skipped");
            return None;
        }
        let grads = self.online.backward(&batch, &tape, &dq);
        if !self.optimizer.step(&mut self.online, &grads) {
            return None;
        }
        for (s, td) in samples.iter().zip(tds) {
            self.replay.set_priority(s.index, td.abs() + PRIORITY_FLOOR);
        }
        self.learner_steps += 1;
        if self.learner_steps % self.config.target_sync == 0 {
            self.sync_target();
        }
        Some(loss)
    }

    /// Trains for `episodes` episodes, each on a uniformly drawn dataset.
    /// Datasets the environment rejects are skipped with a warning.
    pub fn train_corpus(
        &mut self,
        jobs: &[Arc<LearningJob>],
        episodes: usize,
        mut on_episode: impl FnMut(&EpisodeLog),
    ) -> Result<Vec<EpisodeLog>, AgentError> {
        let mut env = self.space.environment(self.environment.clone(), Arc::clone(&self.catalog))?;
        let mut usable = Vec::new();
        for job in jobs {
            match env.reset(Arc::clone(job)) {
                Ok(()) => usable.push(Arc::clone(job)),
                Err(e) => log::warn!("skipping dataset {}: {e}", job.name),
            }
        }
        if usable.is_empty() {
            return Err(AgentError::NoUsableDataset);
        }
        let mut logs = Vec::with_capacity(episodes);
        for e in 0..episodes {
            let episode = self.episodes_done;
            let epsilon = self.config.epsilon(episode);
            self.beta = self.config.per_beta_start
                + (self.config.per_beta_end - self.config.per_beta_start) * (e as f64 / episodes.max(2).saturating_sub(1) as f64).min(1.0);
            let job = Arc::clone(&usable[self.rng.gen_range(0..usable.len())]);
            env.reset(Arc::clone(&job))?;
            let episode_seed = seed::mix(self.seed, episode as u64 + 1_000_000);
            let mut pending: Option<(StateVector, usize, f64)> = None;
            let mut total = 0.0;
            let mut losses = Vec::new();
            let mut step = 0u64;
            while !env.is_done() {
                let d = decide(
                    &self.online,
                    &self.space,
                    &mut env,
                    epsilon,
                    self.config.explore_all_levels,
                    &mut self.rng,
                    seed::mix(episode_seed, step),
                    false,
                )?;
                step += 1;
                total += d.outcome.reward;
                if let Some((state, action, reward)) = pending.take() {
                    self.replay.push(Transition {
                        state,
                        action,
                        reward,
                        next: Some(d.state.clone()),
                        done: false,
                    });
                }
                if d.outcome.done {
                    self.replay.push(Transition {
                        state: d.state,
                        action: d.action,
                        reward: d.outcome.reward,
                        next: None,
                        done: true,
                    });
                } else {
                    pending = Some((d.state, d.action, d.outcome.reward));
                }
                self.env_steps += 1;
                if self.env_steps % self.config.train_every == 0 {
                    if let Some(l) = self.train_step() {
                        losses.push(l);
                    }
                }
            }
            let log = EpisodeLog {
                episode,
                dataset: job.name.clone(),
                total_reward: total,
                epsilon,
                loss_mean: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
            };
            on_episode(&log);
            logs.push(log);
            self.episodes_done += 1;
        }
        Ok(logs)
    }

    /// Frozen copy of the online network with its settings.
    pub fn policy(&self) -> Policy<T> {
        Policy {
            net: self.online.clone(),
            environment: self.environment.clone(),
            agent: self.config.clone(),
            mode: self.space.mode(),
        }
    }
}

const AGENT_FILE: &str = "agent.json";

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    mode: Mode,
    environment: EnvironmentConfig,
    agent: AgentConfig,
}

/// A trained network plus what is needed to act with it.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy<T> {
    pub net: QNetwork<T>,
    pub environment: EnvironmentConfig,
    pub agent: AgentConfig,
    pub mode: Mode,
}

impl<T: Scalar> Policy<T> {
    /// Network checkpoint plus `agent.json` in `dir`.
    pub fn save(&self, dir: &Path, catalog: &Catalog) -> Result<(), AgentError> {
        self.net.save(dir, &catalog.hash())?;
        let file = PolicyFile {
            mode: self.mode,
            environment: self.environment.clone(),
            agent: self.agent.clone(),
        };
        fs::write(dir.join(AGENT_FILE), serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(dir: &Path, catalog: &Catalog) -> Result<Self, AgentError> {
        let (net, manifest) = QNetwork::<T>::load(dir)?;
        let current = catalog.hash();
        if manifest.catalog_hash != current {
            return Err(AgentError::CatalogMismatch {
                stored: manifest.catalog_hash,
                current,
            });
        }
        let file: PolicyFile = serde_json::from_str(&fs::read_to_string(dir.join(AGENT_FILE))?)?;
        let policy = Policy {
            net,
            environment: file.environment,
            agent: file.agent,
            mode: file.mode,
        };
        let expected = policy.space(catalog).net_config(catalog, &policy.environment).n_actions;
        if policy.net.config().n_actions != expected {
            return Err(AgentError::HeadMismatch {
                expected,
                found: policy.net.config().n_actions,
            });
        }
        Ok(policy)
    }

    pub fn space(&self, catalog: &Catalog) -> ActionSpace {
        ActionSpace::new(self.mode, catalog, &self.environment)
    }
}

#[cfg(test)]
mod tests;
