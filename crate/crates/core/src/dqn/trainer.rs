//! DQN learner loop: epsilon-greedy rollouts, replay, target network and the
//! self-play then league curriculum.

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, named, SimRng, Stream};

use super::adam::Adam;
use super::network::{NetworkSpec, QNetwork};
use super::replay::{ReplayBuffer, Transition};
use super::schedule::{EpsilonSchedule, TargetSync};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub batch_size: usize,
    /// Gradient steps between target-network syncs.
    pub target_sync: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_fraction: f64,
    pub episodes: usize,
    pub replay_capacity: usize,
    /// Environment steps between gradient steps.
    pub train_every: usize,
    /// Multiplier applied to rewards before they enter the replay buffer.
    pub reward_scale: f64,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub batchnorm: bool,
    pub self_play: bool,
    pub league: bool,
    /// Share of episodes spent in self-play when both stages are on.
    pub self_play_fraction: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            gamma: 0.95,
            batch_size: 64,
            target_sync: 1000,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_decay_fraction: 0.5,
            episodes: 10_000,
            replay_capacity: 100_000,
            train_every: 1,
            reward_scale: 0.001,
            hidden: vec![256, 128],
            dropout: 0.2,
            batchnorm: false,
            self_play: true,
            league: true,
            self_play_fraction: 0.5,
        }
    }
}

pub const PRESETS: [&str; 3] = ["appendix-defaults", "desk", "grid-search-2021"];

impl TrainerConfig {
    /// Named hyperparameter sets.
    ///
    /// `appendix-defaults` is the default; `desk` is the same with 2,000 episodes;
    /// `grid-search-2021` uses the alternative grid-search values.
    pub fn preset(name: &str) -> Result<Self> {
        let base = Self::default();
        match name {
            "appendix-defaults" => Ok(base),
            "desk" => Ok(Self {
                episodes: 2000,
                ..base
            }),
            "grid-search-2021" => Ok(Self {
                alpha: 0.01,
                gamma: 0.50,
                epsilon_start: 0.9,
                ..base
            }),
            other => Err(Error::config(format!(
                "unknown preset '{other}' (known: {})",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config(format!(
                "gamma must be in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return Err(Error::config("batch_size must be in [1, replay_capacity]"));
        }
        if self.train_every == 0 {
            return Err(Error::config("train_every must be >= 1"));
        }
        for (name, v) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
            ("epsilon_decay_fraction", self.epsilon_decay_fraction),
            ("self_play_fraction", self.self_play_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return Err(Error::config("reward_scale must be > 0"));
        }
        if !self.self_play && !self.league {
            return Err(Error::config(
                "at least one curriculum stage must be enabled",
            ));
        }
        Ok(())
    }

    pub fn epsilon(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            end: self.epsilon_end,
            decay_fraction: self.epsilon_decay_fraction,
            episodes: self.episodes,
        }
    }

    pub fn network_spec(&self, input: usize, output: usize) -> NetworkSpec {
        NetworkSpec {
            input,
            hidden: self.hidden.clone(),
            output,
            dropout: self.dropout,
            batchnorm: self.batchnorm,
        }
    }

    /// Number of self-play episodes before league training starts.
    pub fn self_play_episodes(&self) -> usize {
        match (self.self_play, self.league) {
            (true, false) => self.episodes,
            (false, _) => 0,
            (true, true) => (self.self_play_fraction * self.episodes as f64).round() as usize,
        }
    }
}

/// What the learner loop needs from an environment.
pub trait TrainingEnv {
    fn n_agents(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<Vec<Vec<f64>>>;
    fn step(&mut self, actions: &[usize]) -> Result<EnvStep>;
    /// Action of the frozen opponent occupying `agent`'s seat in league play.
    fn baseline_action(&self, agent: usize) -> usize;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub observations: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    /// Per agent, absorbing.
    pub done: Vec<bool>,
    pub episode_done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    SelfPlay,
    League,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub episode: usize,
    pub stage: Stage,
    pub epsilon: f64,
    /// Mean pre-update loss of the episode's gradient steps.
    pub mean_loss: Option<f64>,
    /// Unscaled reward summed over the learner's seats.
    pub episode_reward: f64,
}

pub fn write_log_csv(path: &Path, log: &[LogRow]) -> Result<()> {
    let display = path.display().to_string();
    let file = std::fs::File::create(path).map_err(|e| Error::io(&display, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(&display, e);
    writeln!(w, "episode,stage,epsilon,mean_loss,episode_reward").map_err(io)?;
    for r in log {
        let stage = match r.stage {
            Stage::SelfPlay => "self_play",
            Stage::League => "league",
        };
        writeln!(
            w,
            "{},{},{},{},{}",
            r.episode,
            stage,
            r.epsilon,
            r.mean_loss.map(|l| l.to_string()).unwrap_or_default(),
            r.episode_reward
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// `y = r` on terminal transitions, else `r + gamma max_a' Q_target(s', a')`.
pub fn td_target(
    r: f64,
    s_next: &[f64],
    terminal: bool,
    target: &QNetwork,
    gamma: f64,
) -> Result<f64> {
    if terminal {
        return Ok(r);
    }
    let q = target.predict(s_next)?;
    Ok(r + gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// One Adam step on the mean squared TD error of a uniform minibatch.
///
/// Returns the loss before the update, or `None` (no update) while the
/// buffer holds fewer than `batch_size` transitions.
pub fn train_step<R: Rng + ?Sized>(
    net: &mut QNetwork,
    target: &QNetwork,
    adam: &mut Adam,
    buffer: &ReplayBuffer,
    batch_size: usize,
    gamma: f64,
    rng: &mut R,
) -> Result<Option<f64>> {
    let Some(batch) = buffer.sample(batch_size, rng) else {
        return Ok(None);
    };
    let dim = net.spec().input;
    let n_actions = net.spec().output;
    let mut x = Array2::zeros((batch_size, dim));
    let mut xn = Array2::zeros((batch_size, dim));
    for (i, t) in batch.iter().enumerate() {
        if t.s.len() != dim || t.s_next.len() != dim || t.a >= n_actions {
            return Err(Error::Shape {
                expected: format!("observations of length {dim}, action < {n_actions}"),
                got: format!("{} / {} / action {}", t.s.len(), t.s_next.len(), t.a),
            });
        }
        x.row_mut(i).assign(&ndarray::ArrayView1::from(&t.s));
        xn.row_mut(i).assign(&ndarray::ArrayView1::from(&t.s_next));
    }
    let q_next = target.predict_batch(xn.view())?;
    let (out, cache) = net.forward_train(x.view(), rng)?;
    let mut grad = Array2::zeros(out.raw_dim());
    let mut loss = 0.0;
    let b = batch_size as f64;
    for (i, t) in batch.iter().enumerate() {
        let y = if t.terminal {
            t.r
        } else {
            t.r + gamma
                * q_next
                    .row(i)
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max)
        };
        let err = out[[i, t.a]] - y;
        loss += err * err / b;
        grad[[i, t.a]] = 2.0 * err / b;
    }
    if !loss.is_finite() {
        return Err(Error::Divergence {
            message: format!("non-finite TD loss ({loss})"),
            checkpoint: None,
        });
    }
    let grads = net.backward(&cache, &grad);
    adam.step(net.params_mut(), &grads);
    Ok(Some(loss))
}

/// theta_target <- theta.
pub fn sync_target(net: &QNetwork, target: &mut QNetwork) -> Result<()> {
    if net.param_shapes() != target.param_shapes() {
        return Err(Error::Shape {
            expected: format!("{:?}", net.param_shapes()),
            got: format!("{:?}", target.param_shapes()),
        });
    }
    target.copy_from(net);
    Ok(())
}

/// Argmax with ties to the lowest index; errors on non-finite values.
pub fn argmax(q: &[f64]) -> Result<usize> {
    if let Some(bad) = q.iter().position(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            message: format!("non-finite Q-value at action {bad}: {q:?}"),
            checkpoint: None,
        });
    }
    let mut best = 0;
    for (i, v) in q.iter().enumerate() {
        if *v > q[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Serialized learner state. The replay buffer is not stored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub config: TrainerConfig,
    pub master_seed: u64,
    pub episode: usize,
    pub env_steps: u64,
    pub net: QNetwork,
    pub target: QNetwork,
    pub adam: Adam,
    pub sync: TargetSync,
    pub rng: SimRng,
    pub log: Vec<LogRow>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let display = path.display().to_string();
        let json = serde_json::to_vec(self)
            .map_err(|e| Error::Validation(format!("serializing checkpoint: {e}")))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, json).map_err(|e| Error::io(&display, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(&display, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let display = path.display().to_string();
        let bytes = std::fs::read(path).map_err(|e| Error::io(&display, e))?;
        let ck: Checkpoint = serde_json::from_slice(&bytes).map_err(|e| Error::Schema {
            path: display.clone(),
            message: e.to_string(),
        })?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Schema {
                path: display,
                message: format!(
                    "checkpoint version {} (expected {CHECKPOINT_VERSION})",
                    ck.version
                ),
            });
        }
        ck.net.check_shapes()?;
        ck.target.check_shapes()?;
        if ck.net.spec().layer_sizes() != ck.layer_sizes {
            return Err(Error::Shape {
                expected: format!("{:?}", ck.layer_sizes),
                got: format!("{:?}", ck.net.spec().layer_sizes()),
            });
        }
        Ok(ck)
    }
}

/// Where and how often the trainer writes checkpoints.
#[derive(Debug, Clone, Default)]
pub struct CheckpointPolicy {
    pub path: Option<PathBuf>,
    /// Episodes between checkpoints; 0 writes only at the end.
    pub every: usize,
}

pub struct Trainer {
    cfg: TrainerConfig,
    master_seed: u64,
    net: QNetwork,
    target: QNetwork,
    adam: Adam,
    buffer: ReplayBuffer,
    sync: TargetSync,
    rng: SimRng,
    episode: usize,
    env_steps: u64,
    log: Vec<LogRow>,
}

impl Trainer {
    pub fn new(
        cfg: TrainerConfig,
        obs_dim: usize,
        n_actions: usize,
        master_seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut rng = named(master_seed, Stream::Training);
        let net = QNetwork::new(cfg.network_spec(obs_dim, n_actions), &mut rng)?;
        let target = net.clone();
        let adam = Adam::new(cfg.alpha, net.params());
        Ok(Self {
            buffer: ReplayBuffer::new(cfg.replay_capacity)?,
            sync: TargetSync::new(cfg.target_sync),
            cfg,
            master_seed,
            net,
            target,
            adam,
            rng,
            episode: 0,
            env_steps: 0,
            log: Vec::new(),
        })
    }

    /// Resume from a checkpoint; the replay buffer starts empty.
    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        ck.config.validate()?;
        Ok(Self {
            buffer: ReplayBuffer::new(ck.config.replay_capacity)?,
            cfg: ck.config,
            master_seed: ck.master_seed,
            net: ck.net,
            target: ck.target,
            adam: ck.adam,
            sync: ck.sync,
            rng: ck.rng,
            episode: ck.episode,
            env_steps: ck.env_steps,
            log: ck.log,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            layer_sizes: self.net.spec().layer_sizes(),
            config: self.cfg.clone(),
            master_seed: self.master_seed,
            episode: self.episode,
            env_steps: self.env_steps,
            net: self.net.clone(),
            target: self.target.clone(),
            adam: self.adam.clone(),
            sync: self.sync,
            rng: self.rng.clone(),
            log: self.log.clone(),
        }
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    pub fn network(&self) -> &QNetwork {
        &self.net
    }

    pub fn into_network(self) -> QNetwork {
        self.net
    }

    pub fn log(&self) -> &[LogRow] {
        &self.log
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn gradient_steps(&self) -> u64 {
        self.sync.steps()
    }

    pub fn is_finished(&self) -> bool {
        self.episode >= self.cfg.episodes
    }

    fn act(&mut self, obs: &[f64], epsilon: f64) -> Result<usize> {
        let n = self.net.spec().output;
        if self.rng.random::<f64>() < epsilon {
            Ok(self.rng.random_range(0..n))
        } else {
            argmax(&self.net.predict(obs)?)
        }
    }

    fn diverged(&self, message: String, ckpt: &CheckpointPolicy) -> Error {
        let checkpoint = ckpt.path.as_ref().and_then(|p| {
            let path = p.with_extension("diverged.json");
            self.checkpoint().save(&path).ok().map(|_| path)
        });
        Error::Divergence {
            message,
            checkpoint,
        }
    }

    /// Train until `stop_after` episodes (or the configured total) are done.
    pub fn run<E: TrainingEnv>(
        &mut self,
        env: &mut E,
        stop_after: Option<usize>,
        ckpt: &CheckpointPolicy,
    ) -> Result<()> {
        if env.obs_dim() != self.net.spec().input || env.n_actions() != self.net.spec().output {
            return Err(Error::Shape {
                expected: format!(
                    "env with obs {} / actions {}",
                    self.net.spec().input,
                    self.net.spec().output
                ),
                got: format!("obs {} / actions {}", env.obs_dim(), env.n_actions()),
            });
        }
        let end = stop_after.map_or(self.cfg.episodes, |s| s.min(self.cfg.episodes));
        let schedule = self.cfg.epsilon();
        let sp_episodes = self.cfg.self_play_episodes();
        let n = env.n_agents();
        while self.episode < end {
            let ep = self.episode;
            let epsilon = schedule.value(ep);
            let stage = if ep < sp_episodes {
                Stage::SelfPlay
            } else {
                Stage::League
            };
            let learner_seat = ep % n;
            let is_learner = |i: usize| stage == Stage::SelfPlay || i == learner_seat;

            let mut obs = env.reset(derive_seed(self.master_seed, ep as u64))?;
            let mut done = vec![false; n];
            let mut losses = Vec::new();
            let mut ep_reward = 0.0;
            loop {
                let mut actions = Vec::with_capacity(n);
                for i in 0..n {
                    let a = if is_learner(i) && !done[i] {
                        self.act(&obs[i], epsilon)?
                    } else {
                        env.baseline_action(i)
                    };
                    actions.push(a);
                }
                let step = env.step(&actions)?;
                for i in (0..n).filter(|&i| is_learner(i) && !done[i]) {
                    ep_reward += step.rewards[i];
                    self.buffer.push(Transition {
                        s: std::mem::take(&mut obs[i]),
                        a: actions[i],
                        r: step.rewards[i] * self.cfg.reward_scale,
                        s_next: step.observations[i].clone(),
                        terminal: step.done[i] || step.episode_done,
                    })?;
                }
                self.env_steps += 1;
                if self.env_steps.is_multiple_of(self.cfg.train_every as u64) {
                    let res = train_step(
                        &mut self.net,
                        &self.target,
                        &mut self.adam,
                        &self.buffer,
                        self.cfg.batch_size,
                        self.cfg.gamma,
                        &mut self.rng,
                    );
                    match res {
                        Ok(Some(loss)) => {
                            losses.push(loss);
                            if self.sync.tick() {
                                sync_target(&self.net, &mut self.target)?;
                            }
                            if !self.net.is_finite() {
                                return Err(
                                    self.diverged("non-finite network parameters".into(), ckpt)
                                );
                            }
                        }
                        Ok(None) => {}
                        Err(Error::Divergence { message, .. }) => {
                            return Err(self.diverged(message, ckpt))
                        }
                        Err(e) => return Err(e),
                    }
                }
                obs = step.observations;
                done = step.done;
                if step.episode_done {
                    break;
                }
            }
            let mean_loss =
                (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64);
            self.log.push(LogRow {
                episode: ep,
                stage,
                epsilon,
                mean_loss,
                episode_reward: ep_reward,
            });
            self.episode += 1;
            if let Some(path) = &ckpt.path {
                if ckpt.every > 0 && self.episode.is_multiple_of(ckpt.every) {
                    self.checkpoint().save(path)?;
                }
            }
            if ep.is_multiple_of(100) {
                log::info!("episode {ep} stage {stage:?} eps {epsilon:.3} loss {mean_loss:?} reward {ep_reward:.1}");
            }
        }
        if let Some(path) = &ckpt.path {
            self.checkpoint().save(path)?;
        }
        Ok(())
    }
}

/// Run the full curriculum and return the trained network with its log.
pub fn train_curriculum<E: TrainingEnv>(
    env: &mut E,
    cfg: TrainerConfig,
    master_seed: u64,
) -> Result<(QNetwork, Vec<LogRow>)> {
    let mut trainer = Trainer::new(cfg, env.obs_dim(), env.n_actions(), master_seed)?;
    trainer.run(env, None, &CheckpointPolicy::default())?;
    let log = trainer.log.clone();
    Ok((trainer.into_network(), log))
}
