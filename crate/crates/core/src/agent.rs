//! Soft actor-critic with the CrossQ changes: two batch-normalized critics,
//! no target networks, one joint train-mode critic pass over current and
//! next state-action pairs, automatic entropy temperature and delayed
//! policy updates.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::environment::{EnvError, GoalEnv, StepInfo, DESIRED_GOAL};
use crate::neural::{
    deterministic_actions, Adam, AdamConfig, BatchNormConfig, GaussianSample, Gradients, Mlp, MlpCache,
    MlpSpec, Mode, NeuralError, Tensor,
};
use crate::replay::{HerConfig, ReplayBuffer, ReplayError, Sample, Transition};
use crate::rng::{substream, AGENT_STREAM, INIT_STREAM};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("non-finite {0}")]
    NonFiniteLoss(&'static str),
    #[error("invalid agent configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub total_steps: u64,
    /// Uniform-random env steps before the first gradient update.
    pub learning_starts: u64,
    /// Critic updates per actor/temperature update.
    pub policy_delay: u64,
    pub entropy_target: f64,
    pub init_log_alpha: f64,
    pub seed: u64,
    pub actor_optimizer: AdamConfig,
    pub critic_optimizer: AdamConfig,
    pub alpha_optimizer: AdamConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            batch_size: 256,
            total_steps: 300_000,
            learning_starts: 1_000,
            policy_delay: 3,
            entropy_target: -2.0,
            init_log_alpha: 0.0,
            seed: 9527,
            actor_optimizer: AdamConfig::default(),
            critic_optimizer: AdamConfig::default(),
            alpha_optimizer: AdamConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(AgentError::InvalidConfig(format!("gamma must be in (0, 1), got {}", self.gamma)));
        }
        if self.batch_size == 0 || self.policy_delay == 0 {
            return Err(AgentError::InvalidConfig("batch_size and policy_delay must be >= 1".into()));
        }
        Ok(())
    }
}

/// Network shapes shared by the actor and both critics.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// `None` gives plain ReLU networks.
    pub batch_norm: Option<BatchNormConfig>,
    pub actor_batch_norm: bool,
    /// Normalize raw network inputs as well.
    pub input_norm: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            actor_hidden: vec![256, 256],
            critic_hidden: vec![1024, 1024],
            batch_norm: Some(BatchNormConfig::default()),
            actor_batch_norm: true,
            input_norm: true,
        }
    }
}

impl NetworkConfig {
    pub fn actor_spec(&self, obs_dim: usize, action_dim: usize) -> MlpSpec {
        let batch_norm = if self.actor_batch_norm { self.batch_norm } else { None };
        MlpSpec {
            input_dim: obs_dim,
            hidden: self.actor_hidden.clone(),
            output_dim: 2 * action_dim,
            batch_norm,
            input_norm: self.input_norm,
        }
    }

    pub fn critic_spec(&self, obs_dim: usize, action_dim: usize) -> MlpSpec {
        MlpSpec {
            input_dim: obs_dim + action_dim,
            hidden: self.critic_hidden.clone(),
            output_dim: 1,
            batch_norm: self.batch_norm,
            input_norm: self.input_norm,
        }
    }
}

/// Column-stacked minibatch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: Tensor,
    pub actions: Tensor,
    pub rewards: Vec<f64>,
    pub next_obs: Tensor,
    pub terminated: Vec<bool>,
}

impl Batch {
    pub fn from_transitions<'a>(ts: impl IntoIterator<Item = &'a Transition>) -> Result<Self, NeuralError> {
        let ts: Vec<&Transition> = ts.into_iter().collect();
        Ok(Self {
            obs: Tensor::from_rows(&ts.iter().map(|t| t.obs.clone()).collect::<Vec<_>>())?,
            actions: Tensor::from_rows(&ts.iter().map(|t| t.action.clone()).collect::<Vec<_>>())?,
            rewards: ts.iter().map(|t| t.reward).collect(),
            next_obs: Tensor::from_rows(&ts.iter().map(|t| t.next_obs.clone()).collect::<Vec<_>>())?,
            terminated: ts.iter().map(|t| t.terminated).collect(),
        })
    }

    pub fn from_samples(samples: &[Sample]) -> Result<Self, NeuralError> {
        Self::from_transitions(samples.iter().map(|s| &s.transition))
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Everything produced by one critic loss evaluation.
#[derive(Debug, Clone)]
pub struct CriticLoss {
    pub losses: [f64; 2],
    /// Bellman targets, held constant.
    pub targets: Vec<f64>,
    /// Q-values for the current half of the joint batch.
    pub q: [Vec<f64>; 2],
    /// Q-values for the next half of the joint batch.
    pub q_next: [Vec<f64>; 2],
    pub next_log_prob: Vec<f64>,
    /// Upstream gradients fed to each critic (2N rows).
    pub upstream: [Tensor; 2],
    pub grads: [Gradients; 2],
    pub caches: [MlpCache; 2],
}

#[derive(Debug, Clone)]
pub struct ActorLoss {
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
    pub mean_log_prob: f64,
    pub actor_grads: Gradients,
    /// `d alpha_loss / d log_alpha`.
    pub alpha_grad: f64,
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub config: AgentConfig,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub actor: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub actor_opt: Adam,
    pub critic1_opt: Adam,
    pub critic2_opt: Adam,
    /// 1x1 so it goes through the same optimizer code.
    pub log_alpha: Tensor,
    pub alpha_opt: Adam,
    pub critic_updates: u64,
    pub actor_updates: u64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn column(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| f64::from(v)).collect()
}

impl Agent {
    pub fn new(config: AgentConfig, net: &NetworkConfig, obs_dim: usize, action_dim: usize) -> Result<Self, AgentError> {
        config.validate()?;
        let mut rng = substream(config.seed, INIT_STREAM);
        let actor = Mlp::new(net.actor_spec(obs_dim, action_dim), &mut rng);
        let critic1 = Mlp::new(net.critic_spec(obs_dim, action_dim), &mut rng);
        let critic2 = Mlp::new(net.critic_spec(obs_dim, action_dim), &mut rng);
        Ok(Self {
            actor_opt: Adam::new(config.actor_optimizer),
            critic1_opt: Adam::new(config.critic_optimizer),
            critic2_opt: Adam::new(config.critic_optimizer),
            log_alpha: Tensor::filled(1, 1, config.init_log_alpha as f32),
            alpha_opt: Adam::new(config.alpha_optimizer),
            config,
            obs_dim,
            action_dim,
            actor,
            critic1,
            critic2,
            critic_updates: 0,
            actor_updates: 0,
        })
    }

    pub fn alpha(&self) -> f64 {
        f64::from(self.log_alpha.get(0, 0)).exp()
    }

    /// Eval-mode policy for a single observation.
    pub fn act<R: Rng>(&self, obs: &[f64], deterministic: bool, rng: &mut R) -> Result<Vec<f64>, AgentError> {
        let x = Tensor::from_vec(1, obs.len(), obs.iter().map(|&v| v as f32).collect())?;
        let (head, _) = self.actor.infer(&x)?;
        let a = if deterministic {
            deterministic_actions(&head)?
        } else {
            GaussianSample::draw(&head, rng)?.actions
        };
        Ok(a.data().iter().map(|&v| f64::from(v)).collect())
    }

    /// Batched deterministic policy.
    pub fn act_batch(&self, obs: &Tensor) -> Result<Tensor, AgentError> {
        Ok(deterministic_actions(&self.actor.infer(obs)?.0)?)
    }

    /// Critic losses and gradients for `batch`. Both critics see one
    /// train-mode forward over `[(s, a); (s', a')]`, so their running
    /// statistics advance once.
    pub fn critic_loss<R: Rng>(&mut self, batch: &Batch, rng: &mut R) -> Result<CriticLoss, AgentError> {
        let n = batch.len();
        let (next_head, _) = self.actor.infer(&batch.next_obs)?;
        let next = GaussianSample::draw(&next_head, rng)?;
        let current = batch.obs.concat_cols(&batch.actions)?;
        let joint = current.concat_rows(&batch.next_obs.concat_cols(&next.actions)?)?;

        let (y1, cache1) = self.critic1.forward(&joint, Mode::Train)?;
        let (y2, cache2) = self.critic2.forward(&joint, Mode::Train)?;
        let (q1, q2) = (column(&y1), column(&y2));
        let alpha = self.alpha();
        let gamma = self.config.gamma;
        let targets: Vec<f64> = (0..n)
            .map(|i| {
                let soft = q1[n + i].min(q2[n + i]) - alpha * next.log_prob[i];
                let live = if batch.terminated[i] { 0.0 } else { 1.0 };
                batch.rewards[i] + gamma * live * soft
            })
            .collect();

        let mut losses = [0.0; 2];
        let mut upstream = [Tensor::zeros(2 * n, 1), Tensor::zeros(2 * n, 1)];
        for (k, q) in [&q1, &q2].into_iter().enumerate() {
            let mut acc = 0.0;
            for i in 0..n {
                let err = q[i] - targets[i];
                acc += err * err;
                // Next-half rows keep a zero gradient: the target is a constant.
                upstream[k].set(i, 0, (2.0 * err / n as f64) as f32);
            }
            losses[k] = acc / n as f64;
            if !losses[k].is_finite() {
                return Err(AgentError::NonFiniteLoss("critic loss"));
            }
        }
        let g1 = self.critic1.backward(&cache1, &upstream[0], true)?;
        let g2 = self.critic2.backward(&cache2, &upstream[1], true)?;
        Ok(CriticLoss {
            losses,
            targets,
            q: [q1[..n].to_vec(), q2[..n].to_vec()],
            q_next: [q1[n..].to_vec(), q2[n..].to_vec()],
            next_log_prob: next.log_prob,
            upstream,
            grads: [g1, g2],
            caches: [cache1, cache2],
        })
    }

    pub fn apply_critic(&mut self, loss: &CriticLoss) -> Result<(), AgentError> {
        self.critic1_opt.step(&mut self.critic1.params_mut(), &loss.grads[0].params)?;
        self.critic2_opt.step(&mut self.critic2.params_mut(), &loss.grads[1].params)?;
        self.critic_updates += 1;
        Ok(())
    }

    /// Policy and temperature losses. The actor runs in train mode, the
    /// critics in eval mode and receive no parameter gradients.
    pub fn actor_and_alpha_loss<R: Rng>(&mut self, obs: &Tensor, rng: &mut R) -> Result<ActorLoss, AgentError> {
        let n = obs.rows();
        let (head, cache) = self.actor.forward(obs, Mode::Train)?;
        let sample = GaussianSample::draw(&head, rng)?;
        let input = obs.concat_cols(&sample.actions)?;
        let (y1, c1) = self.critic1.infer(&input)?;
        let (y2, c2) = self.critic2.infer(&input)?;
        let (q1, q2) = (column(&y1), column(&y2));
        let alpha = self.alpha();

        let mut actor_loss = 0.0;
        let mut up1 = Tensor::zeros(n, 1);
        let mut up2 = Tensor::zeros(n, 1);
        for i in 0..n {
            // The smaller critic receives the whole -1/N.
            if q1[i] <= q2[i] {
                actor_loss += alpha * sample.log_prob[i] - q1[i];
                up1.set(i, 0, -1.0 / n as f32);
            } else {
                actor_loss += alpha * sample.log_prob[i] - q2[i];
                up2.set(i, 0, -1.0 / n as f32);
            }
        }
        actor_loss /= n as f64;
        let d_in1 = self.critic1.backward(&c1, &up1, false)?.input;
        let d_in2 = self.critic2.backward(&c2, &up2, false)?.input;
        let a = self.action_dim;
        let mut d_actions = Tensor::zeros(n, a);
        for i in 0..n {
            for j in 0..a {
                let col = self.obs_dim + j;
                d_actions.set(i, j, d_in1.get(i, col) + d_in2.get(i, col));
            }
        }
        let d_log_prob = vec![alpha / n as f64; n];
        let d_head = sample.backward(&d_actions, &d_log_prob)?;
        let actor_grads = self.actor.backward(&cache, &d_head, true)?;

        let mean_log_prob = mean(&sample.log_prob);
        let log_alpha = f64::from(self.log_alpha.get(0, 0));
        let alpha_loss = -log_alpha * (mean_log_prob + self.config.entropy_target);
        let alpha_grad = -(mean_log_prob + self.config.entropy_target);
        if !(actor_loss.is_finite() && alpha_loss.is_finite()) {
            return Err(AgentError::NonFiniteLoss("actor or temperature loss"));
        }
        Ok(ActorLoss { actor_loss, alpha_loss, alpha, mean_log_prob, actor_grads, alpha_grad })
    }

    pub fn apply_actor(&mut self, loss: &ActorLoss) -> Result<(), AgentError> {
        self.actor_opt.step(&mut self.actor.params_mut(), &loss.actor_grads.params)?;
        let g = Tensor::filled(1, 1, loss.alpha_grad as f32);
        self.alpha_opt.step(&mut [&mut self.log_alpha], &[g])?;
        self.actor_updates += 1;
        Ok(())
    }

    /// One critic update, plus an actor/temperature update every
    /// `policy_delay` critic updates.
    pub fn update<R: Rng>(&mut self, batch: &Batch, rng: &mut R) -> Result<UpdateReport, AgentError> {
        let critic = self.critic_loss(batch, rng)?;
        self.apply_critic(&critic)?;
        let mut report = UpdateReport { critic_loss: 0.5 * (critic.losses[0] + critic.losses[1]), actor: None };
        if self.critic_updates % self.config.policy_delay == 0 {
            let actor = self.actor_and_alpha_loss(&batch.obs, rng)?;
            self.apply_actor(&actor)?;
            report.actor = Some((actor.actor_loss, actor.alpha_loss));
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateReport {
    /// Mean of the two critic losses.
    pub critic_loss: f64,
    /// `(actor_loss, alpha_loss)` when the policy was updated.
    pub actor: Option<(f64, f64)>,
}

/// Periodic training summary.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub episode: u64,
    pub env_steps: u64,
    pub episode_return: f64,
    pub episode_length: u64,
    pub rolling_success_rate: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
    pub critic_updates: u64,
    pub actor_updates: u64,
}

/// Sliding window of episode outcomes.
pub const SUCCESS_WINDOW: usize = 100;

/// Couples an environment, an agent and a replay buffer.
#[derive(Debug, Clone)]
pub struct Trainer<E: GoalEnv> {
    pub env: E,
    pub agent: Agent,
    pub buffer: ReplayBuffer,
    pub her: HerConfig,
    pub rng: ChaCha8Rng,
    pub log_every: u64,
    pub env_steps: u64,
    pub episodes: u64,
    /// Observation the next action is chosen from.
    pub obs: Vec<f64>,
    pub episode: Vec<Transition>,
    pub episode_return: f64,
    pub outcomes: VecDeque<bool>,
    pub last_critic_loss: f64,
    pub last_actor_loss: f64,
    pub last_alpha_loss: f64,
}

impl<E: GoalEnv> Trainer<E> {
    pub fn new(mut env: E, agent: Agent, buffer_capacity: usize, her: HerConfig) -> Self {
        let rng = substream(agent.config.seed, AGENT_STREAM);
        let obs = env.reset();
        Self {
            env,
            agent,
            buffer: ReplayBuffer::new(buffer_capacity),
            her,
            rng,
            log_every: 10,
            env_steps: 0,
            episodes: 0,
            obs,
            episode: Vec::new(),
            episode_return: 0.0,
            outcomes: VecDeque::with_capacity(SUCCESS_WINDOW),
            last_critic_loss: f64::NAN,
            last_actor_loss: f64::NAN,
            last_alpha_loss: f64::NAN,
        }
    }

    pub fn rolling_success_rate(&self) -> f64 {
        if self.outcomes.is_empty() {
            return 0.0;
        }
        self.outcomes.iter().filter(|&&s| s).count() as f64 / self.outcomes.len() as f64
    }

    /// One environment step, then at most one gradient update. Returns a
    /// record when an episode ends on the logging cadence.
    pub fn step(&mut self) -> Result<Option<LogRecord>, AgentError> {
        let a_dim = self.agent.action_dim;
        let action: Vec<f64> = if self.env_steps < self.agent.config.learning_starts {
            (0..a_dim).map(|_| self.rng.random_range(-1.0..=1.0)).collect()
        } else {
            self.agent.act(&self.obs, false, &mut self.rng)?
        };
        let out = self.env.step(&action)?;
        self.env_steps += 1;
        self.episode_return += out.reward;
        let desired = [out.obs[DESIRED_GOAL.start], out.obs[DESIRED_GOAL.start + 1]];
        self.episode.push(Transition {
            obs: self.obs.iter().map(|&v| v as f32).collect(),
            action: action.iter().map(|&v| v as f32).collect(),
            reward: out.reward,
            next_obs: out.obs.iter().map(|&v| v as f32).collect(),
            terminated: out.terminated,
            info: out.info,
            desired_goal: desired,
            episode_id: self.episodes,
            step_in_episode: self.episode.len() as u32,
        });
        self.obs = out.obs;

        let mut record = None;
        if out.terminated || out.truncated {
            record = self.finish_episode(out.info)?;
        }
        if self.env_steps > self.agent.config.learning_starts && !self.buffer.is_empty() {
            let spec = self.env.reward_spec();
            let samples = self.buffer.sample_batch(self.agent.config.batch_size, &self.her, &spec, &mut self.rng)?;
            let batch = Batch::from_samples(&samples)?;
            let report = self.agent.update(&batch, &mut self.rng)?;
            self.last_critic_loss = report.critic_loss;
            if let Some((actor, alpha)) = report.actor {
                self.last_actor_loss = actor;
                self.last_alpha_loss = alpha;
            }
        }
        Ok(record)
    }

    fn finish_episode(&mut self, last: StepInfo) -> Result<Option<LogRecord>, AgentError> {
        let episode = std::mem::take(&mut self.episode);
        let length = episode.len() as u64;
        self.buffer.store_episode(episode)?;
        if self.outcomes.len() == SUCCESS_WINDOW {
            self.outcomes.pop_front();
        }
        self.outcomes.push_back(last.success);
        self.episodes += 1;
        let episode_return = std::mem::take(&mut self.episode_return);
        self.obs = self.env.reset();
        if self.episodes % self.log_every != 0 {
            return Ok(None);
        }
        Ok(Some(LogRecord {
            episode: self.episodes,
            env_steps: self.env_steps,
            episode_return,
            episode_length: length,
            rolling_success_rate: self.rolling_success_rate(),
            critic_loss: self.last_critic_loss,
            actor_loss: self.last_actor_loss,
            alpha_loss: self.last_alpha_loss,
            alpha: self.agent.alpha(),
            critic_updates: self.agent.critic_updates,
            actor_updates: self.agent.actor_updates,
        }))
    }
}
