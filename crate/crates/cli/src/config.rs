//! Run configuration: a sectioned TOML file whose every key is optional.
//!
//! An empty file yields the reference training setup.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use dasmr_core::agent::{AgentConfig, NetworkConfig};
use dasmr_core::environment::{GoalBox, Integrator, WorldConfig};
use dasmr_core::kinematics::RobotParams;
use dasmr_core::neural::{AdamConfig, BatchNormConfig};
use dasmr_core::replay::{GoalStrategy, HerConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub robot: RobotSection,
    pub world: WorldSection,
    pub her: HerSection,
    pub replay: ReplaySection,
    pub agent: AgentSection,
    pub optimizer: OptimizerSection,
    pub network: NetworkSection,
    pub run: RunSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotSection {
    pub wheelbase: f64,
    pub track: f64,
    pub wheel_radius: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub phi_max: f64,
    /// First-order twist lag (s); 0 disables it.
    pub twist_time_constant: f64,
}

impl Default for RobotSection {
    fn default() -> Self {
        let p = RobotParams::default();
        Self {
            wheelbase: p.wheelbase,
            track: p.track,
            wheel_radius: p.wheel_radius,
            v_max: p.v_max,
            omega_max: p.omega_max,
            phi_max: p.phi_max,
            twist_time_constant: p.twist_time_constant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorName {
    #[default]
    ExactArc,
    Euler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSection {
    pub workspace_half: f64,
    pub obstacle_center: [f64; 2],
    pub obstacle_radius: f64,
    pub goal_box_x: [f64; 2],
    pub goal_box_y: [f64; 2],
    pub d_th: f64,
    pub dt: f64,
    pub max_steps: usize,
    pub collision_margin: f64,
    pub footprint_length: f64,
    pub footprint_width: f64,
    pub dense_reward_mode: bool,
    pub collision_terminates: bool,
    pub integrator: IntegratorName,
}

impl Default for WorldSection {
    fn default() -> Self {
        let w = WorldConfig::default();
        Self {
            workspace_half: w.workspace_half,
            obstacle_center: w.obstacle_center,
            obstacle_radius: w.obstacle_radius,
            goal_box_x: w.goal_box.x,
            goal_box_y: w.goal_box.y,
            d_th: w.d_th,
            dt: w.dt,
            max_steps: w.max_steps,
            collision_margin: w.collision_margin,
            footprint_length: w.footprint_length,
            footprint_width: w.footprint_width,
            dense_reward_mode: w.dense_reward_mode,
            collision_terminates: w.collision_terminates,
            integrator: IntegratorName::ExactArc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    #[default]
    Future,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HerSection {
    pub enabled: bool,
    pub n_sampled_goal: usize,
    pub strategy: StrategyName,
}

impl Default for HerSection {
    fn default() -> Self {
        let h = HerConfig::default();
        Self { enabled: h.enabled, n_sampled_goal: h.n_sampled_goal, strategy: StrategyName::Future }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplaySection {
    pub capacity: usize,
}

impl Default for ReplaySection {
    fn default() -> Self {
        Self { capacity: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub gamma: f64,
    pub batch_size: usize,
    pub total_steps: u64,
    pub learning_starts: u64,
    pub policy_delay: u64,
    pub entropy_target: f64,
    pub init_log_alpha: f64,
    pub seed: u64,
}

impl Default for AgentSection {
    fn default() -> Self {
        let a = AgentConfig::default();
        Self {
            gamma: a.gamma,
            batch_size: a.batch_size,
            total_steps: a.total_steps,
            learning_starts: a.learning_starts,
            policy_delay: a.policy_delay,
            entropy_target: a.entropy_target,
            init_log_alpha: a.init_log_alpha,
            seed: a.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamSection {
    fn default() -> Self {
        let a = AdamConfig::default();
        Self { lr: a.lr, beta1: a.beta1, beta2: a.beta2, eps: a.eps }
    }
}

impl From<&AdamSection> for AdamConfig {
    fn from(s: &AdamSection) -> Self {
        AdamConfig { lr: s.lr, beta1: s.beta1, beta2: s.beta2, eps: s.eps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub actor: AdamSection,
    pub critic: AdamSection,
    pub alpha: AdamSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub batch_norm: bool,
    pub actor_batch_norm: bool,
    pub input_norm: bool,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    /// false falls back to plain batch normalization.
    pub renorm: bool,
    pub r_max: f64,
    pub d_max: f64,
    pub renorm_warmup_steps: u64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let n = NetworkConfig::default();
        let bn = n.batch_norm.unwrap_or_default();
        Self {
            actor_hidden: n.actor_hidden,
            critic_hidden: n.critic_hidden,
            batch_norm: n.batch_norm.is_some(),
            actor_batch_norm: n.actor_batch_norm,
            input_norm: n.input_norm,
            bn_momentum: bn.momentum,
            bn_eps: bn.eps,
            renorm: bn.renorm,
            r_max: bn.r_max,
            d_max: bn.d_max,
            renorm_warmup_steps: bn.warmup_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub out_dir: PathBuf,
    /// Episodes between log records.
    pub log_every: u64,
    /// Environment steps between periodic checkpoints; 0 keeps only the final one.
    pub checkpoint_every: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { out_dir: PathBuf::from("runs/default"), log_every: 10, checkpoint_every: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub episodes: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { episodes: 100 }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        let config = Self::parse(&text).map_err(|message| ConfigError::Parse { path: path.to_owned(), message })?;
        config.validate()?;
        Ok(config)
    }

    /// Panics on configs that fail [`RunConfig::validate`].
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("validated configs serialize")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.world().validate().map_err(|e| invalid(&e))?;
        self.robot().validate().map_err(|e| invalid(&e))?;
        self.agent().validate().map_err(|e| invalid(&e))?;
        if self.her.n_sampled_goal == 0 {
            return Err(ConfigError::Invalid("her.n_sampled_goal must be at least 1".into()));
        }
        if self.replay.capacity < self.world.max_steps {
            return Err(ConfigError::Invalid(format!(
                "replay.capacity {} cannot hold one {}-step episode",
                self.replay.capacity, self.world.max_steps
            )));
        }
        if self.run.log_every == 0 {
            return Err(ConfigError::Invalid("run.log_every must be at least 1".into()));
        }
        if self.network.actor_hidden.is_empty() || self.network.critic_hidden.is_empty() {
            return Err(ConfigError::Invalid("networks need at least one hidden layer".into()));
        }
        if self.network.actor_hidden.contains(&0) || self.network.critic_hidden.contains(&0) {
            return Err(ConfigError::Invalid("hidden layer widths must be positive".into()));
        }
        // TOML integers are signed 64-bit; the snapshot must stay writable.
        if i64::try_from(self.agent.seed).is_err() {
            return Err(ConfigError::Invalid(format!("agent.seed {} exceeds {}", self.agent.seed, i64::MAX)));
        }
        toml::to_string(self).map_err(|e| ConfigError::Invalid(format!("value out of range: {e}")))?;
        Ok(())
    }

    pub fn robot(&self) -> RobotParams {
        let r = &self.robot;
        RobotParams {
            wheelbase: r.wheelbase,
            track: r.track,
            wheel_radius: r.wheel_radius,
            v_max: r.v_max,
            omega_max: r.omega_max,
            phi_max: r.phi_max,
            twist_time_constant: r.twist_time_constant,
        }
    }

    pub fn world(&self) -> WorldConfig {
        let w = &self.world;
        WorldConfig {
            workspace_half: w.workspace_half,
            obstacle_center: w.obstacle_center,
            obstacle_radius: w.obstacle_radius,
            goal_box: GoalBox { x: w.goal_box_x, y: w.goal_box_y },
            d_th: w.d_th,
            dt: w.dt,
            max_steps: w.max_steps,
            collision_margin: w.collision_margin,
            footprint_length: w.footprint_length,
            footprint_width: w.footprint_width,
            dense_reward_mode: w.dense_reward_mode,
            collision_terminates: w.collision_terminates,
            integrator: match w.integrator {
                IntegratorName::ExactArc => Integrator::ExactArc,
                IntegratorName::Euler => Integrator::Euler,
            },
        }
    }

    pub fn her(&self) -> HerConfig {
        HerConfig {
            enabled: self.her.enabled,
            n_sampled_goal: self.her.n_sampled_goal,
            strategy: match self.her.strategy {
                StrategyName::Future => GoalStrategy::Future,
            },
        }
    }

    pub fn agent(&self) -> AgentConfig {
        let a = &self.agent;
        AgentConfig {
            gamma: a.gamma,
            batch_size: a.batch_size,
            total_steps: a.total_steps,
            learning_starts: a.learning_starts,
            policy_delay: a.policy_delay,
            entropy_target: a.entropy_target,
            init_log_alpha: a.init_log_alpha,
            seed: a.seed,
            actor_optimizer: (&self.optimizer.actor).into(),
            critic_optimizer: (&self.optimizer.critic).into(),
            alpha_optimizer: (&self.optimizer.alpha).into(),
        }
    }

    pub fn network(&self) -> NetworkConfig {
        let n = &self.network;
        NetworkConfig {
            actor_hidden: n.actor_hidden.clone(),
            critic_hidden: n.critic_hidden.clone(),
            batch_norm: n.batch_norm.then_some(BatchNormConfig {
                momentum: n.bn_momentum,
                eps: n.bn_eps,
                renorm: n.renorm,
                r_max: n.r_max,
                d_max: n.d_max,
                warmup_steps: n.renorm_warmup_steps,
            }),
            actor_batch_norm: n.actor_batch_norm,
            input_norm: n.input_norm,
        }
    }
}
