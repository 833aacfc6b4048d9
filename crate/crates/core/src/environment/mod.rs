//! Goal-conditioned episodic environments.
//!
//! Every environment here lays its observation out with the achieved goal
//! (the robot position) in slots 0..2 and the desired goal in slots 2..4,
//! which is what goal relabeling rewrites.

mod dasmr;
mod point_mass;
mod reward;
mod world;

pub use dasmr::{DasmrEnv, Observation, SimState, Step, OBS_DIM};
pub use point_mass::{PointMassConfig, PointMassEnv};
pub use reward::{RewardSpec, COLLISION_REWARD, OUT_OF_BOUNDS_REWARD, STEP_REWARD, SUCCESS_REWARD};
pub use world::{closest_distance, in_square, GoalBox, Integrator, WorldConfig};

use thiserror::Error;

/// Observation slots holding the achieved goal.
pub const ACHIEVED_GOAL: std::ops::Range<usize> = 0..2;
/// Observation slots holding the desired goal.
pub const DESIRED_GOAL: std::ops::Range<usize> = 2..4;

pub type Point = [f64; 2];

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("episode finished; call reset before stepping again")]
    EpisodeFinished,
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("invalid environment configuration: {0}")]
    InvalidConfig(String),
}

/// Per-step facts needed to score any goal against the step's outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub achieved_goal: Point,
    /// Signed clearance between footprint and obstacle (m).
    pub closest_distance: f64,
    pub in_bounds: bool,
    /// Whether the episode's own goal was reached at this step.
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

/// Minimal interface the trainer needs from an environment.
pub trait GoalEnv {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError>;
    fn reward_spec(&self) -> RewardSpec;
}

pub(crate) fn checked_action<const N: usize>(action: &[f64]) -> Result<[f64; N], EnvError> {
    if action.len() != N {
        return Err(EnvError::InvalidAction(format!(
            "expected {N} components, got {}",
            action.len()
        )));
    }
    let mut out = [0.0; N];
    for (o, &a) in out.iter_mut().zip(action) {
        if !a.is_finite() {
            return Err(EnvError::InvalidAction(format!("non-finite component {a}")));
        }
        *o = a.clamp(-1.0, 1.0);
    }
    Ok(out)
}
