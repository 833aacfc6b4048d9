use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{checked_action, distance, EnvError, GoalEnv, Point, RewardSpec, StepInfo, StepOutcome};

/// Holonomic point mass in a square arena: the action is a velocity
/// command, positions are clamped to the arena, there is no obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMassConfig {
    pub arena_half: f64,
    pub max_speed: f64,
    pub dt: f64,
    pub d_th: f64,
    pub max_steps: usize,
}

impl Default for PointMassConfig {
    fn default() -> Self {
        Self { arena_half: 1.0, max_speed: 2.0, dt: 0.05, d_th: 0.1, max_steps: 50 }
    }
}

/// Observation: `x, y, x_d, y_d`.
#[derive(Debug, Clone)]
pub struct PointMassEnv {
    config: PointMassConfig,
    rng: ChaCha8Rng,
    position: Point,
    goal: Point,
    steps: usize,
    finished: bool,
}

impl PointMassEnv {
    pub fn new(config: PointMassConfig, rng: ChaCha8Rng) -> Self {
        Self { config, rng, position: [0.0; 2], goal: [0.0; 2], steps: 0, finished: true }
    }

    fn sample_point(&mut self) -> Point {
        let h = self.config.arena_half;
        [self.rng.random_range(-h..h), self.rng.random_range(-h..h)]
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.position[0], self.position[1], self.goal[0], self.goal[1]]
    }
}

impl GoalEnv for PointMassEnv {
    fn obs_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn reset(&mut self) -> Vec<f64> {
        self.position = self.sample_point();
        self.goal = self.sample_point();
        self.steps = 0;
        self.finished = false;
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        if self.finished {
            return Err(EnvError::EpisodeFinished);
        }
        let a = checked_action::<2>(action)?;
        let c = self.config;
        for k in 0..2 {
            self.position[k] =
                (self.position[k] + a[k] * c.max_speed * c.dt).clamp(-c.arena_half, c.arena_half);
        }
        self.steps += 1;
        let info = StepInfo {
            achieved_goal: self.position,
            closest_distance: f64::INFINITY,
            in_bounds: true,
            success: distance(self.position, self.goal) <= c.d_th,
        };
        let spec = self.reward_spec();
        let reward = spec.compute_reward(self.position, self.goal, &info);
        let terminated = spec.is_terminal(self.position, self.goal, &info);
        let truncated = !terminated && self.steps >= c.max_steps;
        self.finished = terminated || truncated;
        Ok(StepOutcome { obs: self.obs(), reward, terminated, truncated, info })
    }

    fn reward_spec(&self) -> RewardSpec {
        RewardSpec {
            d_th: self.config.d_th,
            collision_margin: 0.0,
            dense: false,
            collision_terminates: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn greedy_controller_reaches_goal() {
        let mut env = PointMassEnv::new(PointMassConfig::default(), substream(0, "pm"));
        for _ in 0..20 {
            let mut obs = env.reset();
            loop {
                let (dx, dy) = (obs[2] - obs[0], obs[3] - obs[1]);
                let n = dx.hypot(dy).max(1e-9);
                let s = env.step(&[dx / n, dy / n]).unwrap();
                obs = s.obs;
                if s.terminated || s.truncated {
                    assert!(s.terminated && s.reward == 1.0);
                    break;
                }
            }
        }
    }
}
