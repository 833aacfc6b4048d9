use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    checked_action, closest_distance, distance, EnvError, GoalEnv, Point, RewardSpec, StepInfo,
    Integrator, StepOutcome, WorldConfig,
};
use crate::kinematics::{clamp_twist, wheel_state_from_twist, ChassisTwist, RobotParams, WheelState};
use crate::rng::RngState;

pub const OBS_DIM: usize = 16;

/// Observation vector:
/// `x_c, y_c, x_d, y_d, theta_c, omega_l, omega_r, phi_l, phi_r,
/// phi_dot_l, phi_dot_r, xdot_c, ydot_c, omega_c, x_o, y_o`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub const THETA: usize = 4;
    pub const WHEELS: std::ops::Range<usize> = 5..11;
    pub const VELOCITY: std::ops::Range<usize> = 11..13;
    pub const YAW_RATE: usize = 13;
    pub const OBSTACLE: std::ops::Range<usize> = 14..16;

    pub fn position(&self) -> Point {
        [self.0[0], self.0[1]]
    }

    pub fn goal(&self) -> Point {
        [self.0[2], self.0[3]]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Full simulated robot state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub position: Point,
    /// Heading wrapped to (-pi, pi].
    pub theta: f64,
    pub twist: ChassisTwist,
    pub wheels: WheelState,
    pub goal: Point,
    pub step_index: usize,
    /// Set once the episode terminated or was truncated.
    pub finished: bool,
}

impl SimState {
    fn at_origin(goal: Point) -> Self {
        Self {
            position: [0.0, 0.0],
            theta: 0.0,
            twist: ChassisTwist::default(),
            wheels: WheelState::default(),
            goal,
            step_index: 0,
            finished: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub obs: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(std::f64::consts::TAU);
    if w > std::f64::consts::PI {
        w - std::f64::consts::TAU
    } else {
        w
    }
}

/// Kinematic double-Ackermann robot in a square workspace with one disc
/// obstacle.
#[derive(Debug, Clone)]
pub struct DasmrEnv {
    world: WorldConfig,
    robot: RobotParams,
    rng: ChaCha8Rng,
    state: SimState,
}

impl DasmrEnv {
    pub fn new(world: WorldConfig, robot: RobotParams, rng: ChaCha8Rng) -> Result<Self, EnvError> {
        world.validate()?;
        robot.validate().map_err(|e| EnvError::InvalidConfig(e.to_string()))?;
        let mut state = SimState::at_origin([0.0, 0.0]);
        // Nothing to step until the first reset.
        state.finished = true;
        Ok(Self { world, robot, rng, state })
    }

    pub fn world(&self) -> &WorldConfig {
        &self.world
    }

    pub fn robot(&self) -> &RobotParams {
        &self.robot
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn rng_state(&self) -> RngState {
        RngState::capture(&self.rng)
    }

    /// Restores a snapshot taken with [`DasmrEnv::state`] and [`DasmrEnv::rng_state`].
    pub fn restore(&mut self, state: SimState, rng: RngState) {
        self.state = state;
        self.rng = rng.restore();
    }

    pub fn sample_goal(&mut self) -> Point {
        let g = self.world.goal_box;
        let x = g.x[0] + (g.x[1] - g.x[0]) * self.rng.random::<f64>();
        let y = g.y[0] + (g.y[1] - g.y[0]) * self.rng.random::<f64>();
        [x, y]
    }

    pub fn reset(&mut self) -> Observation {
        let goal = self.sample_goal();
        self.reset_with_goal(goal)
    }

    /// Resets toward a caller-chosen goal without touching the goal stream.
    pub fn reset_with_goal(&mut self, goal: Point) -> Observation {
        self.state = SimState::at_origin(goal);
        self.observation()
    }

    pub fn observation(&self) -> Observation {
        let s = &self.state;
        let (sin, cos) = s.theta.sin_cos();
        let w = &s.wheels;
        Observation([
            s.position[0],
            s.position[1],
            s.goal[0],
            s.goal[1],
            s.theta,
            w.omega_l,
            w.omega_r,
            w.phi_l,
            w.phi_r,
            w.phi_dot_l,
            w.phi_dot_r,
            s.twist.v * cos,
            s.twist.v * sin,
            s.twist.omega,
            self.world.obstacle_center[0],
            self.world.obstacle_center[1],
        ])
    }

    /// Facts about the current state, scored against the current goal.
    pub fn step_info(&self) -> StepInfo {
        let s = &self.state;
        StepInfo {
            achieved_goal: s.position,
            closest_distance: closest_distance(s.position, s.theta, &self.world),
            in_bounds: self.world.in_workspace(s.position),
            success: distance(s.position, s.goal) <= self.world.d_th,
        }
    }

    fn actuate(&self, action: [f64; 2]) -> ChassisTwist {
        let p = &self.robot;
        let command = clamp_twist(ChassisTwist::new(action[0] * p.v_max, action[1] * p.omega_max), p);
        let prev = self.state.twist;
        let gain = if p.twist_time_constant > 0.0 {
            1.0 - (-self.world.dt / p.twist_time_constant).exp()
        } else {
            1.0
        };
        let lagged = ChassisTwist::new(
            prev.v + gain * (command.v - prev.v),
            prev.omega + gain * (command.omega - prev.omega),
        );
        // The lag can pass through low-speed states where the yaw rate is
        // no longer reachable.
        clamp_twist(lagged, p)
    }

    pub fn step(&mut self, action: [f64; 2]) -> Result<Step, EnvError> {
        if self.state.finished {
            return Err(EnvError::EpisodeFinished);
        }
        let action = checked_action::<2>(&action)?;
        let dt = self.world.dt;
        let twist = self.actuate(action);

        let s = &mut self.state;
        let (x, y, th) = (s.position[0], s.position[1], s.theta);
        let th_next = th + twist.omega * dt;
        if twist.omega == 0.0 || self.world.integrator == Integrator::Euler {
            s.position = [x + twist.v * th.cos() * dt, y + twist.v * th.sin() * dt];
        } else {
            let radius = twist.v / twist.omega;
            s.position = [
                x + radius * (th_next.sin() - th.sin()),
                y - radius * (th_next.cos() - th.cos()),
            ];
        }
        s.theta = wrap_angle(th_next);
        s.wheels = wheel_state_from_twist(twist, &s.wheels, dt, &self.robot);
        s.twist = twist;
        s.step_index += 1;

        let info = self.step_info();
        let spec = self.world.reward_spec();
        let goal = self.state.goal;
        let reward = spec.compute_reward(info.achieved_goal, goal, &info);
        let terminated = spec.is_terminal(info.achieved_goal, goal, &info);
        let truncated = !terminated && self.state.step_index >= self.world.max_steps;
        self.state.finished = terminated || truncated;
        Ok(Step { obs: self.observation(), reward, terminated, truncated, info })
    }
}

impl GoalEnv for DasmrEnv {
    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn reset(&mut self) -> Vec<f64> {
        DasmrEnv::reset(self).0.to_vec()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        let action = checked_action::<2>(action)?;
        let s = DasmrEnv::step(self, action)?;
        Ok(StepOutcome {
            obs: s.obs.0.to_vec(),
            reward: s.reward,
            terminated: s.terminated,
            truncated: s.truncated,
            info: s.info,
        })
    }

    fn reward_spec(&self) -> RewardSpec {
        self.world.reward_spec()
    }
}
