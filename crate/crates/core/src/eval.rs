//! Deterministic policy evaluation: success rate, final-error statistics
//! and success weighted by path length, with the shortest collision-free
//! path around the disc obstacle.

use std::f64::consts::PI;

use thiserror::Error;

use crate::agent::{Agent, AgentError};
use crate::environment::{distance, DasmrEnv, EnvError, Observation, Point, WorldConfig};
use crate::kinematics::RobotParams;
use crate::rng::{substream, ENV_STREAM, UNSEEN_SEED_MASK};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{which} {point:?} is inside the inflated obstacle")]
    InsideObstacle { which: &'static str, point: Point },
    #[error("at least one evaluation episode is required")]
    NoEpisodes,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// Which goal stream an evaluation draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedMode {
    /// The training goal stream replayed from its start.
    Seen,
    /// An independent stream.
    Unseen,
}

impl SeedMode {
    pub fn goal_seed(self, seed: u64) -> u64 {
        match self {
            SeedMode::Seen => seed,
            SeedMode::Unseen => seed ^ UNSEEN_SEED_MASK,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SeedMode::Seen => "seen",
            SeedMode::Unseen => "unseen",
        }
    }
}

/// One simulated instant of an episode; step 0 is the reset state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub step: usize,
    pub time: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
    pub phi_l: f64,
    pub phi_r: f64,
    /// Reward received on arriving here (0 at step 0).
    pub reward: f64,
    pub closest_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub goal: Point,
    pub success: bool,
    pub final_error: f64,
    /// Sum of per-step center displacements.
    pub path_length: f64,
    pub shortest_path: f64,
    pub steps: usize,
    pub trajectory: Vec<TracePoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalMetrics {
    /// Percent.
    pub success_rate: f64,
    /// Mean final error over all episodes.
    pub average_error: f64,
    /// Population standard deviation over all episodes.
    pub sigma: f64,
    /// Mean and spread over failed episodes only, if any failed.
    pub failure_error: Option<(f64, f64)>,
    pub spl: f64,
    pub episodes: usize,
    pub seed_mode: SeedMode,
}

/// A deterministic controller.
pub trait Policy {
    fn act(&self, obs: &Observation) -> Result<[f64; 2], EvalError>;
}

impl<F: Fn(&Observation) -> [f64; 2]> Policy for F {
    fn act(&self, obs: &Observation) -> Result<[f64; 2], EvalError> {
        Ok(self(obs))
    }
}

/// The deterministic actor of a trained agent.
pub struct GreedyAgent<'a>(pub &'a Agent);

impl Policy for GreedyAgent<'_> {
    fn act(&self, obs: &Observation) -> Result<[f64; 2], EvalError> {
        // Deterministic mode never touches the generator.
        let mut unused = substream(0, "unused");
        let a = self.0.act(obs.as_slice(), true, &mut unused)?;
        Ok([a[0], a[1]])
    }
}

/// Length of the shortest path from `start` to `goal` that avoids the open
/// disc at `center` of radius `radius`.
pub fn shortest_path_length(start: Point, goal: Point, center: Point, radius: f64) -> Result<f64, EvalError> {
    let (ds, dg) = (distance(start, center), distance(goal, center));
    if ds < radius {
        return Err(EvalError::InsideObstacle { which: "start", point: start });
    }
    if dg < radius {
        return Err(EvalError::InsideObstacle { which: "goal", point: goal });
    }
    let direct = distance(start, goal);
    if segment_point_distance(start, goal, center) >= radius {
        return Ok(direct);
    }
    // Tangent from each end, then the shorter way around the disc.
    let ts = (ds * ds - radius * radius).max(0.0).sqrt();
    let tg = (dg * dg - radius * radius).max(0.0).sqrt();
    let a = (start[1] - center[1]).atan2(start[0] - center[0]);
    let b = (goal[1] - center[1]).atan2(goal[0] - center[0]);
    let mut sweep = (a - b).abs() % (2.0 * PI);
    if sweep > PI {
        sweep = 2.0 * PI - sweep;
    }
    let arc = sweep - (radius / ds).min(1.0).acos() - (radius / dg).min(1.0).acos();
    Ok(ts + tg + radius * arc.max(0.0))
}

fn segment_point_distance(a: Point, b: Point, p: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return distance(a, p);
    }
    let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0);
    distance([a[0] + t * dx, a[1] + t * dy], p)
}

/// `(1/N) sum S_i l_i / max(p_i, l_i)`.
pub fn spl(results: &[EpisodeResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    // Folding from +0.0: an empty float sum is -0.0.
    let total = results.iter().filter(|r| r.success).fold(0.0, |acc, r| {
        let denom = r.path_length.max(r.shortest_path);
        acc + if denom > 0.0 { r.shortest_path / denom } else { 1.0 }
    });
    total / results.len() as f64
}

/// Mean and population standard deviation of the final errors.
pub fn aggregate_error<'a>(results: impl IntoIterator<Item = &'a EpisodeResult>) -> Option<(f64, f64)> {
    let errors: Vec<f64> = results.into_iter().map(|r| r.final_error).collect();
    if errors.is_empty() {
        return None;
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

pub fn metrics(results: &[EpisodeResult], seed_mode: SeedMode) -> Result<EvalMetrics, EvalError> {
    let (average_error, sigma) = aggregate_error(results).ok_or(EvalError::NoEpisodes)?;
    let successes = results.iter().filter(|r| r.success).count();
    Ok(EvalMetrics {
        success_rate: 100.0 * successes as f64 / results.len() as f64,
        average_error,
        sigma,
        failure_error: aggregate_error(results.iter().filter(|r| !r.success)),
        spl: spl(results),
        episodes: results.len(),
        seed_mode,
    })
}

/// Obstacle radius used for reference paths: the disc grown by half the
/// footprint width.
pub fn inflated_radius(world: &WorldConfig) -> f64 {
    world.obstacle_radius + world.footprint_width / 2.0
}

/// Reference path length for SPL. Goals inside the inflated disc have no
/// feasible reference path; the straight-line distance is used instead.
pub fn reference_path(world: &WorldConfig, start: Point, goal: Point) -> f64 {
    shortest_path_length(start, goal, world.obstacle_center, inflated_radius(world))
        .unwrap_or_else(|_| distance(start, goal))
}

fn trace_point(env: &DasmrEnv, reward: f64) -> TracePoint {
    let s = env.state();
    TracePoint {
        step: s.step_index,
        time: s.step_index as f64 * env.world().dt,
        x: s.position[0],
        y: s.position[1],
        theta: s.theta,
        v: s.twist.v,
        omega: s.twist.omega,
        phi_l: s.wheels.phi_l,
        phi_r: s.wheels.phi_r,
        reward,
        closest_distance: env.step_info().closest_distance,
    }
}

/// Runs one deterministic episode from the reset state toward `goal`.
pub fn run_episode<P: Policy + ?Sized>(env: &mut DasmrEnv, policy: &P, goal: Point) -> Result<EpisodeResult, EvalError> {
    let mut obs = env.reset_with_goal(goal);
    let start = env.state().position;
    let mut trajectory = vec![trace_point(env, 0.0)];
    let mut path_length = 0.0;
    let mut success = env.step_info().success;
    if !success {
        loop {
            let before = env.state().position;
            let step = env.step(policy.act(&obs)?)?;
            path_length += distance(before, env.state().position);
            trajectory.push(trace_point(env, step.reward));
            obs = step.obs;
            if step.terminated || step.truncated {
                success = step.info.success;
                break;
            }
        }
    }
    let end = env.state().position;
    Ok(EpisodeResult {
        goal,
        success,
        final_error: distance(end, goal),
        path_length,
        shortest_path: reference_path(env.world(), start, goal),
        steps: env.state().step_index,
        trajectory,
    })
}

/// Evaluates `policy` on `episodes` goals drawn from the stream selected by
/// `seed_mode`.
pub fn run_eval<P: Policy + ?Sized>(
    policy: &P,
    episodes: usize,
    seed_mode: SeedMode,
    seed: u64,
    world: WorldConfig,
    robot: RobotParams,
) -> Result<(EvalMetrics, Vec<EpisodeResult>), EvalError> {
    if episodes == 0 {
        return Err(EvalError::NoEpisodes);
    }
    let mut env = DasmrEnv::new(world, robot, substream(seed_mode.goal_seed(seed), ENV_STREAM))?;
    let mut results = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let goal = env.sample_goal();
        results.push(run_episode(&mut env, policy, goal)?);
    }
    Ok((metrics(&results, seed_mode)?, results))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(success: bool, final_error: f64, path: f64, shortest: f64) -> EpisodeResult {
        EpisodeResult {
            goal: [0.0, 0.0],
            success,
            final_error,
            path_length: path,
            shortest_path: shortest,
            steps: 1,
            trajectory: vec![],
        }
    }

    #[test]
    fn straight_when_unobstructed() {
        assert_eq!(shortest_path_length([0.0, 0.0], [0.0, 2.0], [3.0, 3.0], 0.5).unwrap(), 2.0);
    }

    #[test]
    fn tangent_arc_example() {
        let expect = 2.0 * (0.75f64.sqrt() + 0.5 * (PI / 2.0 - (0.75f64.sqrt() / 0.5).atan()));
        let got = shortest_path_length([0.0, 0.0], [0.0, 2.0], [0.0, 1.0], 0.5).unwrap();
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn goal_near_boundary_is_continuous() {
        let c = [0.0, 1.0];
        let at = shortest_path_length([0.0, -1.0], [0.0, 1.5], c, 0.5).unwrap();
        let mut prev = f64::NAN;
        for k in 1..8 {
            let eps = 10f64.powi(-k);
            let l = shortest_path_length([0.0, -1.0], [0.0, 1.5 + eps], c, 0.5).unwrap();
            assert!(l.is_finite());
            prev = l;
        }
        assert!((prev - at).abs() < 1e-6);
        assert!(shortest_path_length([0.0, -1.0], [0.0, 1.2], c, 0.5).is_err());
        assert!(shortest_path_length([0.0, 0.8], [0.0, 3.0], c, 0.5).is_err());
    }

    #[test]
    fn spl_examples() {
        assert_eq!(spl(&[result(false, 1.0, 1.0, 1.0), result(false, 1.0, 2.0, 1.0)]), 0.0);
        assert!(spl(&[result(false, 1.0, 1.0, 1.0)]).is_sign_positive());
        assert_eq!(spl(&[result(true, 0.1, 2.0, 2.0), result(false, 1.0, 1.0, 1.0)]), 0.5);
        assert_eq!(spl(&[result(true, 0.1, 4.0, 2.0), result(false, 1.0, 1.0, 1.0)]), 0.25);
    }

    #[test]
    fn aggregate_error_examples() {
        let (ae, s) = aggregate_error(&[result(true, 0.1, 1.0, 1.0), result(true, 0.2, 1.0, 1.0)]).unwrap();
        assert!((ae - 0.15).abs() < 1e-15 && (s - 0.05).abs() < 1e-15);
        assert_eq!(aggregate_error(&[result(false, 0.7, 1.0, 1.0)]).unwrap().1, 0.0);
        assert!(aggregate_error(&[]).is_none());
    }

    #[test]
    fn metrics_are_permutation_invariant() {
        let mut rs = vec![
            result(true, 0.1, 2.5, 2.0),
            result(false, 0.9, 3.0, 1.0),
            result(true, 0.05, 1.0, 1.0),
            result(false, 1.7, 0.0, 2.0),
        ];
        let a = metrics(&rs, SeedMode::Seen).unwrap();
        rs.reverse();
        rs.swap(0, 2);
        let b = metrics(&rs, SeedMode::Seen).unwrap();
        assert!((a.spl - b.spl).abs() < 1e-15 && (a.average_error - b.average_error).abs() < 1e-15);
        assert!((a.sigma - b.sigma).abs() < 1e-15);
        assert_eq!(a.success_rate, 50.0);
        assert!(a.spl <= a.success_rate / 100.0 + 1e-12);
    }

    #[test]
    fn idle_policy_scores_zero() {
        let idle = |_: &Observation| [0.0, 0.0];
        let world = WorldConfig::default();
        let (m, rs) = run_eval(&idle, 5, SeedMode::Seen, 9527, world, RobotParams::default()).unwrap();
        assert_eq!((m.success_rate, m.spl), (0.0, 0.0));
        let mean_goal = rs.iter().map(|r| distance([0.0, 0.0], r.goal)).sum::<f64>() / 5.0;
        assert!((m.average_error - mean_goal).abs() < 1e-12);
        assert!(rs.iter().all(|r| r.path_length == 0.0 && r.steps == 800));
    }

    #[test]
    fn straight_drive_to_goal_ahead() {
        // Obstacle moved out of the way, goal straight ahead.
        let world = WorldConfig {
            obstacle_center: [0.0, -3.0],
            goal_box: crate::environment::GoalBox { x: [2.0, 2.0], y: [0.0, 0.0] },
            ..Default::default()
        };
        let robot = RobotParams { twist_time_constant: 0.0, ..Default::default() };
        let drive = |_: &Observation| [1.0, 0.0];
        let (m, rs) = run_eval(&drive, 1, SeedMode::Seen, 1, world, robot).unwrap();
        assert_eq!(m.success_rate, 100.0);
        let r = &rs[0];
        // Stops on the first step inside the success radius.
        assert!((r.path_length - r.steps as f64 * 0.025).abs() < 1e-9);
        assert!((m.spl - 2.0 / r.path_length.max(2.0)).abs() < 1e-12);
        assert!(m.spl > 0.92);
    }

    #[test]
    fn goal_at_start_succeeds_immediately() {
        let mut env = DasmrEnv::new(WorldConfig::default(), RobotParams::default(), substream(0, ENV_STREAM)).unwrap();
        let r = run_episode(&mut env, &|_: &Observation| [1.0, 0.0], [0.0, 0.0]).unwrap();
        assert!(r.success && r.steps == 0 && r.trajectory.len() == 1);
    }

    #[test]
    fn seen_and_unseen_streams_differ_and_repeat() {
        let idle = |_: &Observation| [0.0, 0.0];
        let run = |mode| run_eval(&idle, 3, mode, 9527, WorldConfig::default(), RobotParams::default()).unwrap();
        let (m1, seen) = run(SeedMode::Seen);
        let (m2, seen2) = run(SeedMode::Seen);
        let (_, unseen) = run(SeedMode::Unseen);
        assert_eq!(m1, m2);
        assert_eq!(seen, seen2);
        assert_ne!(seen[0].goal, unseen[0].goal);
    }
}
