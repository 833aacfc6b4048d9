use super::{distance, Point, StepInfo};

pub const OUT_OF_BOUNDS_REWARD: f64 = -100.0;
pub const SUCCESS_REWARD: f64 = 1.0;
pub const COLLISION_REWARD: f64 = -10.0;
pub const STEP_REWARD: f64 = -1.0;

/// Scoring rule shared by the environment and goal relabeling.
///
/// Case precedence: out of bounds, then goal reached, then obstacle
/// proximity, then the per-step penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSpec {
    /// Success radius around the desired goal (m).
    pub d_th: f64,
    /// Clearance below which the proximity penalty applies (m).
    pub collision_margin: f64,
    /// Replace the sparse +1/-1 cases by the negative goal distance.
    pub dense: bool,
    pub collision_terminates: bool,
}

impl RewardSpec {
    pub fn is_success(&self, achieved: Point, desired: Point) -> bool {
        distance(achieved, desired) <= self.d_th
    }

    fn is_collision(&self, info: &StepInfo) -> bool {
        info.closest_distance < self.collision_margin
    }

    pub fn compute_reward(&self, achieved: Point, desired: Point, info: &StepInfo) -> f64 {
        if !info.in_bounds {
            return OUT_OF_BOUNDS_REWARD;
        }
        let success = self.is_success(achieved, desired);
        if self.dense {
            if !success && self.is_collision(info) {
                return COLLISION_REWARD;
            }
            return -distance(achieved, desired);
        }
        if success {
            SUCCESS_REWARD
        } else if self.is_collision(info) {
            COLLISION_REWARD
        } else {
            STEP_REWARD
        }
    }

    pub fn is_terminal(&self, achieved: Point, desired: Point, info: &StepInfo) -> bool {
        !info.in_bounds
            || self.is_success(achieved, desired)
            || (self.collision_terminates && self.is_collision(info))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec() -> RewardSpec {
        RewardSpec { d_th: 0.15, collision_margin: 0.05, dense: false, collision_terminates: false }
    }

    fn info(achieved: Point, closest: f64, in_bounds: bool) -> StepInfo {
        StepInfo { achieved_goal: achieved, closest_distance: closest, in_bounds, success: false }
    }

    #[test]
    fn sparse_examples() {
        let s = spec();
        assert_eq!(s.compute_reward([1.0, 1.5], [1.1, 1.5], &info([1.0, 1.5], 1.0, true)), 1.0);
        assert_eq!(s.compute_reward([0.0, 0.0], [1.0, 1.0], &info([0.0, 0.0], 0.04, true)), -10.0);
        assert_eq!(s.compute_reward([4.5, 0.0], [1.0, 1.0], &info([4.5, 0.0], 3.0, false)), -100.0);
        assert_eq!(s.compute_reward([0.0, 0.0], [2.0, 2.0], &info([0.0, 0.0], 0.175, true)), -1.0);
    }

    #[test]
    fn success_beats_proximity() {
        let s = spec();
        let i = info([0.0, 0.0], 0.0, true);
        assert_eq!(s.compute_reward([0.0, 0.0], [0.0, 0.1], &i), 1.0);
    }

    #[test]
    fn dense_mode_keeps_penalties() {
        let s = RewardSpec { dense: true, ..spec() };
        let r = s.compute_reward([0.0, 0.0], [3.0, 4.0], &info([0.0, 0.0], 1.0, true));
        assert!((r + 5.0).abs() < 1e-12);
        assert_eq!(s.compute_reward([0.0, 0.0], [3.0, 4.0], &info([0.0, 0.0], 0.0, true)), -10.0);
        assert_eq!(s.compute_reward([5.0, 0.0], [3.0, 4.0], &info([5.0, 0.0], 1.0, false)), -100.0);
    }

    #[test]
    fn terminal_cases() {
        let s = spec();
        assert!(s.is_terminal([0.0, 0.0], [0.1, 0.0], &info([0.0, 0.0], 1.0, true)));
        assert!(s.is_terminal([9.0, 0.0], [0.0, 0.0], &info([9.0, 0.0], 1.0, false)));
        assert!(!s.is_terminal([0.0, 0.0], [2.0, 0.0], &info([0.0, 0.0], 0.0, true)));
        let t = RewardSpec { collision_terminates: true, ..s };
        assert!(t.is_terminal([0.0, 0.0], [2.0, 0.0], &info([0.0, 0.0], 0.0, true)));
    }

    // Literal transcription of the four reward cases with the declared
    // precedence, written independently of `compute_reward`.
    fn transcribed(achieved: Point, desired: Point, closest: f64, in_bounds: bool) -> f64 {
        let d = ((desired[0] - achieved[0]).powi(2) + (desired[1] - achieved[1]).powi(2)).sqrt();
        let cases = [
            (!in_bounds, -100.0),
            (d <= 0.15, 1.0),
            (closest < 0.05, -10.0),
            (d > 0.15, -1.0),
        ];
        cases.iter().find(|(hit, _)| *hit).map(|(_, r)| *r).unwrap()
    }

    #[test]
    fn truth_table_randomized() {
        let s = spec();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..10_000 {
            // Cycle through the 2x2x2 grid of (near goal, near obstacle, in bounds).
            let near_goal = i & 1 == 1;
            let near_obstacle = i & 2 == 2;
            let in_bounds = i & 4 == 4;
            let achieved = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
            let (angle, radius): (f64, f64) = (
                rng.random_range(0.0..std::f64::consts::TAU),
                if near_goal { rng.random_range(0.0..0.15) } else { rng.random_range(0.1501..6.0) },
            );
            let desired = [achieved[0] + radius * angle.cos(), achieved[1] + radius * angle.sin()];
            let closest =
                if near_obstacle { rng.random_range(-0.5..0.0499) } else { rng.random_range(0.05..5.0) };
            let got = s.compute_reward(achieved, desired, &info(achieved, closest, in_bounds));
            assert_eq!(got, transcribed(achieved, desired, closest, in_bounds), "case {i}");
        }
    }
}
