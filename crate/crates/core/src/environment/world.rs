use super::{EnvError, Point, RewardSpec};

/// Axis-aligned box goals are sampled from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalBox {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

/// Pose update rule applied over one control period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Closed-form motion along the arc of a twist held over the period.
    #[default]
    ExactArc,
    /// `x += v cos(theta) dt`, `y += v sin(theta) dt`, `theta += omega dt`.
    Euler,
}

/// Workspace, obstacle and episode settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldConfig {
    /// Half side of the square workspace centered on the origin (m).
    pub workspace_half: f64,
    pub obstacle_center: Point,
    pub obstacle_radius: f64,
    pub goal_box: GoalBox,
    /// Success radius (m).
    pub d_th: f64,
    /// Control period (s).
    pub dt: f64,
    pub max_steps: usize,
    pub collision_margin: f64,
    /// Footprint extent along the heading (m).
    pub footprint_length: f64,
    /// Footprint extent across the heading (m).
    pub footprint_width: f64,
    pub dense_reward_mode: bool,
    pub collision_terminates: bool,
    pub integrator: Integrator,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            workspace_half: 4.0,
            obstacle_center: [0.0, 0.8],
            obstacle_radius: 0.30,
            goal_box: GoalBox { x: [-2.0, 2.0], y: [0.8, 2.0] },
            d_th: 0.15,
            dt: 1.0 / 40.0,
            max_steps: 800,
            collision_margin: 0.05,
            footprint_length: 0.90,
            footprint_width: 0.65,
            dense_reward_mode: false,
            collision_terminates: false,
            integrator: Integrator::ExactArc,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: String| Err(EnvError::InvalidConfig(msg));
        if !(self.workspace_half > 0.0) {
            return bad("workspace_half must be > 0".into());
        }
        let g = &self.goal_box;
        if g.x[0] > g.x[1] || g.y[0] > g.y[1] {
            return bad(format!("goal box bounds are reversed: {g:?}"));
        }
        let corners = [[g.x[0], g.y[0]], [g.x[1], g.y[1]]];
        if !corners.iter().all(|&c| self.in_workspace(c)) {
            return bad(format!("goal box {g:?} is not inside the workspace"));
        }
        if !(self.d_th > 0.0 && self.dt > 0.0 && self.obstacle_radius > 0.0) {
            return bad("d_th, dt and obstacle_radius must be > 0".into());
        }
        if self.max_steps == 0 {
            return bad("max_steps must be >= 1".into());
        }
        if !(self.footprint_length > 0.0 && self.footprint_width > 0.0) {
            return bad("footprint dimensions must be > 0".into());
        }
        Ok(())
    }

    pub fn in_workspace(&self, p: Point) -> bool {
        in_square(p, self.workspace_half)
    }

    pub fn reward_spec(&self) -> RewardSpec {
        RewardSpec {
            d_th: self.d_th,
            collision_margin: self.collision_margin,
            dense: self.dense_reward_mode,
            collision_terminates: self.collision_terminates,
        }
    }
}

/// Closed square `|x| <= half, |y| <= half`.
pub fn in_square(p: Point, half: f64) -> bool {
    p[0].abs() <= half && p[1].abs() <= half
}

/// Signed clearance between the oriented footprint rectangle centered at
/// `center` with heading `theta` and the obstacle disc. Negative values are
/// penetration depth.
pub fn closest_distance(center: Point, theta: f64, world: &WorldConfig) -> f64 {
    let dx = world.obstacle_center[0] - center[0];
    let dy = world.obstacle_center[1] - center[1];
    let (s, c) = theta.sin_cos();
    // Obstacle center in the robot frame.
    let lx = c * dx + s * dy;
    let ly = -s * dx + c * dy;
    let qx = lx.abs() - world.footprint_length / 2.0;
    let qy = ly.abs() - world.footprint_width / 2.0;
    let outside = qx.max(0.0).hypot(qy.max(0.0));
    let inside = qx.max(qy).min(0.0);
    outside + inside - world.obstacle_radius
}
