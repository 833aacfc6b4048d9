//! Double-Ackermann steering geometry.
//!
//! Both axles steer; in the symmetric configuration the rear axle mirrors
//! the front one, so a single `(phi_l, phi_r)` pair describes the vehicle
//! (front wheels at `+phi`, rear wheels at `-phi`). All quantities are
//! expressed in the robot frame with `+x` forward and `+y` to the left; a
//! positive ICR radius places the instantaneous center of rotation on the
//! `+y` side (left turn).

use thiserror::Error;

/// Relative tolerance used when reconstructing a twist from a wheel state.
pub const WHEEL_CONSISTENCY_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("inconsistent wheel state: {0}")]
    InconsistentWheelState(String),
    #[error("invalid robot parameters: {0}")]
    InvalidParams(String),
}

/// Geometric and actuation constants of the robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotParams {
    /// Distance between front and rear axles (m).
    pub wheelbase: f64,
    /// Distance between left and right wheels (m).
    pub track: f64,
    pub wheel_radius: f64,
    /// Longitudinal speed limit (m/s).
    pub v_max: f64,
    /// Yaw-rate limit (rad/s).
    pub omega_max: f64,
    /// Steering-angle limit (rad), strictly inside (0, pi/2).
    pub phi_max: f64,
    /// First-order actuator lag on the chassis twist (s); 0 disables it.
    pub twist_time_constant: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            wheelbase: 0.6,
            track: 0.5,
            wheel_radius: 0.15,
            v_max: 1.0,
            omega_max: 1.0,
            phi_max: 0.6,
            twist_time_constant: 0.15,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        let bad = |msg: &str| Err(KinematicsError::InvalidParams(msg.to_string()));
        if !(self.wheelbase > 0.0 && self.track > 0.0 && self.wheel_radius > 0.0) {
            return bad("wheelbase, track and wheel_radius must be > 0");
        }
        if !(self.v_max > 0.0 && self.omega_max > 0.0) {
            return bad("v_max and omega_max must be > 0");
        }
        if !(self.phi_max > 0.0 && self.phi_max < std::f64::consts::FRAC_PI_2) {
            return bad("phi_max must lie in (0, pi/2)");
        }
        if !(self.twist_time_constant >= 0.0 && self.twist_time_constant.is_finite()) {
            return bad("twist_time_constant must be finite and >= 0");
        }
        Ok(())
    }

    fn half_length(&self) -> f64 {
        self.wheelbase / 2.0
    }

    fn half_track(&self) -> f64 {
        self.track / 2.0
    }

    /// Smallest |R| reachable without exceeding `phi_max` on the inner wheel.
    pub fn min_turning_radius(&self) -> f64 {
        self.half_track() + self.half_length() / self.phi_max.tan()
    }
}

/// Chassis twist: longitudinal speed and yaw rate of the robot center.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChassisTwist {
    pub v: f64,
    pub omega: f64,
}

impl ChassisTwist {
    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }
}

/// Per-side steering and spin state of the wheels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WheelState {
    pub phi_l: f64,
    pub phi_r: f64,
    pub omega_l: f64,
    pub omega_r: f64,
    pub phi_dot_l: f64,
    pub phi_dot_r: f64,
}

/// Signed distance from the robot center to the ICR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IcrRadius {
    /// Zero yaw rate: the ICR is at infinity.
    Straight,
    Radius(f64),
}

pub fn icr_radius(twist: ChassisTwist) -> IcrRadius {
    if twist.omega == 0.0 {
        IcrRadius::Straight
    } else {
        IcrRadius::Radius(twist.v / twist.omega)
    }
}

/// Front steering angles; `saturated` is set when either unclamped angle
/// exceeded `phi_max` and had to be clamped (the curvature is infeasible).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringAngles {
    pub phi_l: f64,
    pub phi_r: f64,
    pub saturated: bool,
}

pub fn steering_angles(twist: ChassisTwist, p: &RobotParams) -> SteeringAngles {
    let (phi_l, phi_r) = match icr_radius(twist) {
        IcrRadius::Straight => (0.0, 0.0),
        IcrRadius::Radius(r) => (
            (p.half_length() / (r - p.half_track())).atan(),
            (p.half_length() / (r + p.half_track())).atan(),
        ),
    };
    let saturated = phi_l.abs() > p.phi_max || phi_r.abs() > p.phi_max;
    SteeringAngles {
        phi_l: phi_l.clamp(-p.phi_max, p.phi_max),
        phi_r: phi_r.clamp(-p.phi_max, p.phi_max),
        saturated,
    }
}

/// Distances from the left and right wheels to the ICR.
pub fn wheel_icr_radii(radius: f64, p: &RobotParams) -> (f64, f64) {
    (
        (radius - p.half_track()).hypot(p.half_length()),
        (radius + p.half_track()).hypot(p.half_length()),
    )
}

/// Wheel spin speeds (rad/s).
///
/// The magnitude follows `|omega_c| * R_side / r`. The sign follows the
/// direction of travel (`sign(v)`), so a right turn is the exact mirror of a
/// left turn. For `v = 0` the raw `omega_c * R_side / r` form is kept.
pub fn wheel_speeds(twist: ChassisTwist, p: &RobotParams) -> (f64, f64) {
    match icr_radius(twist) {
        IcrRadius::Straight => {
            let w = twist.v / p.wheel_radius;
            (w, w)
        }
        IcrRadius::Radius(r) => {
            let (r_l, r_r) = wheel_icr_radii(r, p);
            let sign = if r < 0.0 { -1.0 } else { 1.0 };
            let k = sign * twist.omega / p.wheel_radius;
            (k * r_l, k * r_r)
        }
    }
}

/// Full wheel state for `twist`; steering rates are backward differences
/// against `prev` over `dt`.
pub fn wheel_state_from_twist(
    twist: ChassisTwist,
    prev: &WheelState,
    dt: f64,
    p: &RobotParams,
) -> WheelState {
    debug_assert!(dt > 0.0);
    let steer = steering_angles(twist, p);
    let (omega_l, omega_r) = wheel_speeds(twist, p);
    WheelState {
        phi_l: steer.phi_l,
        phi_r: steer.phi_r,
        omega_l,
        omega_r,
        phi_dot_l: (steer.phi_l - prev.phi_l) / dt,
        phi_dot_r: (steer.phi_r - prev.phi_r) / dt,
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12)
}

/// Recovers the chassis twist from a wheel state (inverse of the forward map).
pub fn twist_from_wheel_state(
    ws: &WheelState,
    p: &RobotParams,
) -> Result<ChassisTwist, KinematicsError> {
    let tol = WHEEL_CONSISTENCY_TOL;
    if ws.phi_l == 0.0 || ws.phi_r == 0.0 {
        if ws.phi_l != ws.phi_r {
            return Err(KinematicsError::InconsistentWheelState(format!(
                "only one steering angle is zero (phi_l={}, phi_r={})",
                ws.phi_l, ws.phi_r
            )));
        }
        if !rel_close(ws.omega_l, ws.omega_r, tol) {
            return Err(KinematicsError::InconsistentWheelState(format!(
                "straight motion with unequal spin speeds ({}, {})",
                ws.omega_l, ws.omega_r
            )));
        }
        return Ok(ChassisTwist::new(ws.omega_l * p.wheel_radius, 0.0));
    }

    let radius = p.half_track() + p.half_length() / ws.phi_l.tan();
    let radius_from_right = p.half_length() / ws.phi_r.tan() - p.half_track();
    if !rel_close(radius, radius_from_right, tol) {
        return Err(KinematicsError::InconsistentWheelState(format!(
            "steering angles imply different ICR radii ({radius}, {radius_from_right})"
        )));
    }

    let (r_l, r_r) = wheel_icr_radii(radius, p);
    let sign = if radius < 0.0 { -1.0 } else { 1.0 };
    let omega = sign * ws.omega_l * p.wheel_radius / r_l;
    let omega_from_right = sign * ws.omega_r * p.wheel_radius / r_r;
    if !rel_close(omega, omega_from_right, tol) {
        return Err(KinematicsError::InconsistentWheelState(format!(
            "spin speeds imply different yaw rates ({omega}, {omega_from_right})"
        )));
    }
    Ok(ChassisTwist::new(omega * radius, omega))
}

/// Largest |omega| that keeps both steering angles within `phi_max` at
/// speed `v`.
pub fn max_feasible_yaw_rate(v: f64, p: &RobotParams) -> f64 {
    v.abs() / p.min_turning_radius()
}

/// Clamps a twist to the speed, yaw-rate and curvature limits.
pub fn clamp_twist(twist: ChassisTwist, p: &RobotParams) -> ChassisTwist {
    let v = twist.v.clamp(-p.v_max, p.v_max);
    let limit = p.omega_max.min(max_feasible_yaw_rate(v, p));
    ChassisTwist::new(v, twist.omega.clamp(-limit, limit))
}
