//! Differential drive kinematics: `ẋ = v cos θ`, `ẏ = v sin θ`, `θ̇ = ω`.
//!
//! [`step`] integrates the model with fixed-step classical RK4 so that every
//! simulation in the repository is deterministic and schedule-independent.
//! [`integrate_arc_exact`] is the closed-form constant-command solution and
//! serves as the test oracle bounding the integrator error.

use thiserror::Error;

/// Commands below this angular rate are treated as straight-line motion by
/// the exact-arc solution.
pub const OMEGA_STRAIGHT_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("non-finite value for {0}")]
    NonFinite(&'static str),
    #[error("{name} = {value} violates {bound}")]
    OutOfBounds {
        name: &'static str,
        value: f64,
        bound: String,
    },
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle % std::f64::consts::TAU;
    if a <= -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    } else if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    }
    a
}

/// Robot configuration `(x, y, θ)` in meters and radians.
///
/// The heading is always stored wrapped to `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Result<Self, KinematicsError> {
        if !x.is_finite() {
            return Err(KinematicsError::NonFinite("x"));
        }
        if !y.is_finite() {
            return Err(KinematicsError::NonFinite("y"));
        }
        if !theta.is_finite() {
            return Err(KinematicsError::NonFinite("theta"));
        }
        Ok(Self {
            x,
            y,
            theta: wrap_angle(theta),
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

/// Physical limits of the robot plus its control period.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotLimits {
    /// Maximum linear velocity in m/s.
    pub v_max: f64,
    /// Maximum angular velocity magnitude in rad/s.
    pub omega_max: f64,
    /// Control period in seconds.
    pub control_period: f64,
}

impl Default for RobotLimits {
    fn default() -> Self {
        Self {
            v_max: 1.0,
            omega_max: 0.5,
            control_period: 0.05,
        }
    }
}

impl RobotLimits {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        for (name, value) in [
            ("v_max", self.v_max),
            ("omega_max", self.omega_max),
            ("control_period", self.control_period),
        ] {
            if !value.is_finite() {
                return Err(KinematicsError::NonFinite(name));
            }
            if value <= 0.0 {
                return Err(KinematicsError::OutOfBounds {
                    name,
                    value,
                    bound: "> 0".to_string(),
                });
            }
        }
        Ok(())
    }

    /// How far the robot can travel within one control period; this is the
    /// margin subtracted from the safe set (0.05 m at defaults).
    pub fn one_step_motion(&self) -> f64 {
        self.v_max * self.control_period
    }
}

/// Actuation pair `(v, ω)`, validated against [`RobotLimits`] at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCommand {
    v: f64,
    omega: f64,
}

impl ControlCommand {
    pub fn new(v: f64, omega: f64, limits: &RobotLimits) -> Result<Self, KinematicsError> {
        if !v.is_finite() {
            return Err(KinematicsError::NonFinite("v"));
        }
        if !omega.is_finite() {
            return Err(KinematicsError::NonFinite("omega"));
        }
        if !(0.0..=limits.v_max).contains(&v) {
            return Err(KinematicsError::OutOfBounds {
                name: "v",
                value: v,
                bound: format!("[0, {}]", limits.v_max),
            });
        }
        if omega.abs() > limits.omega_max {
            return Err(KinematicsError::OutOfBounds {
                name: "omega",
                value: omega,
                bound: format!("|omega| <= {}", limits.omega_max),
            });
        }
        Ok(Self { v, omega })
    }

    /// Clamp raw values into the admissible box instead of rejecting them.
    pub fn clamped(v: f64, omega: f64, limits: &RobotLimits) -> Self {
        Self {
            v: v.clamp(0.0, limits.v_max),
            omega: omega.clamp(-limits.omega_max, limits.omega_max),
        }
    }

    pub fn stop() -> Self {
        Self { v: 0.0, omega: 0.0 }
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }
}

fn check_dt(dt: f64) -> Result<(), KinematicsError> {
    if !dt.is_finite() {
        return Err(KinematicsError::NonFinite("dt"));
    }
    if dt <= 0.0 {
        return Err(KinematicsError::OutOfBounds {
            name: "dt",
            value: dt,
            bound: "> 0".to_string(),
        });
    }
    Ok(())
}

#[inline]
fn derivative(theta: f64, cmd: &ControlCommand) -> (f64, f64, f64) {
    (cmd.v * theta.cos(), cmd.v * theta.sin(), cmd.omega)
}

/// Advance the pose over `dt` under a constant command using classical
/// fixed-step 4th-order Runge-Kutta; the heading is re-wrapped afterwards.
pub fn step(pose: &Pose, cmd: &ControlCommand, dt: f64) -> Result<Pose, KinematicsError> {
    check_dt(dt)?;

    let (k1x, k1y, k1t) = derivative(pose.theta, cmd);
    let (k2x, k2y, k2t) = derivative(pose.theta + 0.5 * dt * k1t, cmd);
    let (k3x, k3y, k3t) = derivative(pose.theta + 0.5 * dt * k2t, cmd);
    let (k4x, k4y, k4t) = derivative(pose.theta + dt * k3t, cmd);

    let sixth = dt / 6.0;
    Pose::new(
        pose.x + sixth * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
        pose.y + sixth * (k1y + 2.0 * k2y + 2.0 * k3y + k4y),
        pose.theta + sixth * (k1t + 2.0 * k2t + 2.0 * k3t + k4t),
    )
}

/// Exact constant-command solution: a straight line for `|ω| < 1e-9`, a
/// circular arc of radius `v/ω` otherwise.
pub fn integrate_arc_exact(
    pose: &Pose,
    cmd: &ControlCommand,
    dt: f64,
) -> Result<Pose, KinematicsError> {
    check_dt(dt)?;

    if cmd.omega.abs() < OMEGA_STRAIGHT_EPS {
        return Pose::new(
            pose.x + cmd.v * dt * pose.theta.cos(),
            pose.y + cmd.v * dt * pose.theta.sin(),
            pose.theta,
        );
    }

    let radius = cmd.v / cmd.omega;
    let theta_end = pose.theta + cmd.omega * dt;
    Pose::new(
        pose.x + radius * (theta_end.sin() - pose.theta.sin()),
        pose.y - radius * (theta_end.cos() - pose.theta.cos()),
        theta_end,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn wide_limits() -> RobotLimits {
        RobotLimits {
            v_max: 2.0,
            omega_max: 2.0,
            control_period: 0.05,
        }
    }

    fn pose(x: f64, y: f64, theta: f64) -> Pose {
        Pose::new(x, y, theta).unwrap()
    }

    fn cmd(v: f64, omega: f64) -> ControlCommand {
        ControlCommand::new(v, omega, &wide_limits()).unwrap()
    }

    fn pose_distance(a: &Pose, b: &Pose) -> f64 {
        ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
    }

    #[test]
    fn wrap_angle_convention() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(PI + 0.5) - (0.5 - PI)).abs() < 1e-12);
        assert_eq!(wrap_angle(0.0), 0.0);
    }

    #[test]
    fn zero_input_is_a_fixed_point() {
        let p = pose(0.0, 0.0, 0.0);
        let next = step(&p, &ControlCommand::stop(), 0.05).unwrap();
        assert_eq!(next, p);
    }

    #[test]
    fn straight_line_motion_is_exact() {
        let next = step(&pose(0.0, 0.0, 0.0), &cmd(1.0, 0.0), 1.0).unwrap();
        assert!((next.x - 1.0).abs() < 1e-9);
        assert!(next.y.abs() < 1e-9);
        assert!(next.theta().abs() < 1e-9);
    }

    #[test]
    fn half_circle_arc_matches_closed_form() {
        // radius v/omega = 1 m; a half circle takes pi/omega = 2*pi seconds
        // and ends at (0, 2) with the heading flipped to pi.
        let start = pose(0.0, 0.0, 0.0);
        let command = cmd(0.5, 0.5);
        let exact = integrate_arc_exact(&start, &command, 2.0 * PI).unwrap();
        assert!(exact.x.abs() < 1e-12);
        assert!((exact.y - 2.0).abs() < 1e-12);
        assert!((exact.theta() - PI).abs() < 1e-12);

        let mut p = start;
        let whole_steps = (2.0 * PI / 0.05).floor();
        for _ in 0..(whole_steps as usize) {
            p = step(&p, &command, 0.05).unwrap();
        }
        // 0.05 does not divide 2*pi; finish the remainder.
        let remainder = 2.0 * PI - whole_steps * 0.05;
        if remainder > 1e-12 {
            p = step(&p, &command, remainder).unwrap();
        }
        assert!(pose_distance(&p, &exact) < 1e-6);
        assert!((wrap_angle(p.theta() - exact.theta())).abs() < 1e-6);
    }

    #[test]
    fn exact_arc_examples() {
        let straight = integrate_arc_exact(&pose(0.0, 0.0, 0.0), &cmd(1.0, 0.0), 2.0).unwrap();
        assert!((straight.x - 2.0).abs() < 1e-12);
        assert!(straight.y.abs() < 1e-12);

        // unit-radius quarter arc
        let quarter = integrate_arc_exact(&pose(0.0, 0.0, 0.0), &cmd(1.0, 1.0), PI / 2.0).unwrap();
        assert!((quarter.x - 1.0).abs() < 1e-12);
        assert!((quarter.y - 1.0).abs() < 1e-12);
        assert!((quarter.theta() - PI / 2.0).abs() < 1e-12);

        // pure rotation in place
        let spin = integrate_arc_exact(&pose(3.0, 4.0, PI), &cmd(0.0, 0.5), 1.0).unwrap();
        assert!((spin.x - 3.0).abs() < 1e-12);
        assert!((spin.y - 4.0).abs() < 1e-12);
        assert!((spin.theta() - wrap_angle(PI + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn step_is_deterministic() {
        let p = pose(0.3, -0.7, 1.1);
        let c = cmd(0.8, -0.4);
        let a = step(&p, &c, 0.05).unwrap();
        let b = step(&p, &c, 0.05).unwrap();
        assert_eq!(a.x.to_bits(), b.x.to_bits());
        assert_eq!(a.y.to_bits(), b.y.to_bits());
        assert_eq!(a.theta().to_bits(), b.theta().to_bits());
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(Pose::new(f64::NAN, 0.0, 0.0).is_err());
        assert!(Pose::new(0.0, f64::INFINITY, 0.0).is_err());
        assert!(ControlCommand::new(-0.1, 0.0, &RobotLimits::default()).is_err());
        assert!(ControlCommand::new(1.5, 0.0, &RobotLimits::default()).is_err());
        assert!(ControlCommand::new(0.5, 0.6, &RobotLimits::default()).is_err());
        let p = pose(0.0, 0.0, 0.0);
        assert!(step(&p, &ControlCommand::stop(), 0.0).is_err());
        assert!(step(&p, &ControlCommand::stop(), -1.0).is_err());
        assert!(step(&p, &ControlCommand::stop(), f64::NAN).is_err());
    }

    #[test]
    fn rk4_matches_oracle_over_random_commands() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let p = pose(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-PI..PI),
            );
            let c = cmd(rng.random_range(0.0..1.0), rng.random_range(-0.5..0.5));

            let single = step(&p, &c, 0.05).unwrap();
            let exact = integrate_arc_exact(&p, &c, 0.05).unwrap();
            assert!(pose_distance(&single, &exact) < 1e-6);
            assert!(wrap_angle(single.theta() - exact.theta()).abs() < 1e-6);

            let mut acc = p;
            for _ in 0..300 {
                acc = step(&acc, &c, 0.05).unwrap();
            }
            let exact_15s = integrate_arc_exact(&p, &c, 15.0).unwrap();
            assert!(pose_distance(&acc, &exact_15s) < 1e-5);
            assert!(wrap_angle(acc.theta() - exact_15s.theta()).abs() < 1e-5);
        }
    }

    #[test]
    fn step_never_overshoots_speed_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let p = pose(0.0, 0.0, rng.random_range(-PI..PI));
            let v = rng.random_range(0.0..1.0);
            let c = cmd(v, rng.random_range(-0.5..0.5));
            let next = step(&p, &c, 0.05).unwrap();
            assert!(pose_distance(&p, &next) <= v * 0.05 + 1e-12);
        }
    }

    #[test]
    fn command_clamping() {
        let limits = RobotLimits::default();
        let c = ControlCommand::clamped(2.0, -1.0, &limits);
        assert_eq!(c.v(), 1.0);
        assert_eq!(c.omega(), -0.5);
    }
}
