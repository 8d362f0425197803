//! Scripted stand-ins for the trained high-performance policies.
//!
//! [`ScriptedTracker`] is a heading-plus-cross-track feedback law running up
//! to the full speed limit, faster than pure pursuit on benign segments.
//! [`UnsafeTracker`] is the same law destabilized by a heading-bias
//! oscillation and a full-throttle override; with the perturbation amplitude
//! at zero and the override off it reduces to the scripted law exactly.

use super::{Controller, ControllerError, ControllerInput};
use crate::kinematics::{wrap_angle, ControlCommand, RobotLimits};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptedGains {
    /// Proportional gain on the heading error, 1/s.
    pub heading_gain: f64,
    /// Gain mapping cross-track distance to a desired approach angle, 1/m.
    pub cross_gain: f64,
    /// Speed reduction per radian of heading error.
    pub slowdown: f64,
    /// Lower bound on the commanded speed as a fraction of `v_max`.
    pub min_speed_frac: f64,
}

impl Default for ScriptedGains {
    fn default() -> Self {
        Self {
            heading_gain: 2.5,
            cross_gain: 1.5,
            slowdown: 1.6,
            min_speed_frac: 0.3,
        }
    }
}

/// The feedback law as a pure function of the path-relative state, exposed so
/// a policy table can be generated from it.
pub fn scripted_law(gains: &ScriptedGains, limits: &RobotLimits, d: f64, theta_rel: f64) -> (f64, f64) {
    let theta_desired = -(gains.cross_gain * d).atan();
    let error = wrap_angle(theta_desired - theta_rel);
    let omega = (gains.heading_gain * error).clamp(-limits.omega_max, limits.omega_max);
    let scale = (1.0 - gains.slowdown * error.abs()).max(gains.min_speed_frac);
    (limits.v_max * scale, omega)
}

#[derive(Debug, Clone)]
pub struct ScriptedTracker {
    gains: ScriptedGains,
    limits: RobotLimits,
}

impl ScriptedTracker {
    pub fn new(gains: ScriptedGains, limits: RobotLimits) -> Self {
        Self { gains, limits }
    }
}

impl Controller for ScriptedTracker {
    fn compute(&self, input: &ControllerInput<'_>) -> Result<ControlCommand, ControllerError> {
        input.check_finite()?;
        if input.at_path_end() {
            return Ok(ControlCommand::stop());
        }
        let (v, omega) = scripted_law(
            &self.gains,
            &self.limits,
            input.frame.d_signed,
            input.frame.theta_rel,
        );
        Ok(ControlCommand::clamped(v, omega, &self.limits))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnsafePerturbation {
    /// Amplitude of the heading-bias oscillation in radians.
    pub bias_amplitude: f64,
    /// Period of the oscillation in seconds.
    pub bias_period: f64,
    /// Ignore the scripted slowdown and always command full speed.
    pub full_throttle: bool,
}

impl Default for UnsafePerturbation {
    fn default() -> Self {
        Self {
            bias_amplitude: 1.2,
            bias_period: 9.0,
            full_throttle: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct UnsafeTracker {
    gains: ScriptedGains,
    perturbation: UnsafePerturbation,
    limits: RobotLimits,
}

impl UnsafeTracker {
    pub fn new(
        gains: ScriptedGains,
        perturbation: UnsafePerturbation,
        limits: RobotLimits,
    ) -> Self {
        Self {
            gains,
            perturbation,
            limits,
        }
    }
}

impl Controller for UnsafeTracker {
    fn compute(&self, input: &ControllerInput<'_>) -> Result<ControlCommand, ControllerError> {
        input.check_finite()?;
        if input.at_path_end() {
            return Ok(ControlCommand::stop());
        }
        let bias = self.perturbation.bias_amplitude
            * (std::f64::consts::TAU * input.time / self.perturbation.bias_period).sin();
        let (v, omega) = scripted_law(
            &self.gains,
            &self.limits,
            input.frame.d_signed,
            wrap_angle(input.frame.theta_rel + bias),
        );
        let v = if self.perturbation.full_throttle {
            self.limits.v_max
        } else {
            v
        };
        Ok(ControlCommand::clamped(v, omega, &self.limits))
    }
}
