//! Pure pursuit, the high-assurance controller.
//!
//! Steers along the circular arc through the robot and the lookahead point:
//! `kappa = 2 * y_l / L_eff^2` with `y_l` the lookahead point's lateral
//! offset in the robot frame and `L_eff` the actual robot-to-target distance
//! (equal to the lookahead radius except in the end-of-path fallback).

use super::{Controller, ControllerError, ControllerInput};
use crate::kinematics::{ControlCommand, KinematicsError, RobotLimits};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PurePursuitParams {
    /// Lookahead distance in meters.
    pub lookahead: f64,
    /// Constant commanded linear velocity in m/s.
    pub v_cmd: f64,
}

impl Default for PurePursuitParams {
    fn default() -> Self {
        Self {
            lookahead: 1.0,
            v_cmd: 0.5,
        }
    }
}

impl PurePursuitParams {
    pub fn validate(&self, limits: &RobotLimits) -> Result<(), KinematicsError> {
        if !self.lookahead.is_finite() || self.lookahead <= 0.0 {
            return Err(KinematicsError::OutOfBounds {
                name: "lookahead",
                value: self.lookahead,
                bound: "> 0".to_string(),
            });
        }
        if !self.v_cmd.is_finite() || self.v_cmd <= 0.0 || self.v_cmd > limits.v_max {
            return Err(KinematicsError::OutOfBounds {
                name: "v_cmd",
                value: self.v_cmd,
                bound: format!("(0, {}]", limits.v_max),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PurePursuit {
    params: PurePursuitParams,
    limits: RobotLimits,
}

impl PurePursuit {
    pub fn new(params: PurePursuitParams, limits: RobotLimits) -> Result<Self, KinematicsError> {
        limits.validate()?;
        params.validate(&limits)?;
        Ok(Self { params, limits })
    }

    pub fn params(&self) -> &PurePursuitParams {
        &self.params
    }
}

impl Controller for PurePursuit {
    fn compute(&self, input: &ControllerInput<'_>) -> Result<ControlCommand, ControllerError> {
        input.check_finite()?;
        if input.at_path_end() {
            return Ok(ControlCommand::stop());
        }

        let target = input.path.lookahead_point(&input.frame, self.params.lookahead);
        let delta = target - input.frame.position;
        let l_eff_sq = delta.norm_sq();
        if l_eff_sq < 1e-18 {
            return Ok(ControlCommand::stop());
        }

        let theta = input.pose.theta();
        let y_lateral = -theta.sin() * delta.x + theta.cos() * delta.y;
        let curvature = 2.0 * y_lateral / l_eff_sq;
        Ok(ControlCommand::clamped(
            self.params.v_cmd,
            self.params.v_cmd * curvature,
            &self.limits,
        ))
    }
}
