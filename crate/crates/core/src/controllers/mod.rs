//! Path tracking controllers.
//!
//! Every controller implements [`Controller`], the common signature shared by
//! the high-performance and high-assurance roles. Outputs always satisfy the
//! command invariants (clamped where necessary); controllers emit a stop
//! command once the projected arclength reaches the final waypoint.

mod policy_file;
mod pure_pursuit;
mod scripted;

pub use policy_file::{policy_table_from_law, PolicyFileController, PolicyFileError};
pub use pure_pursuit::{PurePursuit, PurePursuitParams};
pub use scripted::{ScriptedGains, ScriptedTracker, UnsafePerturbation, UnsafeTracker};

use thiserror::Error;

use crate::kinematics::{ControlCommand, KinematicsError, Pose};
use crate::path::{Path, PathFrame};

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("non-finite controller input: {0}")]
    NonFiniteInput(&'static str),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// Everything a controller sees at one control tick. The frame must be the
/// projection of the pose onto the path; the caller maintains that.
#[derive(Debug, Clone, Copy)]
pub struct ControllerInput<'a> {
    pub pose: Pose,
    pub frame: PathFrame,
    pub path: &'a Path,
    pub time: f64,
}

impl ControllerInput<'_> {
    fn check_finite(&self) -> Result<(), ControllerError> {
        if !self.time.is_finite() {
            return Err(ControllerError::NonFiniteInput("time"));
        }
        if !self.frame.d_signed.is_finite() || !self.frame.theta_rel.is_finite() {
            return Err(ControllerError::NonFiniteInput("frame"));
        }
        Ok(())
    }

    /// Whether the projected arclength has reached the final waypoint.
    fn at_path_end(&self) -> bool {
        self.frame.arclength >= self.path.total_length() - 1e-9
    }
}

/// Common signature for both Simplex roles.
pub trait Controller: Send + Sync {
    fn compute(&self, input: &ControllerInput<'_>) -> Result<ControlCommand, ControllerError>;
}

impl<C: Controller + ?Sized> Controller for &C {
    fn compute(&self, input: &ControllerInput<'_>) -> Result<ControlCommand, ControllerError> {
        (**self).compute(input)
    }
}

impl<C: Controller + ?Sized> Controller for Box<C> {
    fn compute(&self, input: &ControllerInput<'_>) -> Result<ControlCommand, ControllerError> {
        (**self).compute(input)
    }
}
