//! Simplex-architecture path tracking for a differential drive robot.
//!
//! The crate pairs an unverified high-performance controller with a
//! pure-pursuit high-assurance controller under a switching decision module.
//! The switch condition comes from a simulation-based region-of-attraction
//! sweep of the pure-pursuit loop, restricted by the corridor safety bound,
//! shrunk by the one-control-period motion margin, and gated on the way back
//! by a worst-case dwell time.
//!
//! Module map:
//! - [`kinematics`]: unicycle model, fixed-step RK4 integration, exact-arc oracle
//! - [`path`]: waypoint polylines, projection, lookahead geometry, track generators
//! - [`controllers`]: the controller trait, pure pursuit, scripted stand-in policies
//! - [`reachability`]: the grid sweep and safe-set construction
//! - [`simplex`]: the decision module and the composed controller
//! - [`harness`]: seeded benchmark runs, metrics, report export
//!
//! The sweep and the benchmark are data-parallel; parallel execution is
//! provided by rayon behind the `parallel` feature (enabled by default) with
//! a sequential fallback that produces bit-identical results.

pub mod config;
pub mod controllers;
pub mod exec;
pub mod harness;
pub mod kinematics;
pub mod path;
pub mod reachability;
pub mod simplex;

pub use exec::Parallelism;
pub use kinematics::{ControlCommand, Pose, RobotLimits};
pub use path::{Path, PathFrame};
