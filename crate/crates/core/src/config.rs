//! Application configuration: every tunable in one serializable struct.
//!
//! Defaults reproduce the analysis setup (1 m/s and 0.5 rad/s limits,
//! 0.05 s control period, 1 m lookahead at 0.5 m/s for the high-assurance
//! controller, the 21 x 63 x 9 sweep grid over 100 random paths, a 1 m
//! corridor bound, 30-run benchmarks). A JSON file overrides fields
//! selectively; unknown keys are rejected.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::controllers::{PurePursuitParams, ScriptedGains, UnsafePerturbation};
use crate::kinematics::RobotLimits;
use crate::path::{CosineTrackParams, SquareTrackParams};
use crate::reachability::SweepConfig;
use crate::simplex::DecisionPolicy;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid config field {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

/// Benchmark protocol parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchParams {
    /// Seeded repetitions per (controller, track) pair.
    pub n_runs: usize,
    /// Base seed for the per-run initial perturbations.
    pub seed_base: u64,
    /// Hard cap on simulated time per run, seconds.
    pub max_sim_time: f64,
    /// Initial cross-track offset is uniform in +/- this bound, meters.
    pub perturb_d: f64,
    /// Initial heading offset is uniform in +/- this bound, radians.
    pub perturb_theta: f64,
}

impl Default for BenchParams {
    fn default() -> Self {
        Self {
            n_runs: 30,
            seed_base: 7,
            max_sim_time: 400.0,
            perturb_d: 0.1,
            perturb_theta: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub robot: RobotLimits,
    pub pure_pursuit: PurePursuitParams,
    pub scripted: ScriptedGains,
    pub unsafe_perturbation: UnsafePerturbation,
    pub sweep: SweepConfig,
    /// Corridor half-width the controller must never leave, meters.
    pub safety_bound: f64,
    pub switching: DecisionPolicy,
    pub square_track: SquareTrackParams,
    pub cosine_track: CosineTrackParams,
    pub bench: BenchParams,
    /// Safe-set artifact consumed by `run` and `bench`.
    pub safe_set_file: PathBuf,
    pub output_dir: PathBuf,
    /// Worker count: 0 = all cores, 1 = sequential.
    pub workers: usize,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            robot: RobotLimits::default(),
            pure_pursuit: PurePursuitParams::default(),
            scripted: ScriptedGains::default(),
            unsafe_perturbation: UnsafePerturbation::default(),
            sweep: SweepConfig::default(),
            safety_bound: 1.0,
            switching: DecisionPolicy::default(),
            square_track: SquareTrackParams::default(),
            cosine_track: CosineTrackParams::default(),
            bench: BenchParams::default(),
            safe_set_file: PathBuf::from("data/reference_safe_set.sst"),
            output_dir: PathBuf::from("out"),
            workers: 0,
        }
    }
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: AppConfig =
            serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
                path: path.to_path_buf(),
                source,
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.robot
            .validate()
            .map_err(|e| ConfigError::Invalid {
                field: "robot",
                reason: e.to_string(),
            })?;
        self.pure_pursuit
            .validate(&self.robot)
            .map_err(|e| ConfigError::Invalid {
                field: "pure_pursuit",
                reason: e.to_string(),
            })?;
        self.sweep.validate().map_err(|e| ConfigError::Invalid {
            field: "sweep",
            reason: e.to_string(),
        })?;
        if !self.safety_bound.is_finite() || self.safety_bound <= 0.0 {
            return Err(ConfigError::Invalid {
                field: "safety_bound",
                reason: format!("must be finite and > 0, got {}", self.safety_bound),
            });
        }
        if self.bench.n_runs == 0 {
            return Err(ConfigError::Invalid {
                field: "bench.n_runs",
                reason: "must be >= 1".to_string(),
            });
        }
        for (field, v) in [
            ("bench.max_sim_time", self.bench.max_sim_time),
            ("bench.perturb_d", self.bench.perturb_d),
            ("bench.perturb_theta", self.bench.perturb_theta),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(ConfigError::Invalid {
                    field,
                    reason: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        if self.bench.max_sim_time <= 0.0 {
            return Err(ConfigError::Invalid {
                field: "bench.max_sim_time",
                reason: "must be > 0".to_string(),
            });
        }
        Ok(())
    }
}
