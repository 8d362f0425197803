//! Simulation-based region-of-attraction approximation.
//!
//! [`run_sweep`] closes the loop between the kinematic model and the
//! high-assurance controller from every initial state on a grid over
//! (initial distance `d0`, initial relative heading `theta0`, segment offset
//! `rp`), crossed with a family of seeded random paths. Each simulation
//! records whether the convergence criterion was met, the worst deviation,
//! and the convergence time. [`safe_set`] turns the records into the
//! switching set used by the decision module.

mod safe_set;

pub use safe_set::{
    aggregate_cells, build_safe_set, load_safe_set, save_safe_set, CellAggregate, SafeSet,
    SafeSetError,
};

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::controllers::{Controller, ControllerError, ControllerInput};
use crate::exec::{map_indexed, Parallelism};
use crate::kinematics::{step, KinematicsError, Pose};
use crate::path::{generate_random_path, Path, PathError, Vec2};

/// States farther than this from the path abort the simulation as
/// non-converged.
pub const RUNAWAY_DISTANCE: f64 = 10.0;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep config: {0}")]
    InvalidConfig(String),
    #[error("path generation failed: {0}")]
    Path(#[from] PathError),
    #[error("controller failed at cell (d0={d0}, theta0={theta0}, rp={rp}, path {path_id}): {source}")]
    Controller {
        d0: f64,
        theta0: f64,
        rp: f64,
        path_id: u32,
        source: ControllerError,
    },
    #[error("integration failed at cell (d0={d0}, theta0={theta0}, rp={rp}, path {path_id}): {source}")]
    Kinematics {
        d0: f64,
        theta0: f64,
        rp: f64,
        path_id: u32,
        source: KinematicsError,
    },
    #[error("records file line {line}: {reason}")]
    RecordsParse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Inclusive arange-style grid: points `min + k*step` for `k in 0..count`
/// with `count = floor((max - min)/step) + 1`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridRange {
    pub min: f64,
    pub step: f64,
    pub count: usize,
}

impl GridRange {
    pub fn from_step(min: f64, max: f64, step: f64) -> Self {
        let count = ((max - min) / step + 1e-9).floor() as usize + 1;
        Self { min, step, count }
    }

    pub fn point(&self, index: usize) -> f64 {
        self.min + index as f64 * self.step
    }

    pub fn max(&self) -> f64 {
        self.point(self.count - 1)
    }

    /// Index of the cell centered nearest to `value`; `None` outside the
    /// covered box `[min - step/2, max + step/2]`.
    pub fn cell_of(&self, value: f64) -> Option<usize> {
        if !value.is_finite() {
            return None;
        }
        let rel = (value - self.min) / self.step;
        let idx = rel.round();
        if idx < 0.0 || idx as usize >= self.count {
            return None;
        }
        Some(idx as usize)
    }

    pub fn validate(&self, name: &str) -> Result<(), SweepError> {
        if !self.min.is_finite() || !self.step.is_finite() {
            return Err(SweepError::InvalidConfig(format!("{name}: non-finite")));
        }
        if self.step <= 0.0 {
            return Err(SweepError::InvalidConfig(format!(
                "{name}: step must be > 0, got {}",
                self.step
            )));
        }
        if self.count == 0 {
            return Err(SweepError::InvalidConfig(format!("{name}: empty grid")));
        }
        Ok(())
    }
}

/// Full specification of the reachability sweep.
///
/// The defaults are the 21 x 63 x 9 grid over 100 random paths: 11907
/// initial states and 1,190,700 simulations.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Initial cross-track distance grid, meters.
    pub d0: GridRange,
    /// Initial relative heading grid, radians.
    pub theta0: GridRange,
    /// Initial offset along the first segment, meters.
    pub rp: GridRange,
    /// Simulated horizon per initial state, seconds.
    pub horizon: f64,
    /// Integration step, seconds.
    pub step_size: f64,
    /// Number of random paths.
    pub n_paths: usize,
    /// Waypoints per random path.
    pub n_waypoints: usize,
    /// Largest per-segment heading change of the random paths, radians.
    pub turn_limit: f64,
    /// Segment length of the random paths, meters.
    pub segment_length: f64,
    /// Convergence distance threshold, meters.
    pub conv_dist: f64,
    /// Time the threshold must hold continuously, seconds.
    pub conv_hold: f64,
    /// Seed for the path family.
    pub path_seed: u64,
}

impl Default for SweepConfig {
    // the heading bounds are the analysis grid's literal endpoints, not pi/2
    #[allow(clippy::approx_constant)]
    fn default() -> Self {
        Self {
            d0: GridRange::from_step(-1.0, 1.0, 0.1),
            theta0: GridRange::from_step(-1.5708, 1.5708, 0.05),
            rp: GridRange::from_step(0.0, 0.4, 0.05),
            horizon: 15.0,
            step_size: 0.05,
            n_paths: 100,
            n_waypoints: 50,
            turn_limit: 0.5,
            segment_length: 1.0,
            conv_dist: 0.1,
            conv_hold: 1.5,
            path_seed: 0,
        }
    }
}

impl SweepConfig {
    /// Coarse preset that exercises every code path in seconds.
    #[allow(clippy::approx_constant)]
    pub fn quick() -> Self {
        Self {
            d0: GridRange::from_step(-1.0, 1.0, 0.2),
            theta0: GridRange::from_step(-1.5708, 1.5708, 0.2),
            rp: GridRange::from_step(0.0, 0.4, 0.1),
            n_paths: 10,
            ..Self::default()
        }
    }

    pub fn grid_cardinality(&self) -> usize {
        self.d0.count * self.theta0.count * self.rp.count
    }

    pub fn total_records(&self) -> usize {
        self.grid_cardinality() * self.n_paths
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.step_size).round() as usize
    }

    /// Samples the convergence condition must hold consecutively.
    fn hold_samples(&self) -> usize {
        (self.conv_hold / self.step_size).round() as usize + 1
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        self.d0.validate("d0")?;
        self.theta0.validate("theta0")?;
        self.rp.validate("rp")?;
        for (name, v) in [
            ("horizon", self.horizon),
            ("step_size", self.step_size),
            ("conv_dist", self.conv_dist),
            ("conv_hold", self.conv_hold),
            ("turn_limit_plus_one", self.turn_limit + 1.0),
            ("segment_length", self.segment_length),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(SweepError::InvalidConfig(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if self.turn_limit < 0.0 {
            return Err(SweepError::InvalidConfig(
                "turn_limit must be >= 0".to_string(),
            ));
        }
        let ratio = self.horizon / self.step_size;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(SweepError::InvalidConfig(format!(
                "step_size {} does not divide horizon {}",
                self.step_size, self.horizon
            )));
        }
        if self.conv_hold >= self.horizon {
            return Err(SweepError::InvalidConfig(format!(
                "conv_hold {} must be below horizon {}",
                self.conv_hold, self.horizon
            )));
        }
        if self.n_paths == 0 {
            return Err(SweepError::InvalidConfig("n_paths must be >= 1".to_string()));
        }
        if self.n_waypoints < 2 {
            return Err(SweepError::InvalidConfig(
                "n_waypoints must be >= 2".to_string(),
            ));
        }
        Ok(())
    }

    /// The seeded path family the sweep runs against.
    pub fn generate_paths(&self) -> Result<Vec<Path>, PathError> {
        (0..self.n_paths)
            .map(|i| {
                generate_random_path(
                    mix_seed(self.path_seed, i as u64),
                    self.n_waypoints,
                    self.turn_limit,
                    self.segment_length,
                )
            })
            .collect()
    }
}

/// splitmix64; decorrelates per-path seeds from the family seed.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Outcome of one closed-loop simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub d0: f64,
    pub theta0: f64,
    pub rp: f64,
    pub path_id: u32,
    pub converged: bool,
    /// Maximum |d| observed over the horizon, meters.
    pub max_d: f64,
    /// Start of the first qualifying hold window, seconds.
    pub t_conv: Option<f64>,
}

/// Initial pose for a grid state on a path: `rp` meters along the first
/// segment, offset `d0` along the left normal, heading `theta0` off the
/// segment tangent.
pub fn initial_pose(path: &Path, d0: f64, theta0: f64, rp: f64) -> Pose {
    let on_path = path.point_on_segment(0, rp);
    let heading = path.tangent_angle(0);
    let normal = Vec2::new(-heading.sin(), heading.cos());
    let position = on_path + normal * d0;
    Pose::new(position.x, position.y, heading + theta0).expect("finite initial placement")
}

fn simulate_cell(
    config: &SweepConfig,
    path: &Path,
    controller: &dyn Controller,
    d0: f64,
    theta0: f64,
    rp: f64,
    path_id: u32,
) -> Result<SweepRecord, SweepError> {
    let mut pose = initial_pose(path, d0, theta0, rp);
    let steps = config.steps();
    let hold_needed = config.hold_samples();

    let mut max_d = 0.0f64;
    let mut hold = 0usize;
    let mut t_conv = None;
    let mut runaway = false;

    for k in 0..=steps {
        let frame = path.frame(&pose);
        let d = frame.d_signed.abs();
        max_d = max_d.max(d);
        if d > RUNAWAY_DISTANCE {
            runaway = true;
            break;
        }
        if d <= config.conv_dist {
            hold += 1;
            if hold >= hold_needed && t_conv.is_none() {
                t_conv = Some((k + 1 - hold_needed) as f64 * config.step_size);
            }
        } else {
            hold = 0;
        }
        if k == steps {
            break;
        }
        let input = ControllerInput {
            pose,
            frame,
            path,
            time: k as f64 * config.step_size,
        };
        let cmd = controller
            .compute(&input)
            .map_err(|source| SweepError::Controller {
                d0,
                theta0,
                rp,
                path_id,
                source,
            })?;
        pose = step(&pose, &cmd, config.step_size).map_err(|source| SweepError::Kinematics {
            d0,
            theta0,
            rp,
            path_id,
            source,
        })?;
    }

    if runaway {
        t_conv = None;
    }
    Ok(SweepRecord {
        d0,
        theta0,
        rp,
        path_id,
        converged: t_conv.is_some(),
        max_d,
        t_conv,
    })
}

/// Run the full sweep: one record per (grid state x path), in a fixed
/// enumeration order that is independent of the execution mode.
pub fn run_sweep(
    config: &SweepConfig,
    controller: &(dyn Controller + Sync),
    parallelism: Parallelism,
) -> Result<Vec<SweepRecord>, SweepError> {
    config.validate()?;
    let paths = config.generate_paths()?;
    let total = config.total_records();
    let n_paths = config.n_paths;
    let n_rp = config.rp.count;
    let n_theta = config.theta0.count;

    let results = map_indexed(total, parallelism, |job| {
        let path_id = job % n_paths;
        let cell = job / n_paths;
        let k_rp = cell % n_rp;
        let j_theta = (cell / n_rp) % n_theta;
        let i_d = cell / (n_rp * n_theta);
        simulate_cell(
            config,
            &paths[path_id],
            controller,
            config.d0.point(i_d),
            config.theta0.point(j_theta),
            config.rp.point(k_rp),
            path_id as u32,
        )
    });
    results.into_iter().collect()
}

/// Write records as CSV (`d0,theta0,rp,path_id,converged,max_d,t_conv`, one
/// header line, `t_conv` empty for non-converged records).
pub fn save_records_csv(path: &std::path::Path, records: &[SweepRecord]) -> Result<(), SweepError> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "d0,theta0,rp,path_id,converged,max_d,t_conv")?;
    for r in records {
        match r.t_conv {
            Some(t) => writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.d0, r.theta0, r.rp, r.path_id, r.converged as u8, r.max_d, t
            )?,
            None => writeln!(
                out,
                "{},{},{},{},{},{},",
                r.d0, r.theta0, r.rp, r.path_id, r.converged as u8, r.max_d
            )?,
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_records_csv(path: &std::path::Path) -> Result<Vec<SweepRecord>, SweepError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if i == 0 || line.is_empty() {
            continue;
        }
        let parse_err = |reason: String| SweepError::RecordsParse {
            line: i + 1,
            reason,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(parse_err(format!("expected 7 fields, got {}", fields.len())));
        }
        let num = |s: &str| -> Result<f64, SweepError> {
            s.parse().map_err(|e| SweepError::RecordsParse {
                line: i + 1,
                reason: format!("{e}"),
            })
        };
        let converged = match fields[4] {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(format!("bad converged flag {other:?}"))),
        };
        let t_conv = if fields[6].is_empty() {
            None
        } else {
            Some(num(fields[6])?)
        };
        if converged != t_conv.is_some() {
            return Err(parse_err("converged flag inconsistent with t_conv".to_string()));
        }
        records.push(SweepRecord {
            d0: num(fields[0])?,
            theta0: num(fields[1])?,
            rp: num(fields[2])?,
            path_id: num(fields[3])? as u32,
            converged,
            max_d: num(fields[5])?,
            t_conv,
        });
    }
    Ok(records)
}
