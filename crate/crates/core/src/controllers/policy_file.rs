//! Grid-policy file loader: plugs an externally trained policy in as a
//! controller without any training machinery in this repository.
//!
//! File format: plain-text CSV, one `d_lo,d_hi,theta_lo,theta_hi,v,omega`
//! row per bin. The bins must tile the `(d, theta)` state box exactly; the
//! loader rejects gaps, overlaps, non-monotone edges, and commands outside
//! the robot limits. Lookup is nearest-bin with queries outside the box
//! clamped to the border bins.

use thiserror::Error;

use super::{Controller, ControllerError, ControllerInput};
use crate::kinematics::{ControlCommand, RobotLimits};

#[derive(Debug, Error)]
pub enum PolicyFileError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: bin edges not monotone ({lo} >= {hi})")]
    NonMonotoneBin { line: usize, lo: f64, hi: f64 },
    #[error("line {line}: command ({v}, {omega}) violates robot limits")]
    CommandOutOfRange { line: usize, v: f64, omega: f64 },
    #[error("bins do not tile the state box: {0}")]
    BadTiling(String),
    #[error("policy file is empty")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy)]
struct PolicyRow {
    d_lo: f64,
    d_hi: f64,
    theta_lo: f64,
    theta_hi: f64,
    v: f64,
    omega: f64,
}

/// Nearest-bin lookup policy over the `(d, theta)` box.
#[derive(Debug, Clone)]
pub struct PolicyFileController {
    d_edges: Vec<f64>,
    theta_edges: Vec<f64>,
    /// Row-major over (d bin, theta bin).
    commands: Vec<(f64, f64)>,
    limits: RobotLimits,
}

fn parse_rows(text: &str, limits: &RobotLimits) -> Result<Vec<(usize, PolicyRow)>, PolicyFileError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(PolicyFileError::Parse {
                line: i + 1,
                reason: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let mut values = [0.0f64; 6];
        for (j, field) in fields.iter().enumerate() {
            values[j] = field.trim().parse().map_err(|e| PolicyFileError::Parse {
                line: i + 1,
                reason: format!("field {}: {e}", j + 1),
            })?;
            if !values[j].is_finite() {
                return Err(PolicyFileError::Parse {
                    line: i + 1,
                    reason: format!("field {} is not finite", j + 1),
                });
            }
        }
        let row = PolicyRow {
            d_lo: values[0],
            d_hi: values[1],
            theta_lo: values[2],
            theta_hi: values[3],
            v: values[4],
            omega: values[5],
        };
        if row.d_lo >= row.d_hi {
            return Err(PolicyFileError::NonMonotoneBin {
                line: i + 1,
                lo: row.d_lo,
                hi: row.d_hi,
            });
        }
        if row.theta_lo >= row.theta_hi {
            return Err(PolicyFileError::NonMonotoneBin {
                line: i + 1,
                lo: row.theta_lo,
                hi: row.theta_hi,
            });
        }
        if !(0.0..=limits.v_max).contains(&row.v) || row.omega.abs() > limits.omega_max {
            return Err(PolicyFileError::CommandOutOfRange {
                line: i + 1,
                v: row.v,
                omega: row.omega,
            });
        }
        rows.push((i + 1, row));
    }
    if rows.is_empty() {
        return Err(PolicyFileError::Empty);
    }
    Ok(rows)
}

/// Collect the sorted distinct interval edges along one axis and require the
/// intervals to chain without gaps or overlaps.
fn axis_edges(intervals: &[(f64, f64)]) -> Result<Vec<f64>, PolicyFileError> {
    let mut sorted: Vec<(f64, f64)> = intervals.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    sorted.dedup();
    let mut edges = vec![sorted[0].0];
    for (lo, hi) in &sorted {
        if *lo != *edges.last().unwrap() {
            return Err(PolicyFileError::BadTiling(format!(
                "interval [{lo}, {hi}] does not start at the previous edge {}",
                edges.last().unwrap()
            )));
        }
        edges.push(*hi);
    }
    Ok(edges)
}

impl PolicyFileController {
    pub fn from_str(text: &str, limits: &RobotLimits) -> Result<Self, PolicyFileError> {
        let rows = parse_rows(text, limits)?;

        let d_intervals: Vec<(f64, f64)> = rows.iter().map(|(_, r)| (r.d_lo, r.d_hi)).collect();
        let theta_intervals: Vec<(f64, f64)> =
            rows.iter().map(|(_, r)| (r.theta_lo, r.theta_hi)).collect();
        let d_edges = axis_edges(&d_intervals)?;
        let theta_edges = axis_edges(&theta_intervals)?;
        let n_d = d_edges.len() - 1;
        let n_theta = theta_edges.len() - 1;
        if rows.len() != n_d * n_theta {
            return Err(PolicyFileError::BadTiling(format!(
                "{} rows cannot tile a {n_d} x {n_theta} grid",
                rows.len()
            )));
        }

        let mut commands = vec![None; n_d * n_theta];
        for (line, row) in &rows {
            let i = d_edges
                .iter()
                .position(|e| *e == row.d_lo)
                .expect("edge collected from this row");
            let j = theta_edges
                .iter()
                .position(|e| *e == row.theta_lo)
                .expect("edge collected from this row");
            if i >= n_d || d_edges[i + 1] != row.d_hi {
                return Err(PolicyFileError::BadTiling(format!(
                    "line {line}: d interval [{}, {}] is not a grid cell",
                    row.d_lo, row.d_hi
                )));
            }
            if j >= n_theta || theta_edges[j + 1] != row.theta_hi {
                return Err(PolicyFileError::BadTiling(format!(
                    "line {line}: theta interval [{}, {}] is not a grid cell",
                    row.theta_lo, row.theta_hi
                )));
            }
            let slot = &mut commands[i * n_theta + j];
            if slot.is_some() {
                return Err(PolicyFileError::BadTiling(format!(
                    "line {line}: duplicate bin"
                )));
            }
            *slot = Some((row.v, row.omega));
        }
        let commands = commands
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| PolicyFileError::BadTiling("missing bins".to_string()))?;

        Ok(Self {
            d_edges,
            theta_edges,
            commands,
            limits: *limits,
        })
    }

    pub fn load(path: &std::path::Path, limits: &RobotLimits) -> Result<Self, PolicyFileError> {
        Self::from_str(&std::fs::read_to_string(path)?, limits)
    }

    fn bin_index(edges: &[f64], value: f64) -> usize {
        let n = edges.len() - 1;
        if value <= edges[0] {
            return 0;
        }
        if value >= edges[n] {
            return n - 1;
        }
        // last edge not above the value
        match edges.binary_search_by(|e| e.total_cmp(&value)) {
            Ok(i) => i.min(n - 1),
            Err(i) => i - 1,
        }
    }

    pub fn lookup(&self, d: f64, theta: f64) -> (f64, f64) {
        let i = Self::bin_index(&self.d_edges, d);
        let j = Self::bin_index(&self.theta_edges, theta);
        self.commands[i * (self.theta_edges.len() - 1) + j]
    }
}

impl Controller for PolicyFileController {
    fn compute(&self, input: &ControllerInput<'_>) -> Result<ControlCommand, ControllerError> {
        input.check_finite()?;
        if input.at_path_end() {
            return Ok(ControlCommand::stop());
        }
        let (v, omega) = self.lookup(input.frame.d_signed, input.frame.theta_rel);
        Ok(ControlCommand::clamped(v, omega, &self.limits))
    }
}

/// Render a policy file that samples `law` at the centers of a regular
/// `n_d x n_theta` grid over the given box.
pub fn policy_table_from_law(
    law: impl Fn(f64, f64) -> (f64, f64),
    d_range: (f64, f64),
    theta_range: (f64, f64),
    n_d: usize,
    n_theta: usize,
) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let d_step = (d_range.1 - d_range.0) / n_d as f64;
    let theta_step = (theta_range.1 - theta_range.0) / n_theta as f64;
    for i in 0..n_d {
        let d_lo = d_range.0 + i as f64 * d_step;
        let d_hi = if i + 1 == n_d {
            d_range.1
        } else {
            d_range.0 + (i + 1) as f64 * d_step
        };
        for j in 0..n_theta {
            let theta_lo = theta_range.0 + j as f64 * theta_step;
            let theta_hi = if j + 1 == n_theta {
                theta_range.1
            } else {
                theta_range.0 + (j + 1) as f64 * theta_step
            };
            let (v, omega) = law(0.5 * (d_lo + d_hi), 0.5 * (theta_lo + theta_hi));
            writeln!(out, "{d_lo},{d_hi},{theta_lo},{theta_hi},{v},{omega}").unwrap();
        }
    }
    out
}
