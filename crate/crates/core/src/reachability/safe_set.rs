//! Safe-set construction from sweep records.
//!
//! A grid cell `(d0, theta0)` belongs to the region of attraction only if
//! every simulation over all segment offsets and paths converged
//! (worst-case aggregation). Cells whose worst deviation reaches the safety
//! bound are removed, the remainder is made convex in grid coordinates, and
//! the shrunk variant drops every cell whose worst deviation exceeds
//! `set_max_d` minus the one-control-period motion bound. The dwell time is
//! the worst convergence time over the shrunk set.

use std::fmt::Write as _;

use thiserror::Error;

use super::{GridRange, SweepConfig, SweepRecord};
use crate::kinematics::RobotLimits;

pub const SAFE_SET_FORMAT_VERSION: &str = "simplex-track-safe-set v1";

#[derive(Debug, Error)]
pub enum SafeSetError {
    #[error("records do not cover the grid: {0}")]
    RecordsCoverage(String),
    #[error("no grid cell survives the worst-case and safety filters; the architecture is unusable")]
    EmptySet,
    #[error("the shrunk set is empty; the margin {0} m leaves no switching region")]
    EmptyShrunkSet(f64),
    #[error("convexification failed: {0}")]
    Convexity(String),
    #[error("unsupported safe-set file version: {0:?}")]
    VersionMismatch(String),
    #[error("safe-set file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("safe-set invariant violated: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Worst-case aggregation of one `(d0, theta0)` cell over all segment
/// offsets and paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellAggregate {
    pub i_d: usize,
    pub j_theta: usize,
    pub d0: f64,
    pub theta0: f64,
    pub n_records: usize,
    pub all_converged: bool,
    pub worst_max_d: f64,
    /// Maximum convergence time; present only when every record converged.
    pub worst_t_conv: Option<f64>,
}

/// Aggregate records per `(d0, theta0)` cell, validating full grid coverage.
pub fn aggregate_cells(
    config: &SweepConfig,
    records: &[SweepRecord],
) -> Result<Vec<CellAggregate>, SafeSetError> {
    let n_d = config.d0.count;
    let n_theta = config.theta0.count;
    let expected = config.rp.count * config.n_paths;

    let mut cells: Vec<CellAggregate> = (0..n_d * n_theta)
        .map(|idx| CellAggregate {
            i_d: idx / n_theta,
            j_theta: idx % n_theta,
            d0: config.d0.point(idx / n_theta),
            theta0: config.theta0.point(idx % n_theta),
            n_records: 0,
            all_converged: true,
            worst_max_d: 0.0,
            worst_t_conv: Some(0.0),
        })
        .collect();

    for r in records {
        let locate = |grid: &GridRange, value: f64, name: &str| -> Result<usize, SafeSetError> {
            let idx = grid.cell_of(value).ok_or_else(|| {
                SafeSetError::RecordsCoverage(format!("{name} = {value} is outside the grid"))
            })?;
            if (value - grid.point(idx)).abs() > grid.step * 0.25 {
                return Err(SafeSetError::RecordsCoverage(format!(
                    "{name} = {value} does not lie on the grid"
                )));
            }
            Ok(idx)
        };
        let i_d = locate(&config.d0, r.d0, "d0")?;
        let j_theta = locate(&config.theta0, r.theta0, "theta0")?;
        locate(&config.rp, r.rp, "rp")?;

        let cell = &mut cells[i_d * n_theta + j_theta];
        cell.n_records += 1;
        cell.worst_max_d = cell.worst_max_d.max(r.max_d);
        match r.t_conv {
            Some(t) if r.converged => {
                cell.worst_t_conv = cell.worst_t_conv.map(|w| w.max(t));
            }
            _ => {
                cell.all_converged = false;
                cell.worst_t_conv = None;
            }
        }
    }

    for cell in &cells {
        if cell.n_records != expected {
            return Err(SafeSetError::RecordsCoverage(format!(
                "cell (d0={}, theta0={}) has {} records, expected {expected}",
                cell.d0, cell.theta0, cell.n_records
            )));
        }
    }
    Ok(cells)
}

// ---------------------------------------------------------------------------
// Convexity in grid coordinates
// ---------------------------------------------------------------------------

/// The decided convexity test: the straight segment between any two retained
/// cell centers, sampled at quarter-cell resolution and rounded to the
/// nearest cell, stays in retained cells.
fn segment_inside(mask: &[bool], n_theta: usize, a: (usize, usize), b: (usize, usize)) -> bool {
    let (ai, aj) = (a.0 as f64, a.1 as f64);
    let (bi, bj) = (b.0 as f64, b.1 as f64);
    let chebyshev = (bi - ai).abs().max((bj - aj).abs());
    let steps = (4.0 * chebyshev).ceil() as usize;
    for s in 0..=steps {
        let u = s as f64 / steps.max(1) as f64;
        let i = (ai + u * (bi - ai)).round() as usize;
        let j = (aj + u * (bj - aj)).round() as usize;
        if !mask[i * n_theta + j] {
            return false;
        }
    }
    true
}

fn retained_indices(mask: &[bool], n_theta: usize) -> Vec<(usize, usize)> {
    mask.iter()
        .enumerate()
        .filter(|(_, m)| **m)
        .map(|(idx, _)| (idx / n_theta, idx % n_theta))
        .collect()
}

pub(crate) fn is_convex(mask: &[bool], n_theta: usize) -> bool {
    let cells = retained_indices(mask, n_theta);
    for (p, a) in cells.iter().enumerate() {
        for b in cells.iter().skip(p + 1) {
            if !segment_inside(mask, n_theta, *a, *b) {
                return false;
            }
        }
    }
    true
}

fn is_boundary(mask: &[bool], n_d: usize, n_theta: usize, i: usize, j: usize) -> bool {
    if i == 0 || j == 0 || i + 1 == n_d || j + 1 == n_theta {
        return true;
    }
    !(mask[(i - 1) * n_theta + j]
        && mask[(i + 1) * n_theta + j]
        && mask[i * n_theta + j - 1]
        && mask[i * n_theta + j + 1])
}

/// Greedy convexification: repeatedly remove the boundary cell that appears
/// as an endpoint of the most violated segments (ties to the lowest index)
/// until the segment test passes.
pub(crate) fn make_convex(
    mask: &mut [bool],
    n_d: usize,
    n_theta: usize,
) -> Result<usize, SafeSetError> {
    let mut removed = 0usize;
    loop {
        let cells = retained_indices(mask, n_theta);
        if cells.is_empty() {
            return Err(SafeSetError::EmptySet);
        }
        let mut scores = vec![0usize; n_d * n_theta];
        let mut violations = 0usize;
        for (p, a) in cells.iter().enumerate() {
            for b in cells.iter().skip(p + 1) {
                if !segment_inside(mask, n_theta, *a, *b) {
                    violations += 1;
                    scores[a.0 * n_theta + a.1] += 1;
                    scores[b.0 * n_theta + b.1] += 1;
                }
            }
        }
        if violations == 0 {
            return Ok(removed);
        }

        let mut best: Option<(usize, usize, usize)> = None;
        for (i, j) in &cells {
            if !is_boundary(mask, n_d, n_theta, *i, *j) {
                continue;
            }
            let score = scores[i * n_theta + j];
            if score == 0 {
                continue;
            }
            let candidate = (score, *i, *j);
            best = match best {
                None => Some(candidate),
                Some((s, bi, bj)) => {
                    if score > s || (score == s && (*i, *j) < (bi, bj)) {
                        Some(candidate)
                    } else {
                        Some((s, bi, bj))
                    }
                }
            };
        }
        let (_, i, j) = best.ok_or_else(|| {
            SafeSetError::Convexity(
                "violated segments remain but no boundary cell is an endpoint".to_string(),
            )
        })?;
        mask[i * n_theta + j] = false;
        removed += 1;
    }
}

// ---------------------------------------------------------------------------
// SafeSet
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafeCell {
    pub worst_max_d: f64,
    pub worst_t_conv: f64,
    /// Whether the cell survives the motion-margin shrink.
    pub shrunk: bool,
}

/// Discretized switching set over `(d, theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeSet {
    pub d0: GridRange,
    pub theta0: GridRange,
    cells: Vec<Option<SafeCell>>,
    pub set_max_d: f64,
    pub shrunk_max_d: f64,
    pub dwell_time: f64,
    pub safety_bound: f64,
    pub path_seed: u64,
}

impl SafeSet {
    pub fn cell(&self, i_d: usize, j_theta: usize) -> Option<&SafeCell> {
        self.cells[i_d * self.theta0.count + j_theta].as_ref()
    }

    pub fn retained_count(&self) -> usize {
        self.cells.iter().flatten().count()
    }

    pub fn shrunk_count(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.shrunk).count()
    }

    pub fn retained_cells(&self) -> impl Iterator<Item = (usize, usize, &SafeCell)> {
        let n_theta = self.theta0.count;
        self.cells
            .iter()
            .enumerate()
            .filter_map(move |(idx, c)| c.as_ref().map(|c| (idx / n_theta, idx % n_theta, c)))
    }

    fn lookup(&self, d: f64, theta: f64) -> Option<&SafeCell> {
        let i = self.d0.cell_of(d)?;
        let j = self.theta0.cell_of(theta)?;
        self.cell(i, j)
    }

    /// Membership in the shrunk set; queries outside the grid box are false.
    pub fn membership(&self, d: f64, theta: f64) -> bool {
        self.lookup(d, theta).map(|c| c.shrunk).unwrap_or(false)
    }

    /// Membership in the unshrunk (retained) set.
    pub fn membership_unshrunk(&self, d: f64, theta: f64) -> bool {
        self.lookup(d, theta).is_some()
    }

    fn retained_mask(&self) -> Vec<bool> {
        self.cells.iter().map(|c| c.is_some()).collect()
    }

    fn validate(&self, limits: &RobotLimits) -> Result<(), SafeSetError> {
        if self.retained_count() == 0 {
            return Err(SafeSetError::EmptySet);
        }
        let recomputed_max = self
            .retained_cells()
            .map(|(_, _, c)| c.worst_max_d)
            .fold(f64::MIN, f64::max);
        if recomputed_max != self.set_max_d {
            return Err(SafeSetError::Validation(format!(
                "set_max_d {} does not match the retained cells' maximum {recomputed_max}",
                self.set_max_d
            )));
        }
        if !self.set_max_d.is_finite() || self.set_max_d >= self.safety_bound {
            return Err(SafeSetError::Validation(format!(
                "set_max_d {} must stay strictly below the safety bound {}",
                self.set_max_d, self.safety_bound
            )));
        }
        let expected_shrunk = self.set_max_d - limits.one_step_motion();
        if self.shrunk_max_d != expected_shrunk {
            return Err(SafeSetError::Validation(format!(
                "shrunk_max_d {} is not set_max_d - one-step motion = {expected_shrunk}",
                self.shrunk_max_d
            )));
        }
        for (_, _, c) in self.retained_cells() {
            if c.shrunk != (c.worst_max_d <= self.shrunk_max_d) {
                return Err(SafeSetError::Validation(
                    "shrunk flags inconsistent with shrunk_max_d".to_string(),
                ));
            }
        }
        let dwell = self
            .retained_cells()
            .filter(|(_, _, c)| c.shrunk)
            .map(|(_, _, c)| c.worst_t_conv)
            .fold(f64::NAN, f64::max);
        if dwell.is_nan() {
            return Err(SafeSetError::EmptyShrunkSet(limits.one_step_motion()));
        }
        if dwell != self.dwell_time {
            return Err(SafeSetError::Validation(format!(
                "dwell_time {} does not match the shrunk set's worst convergence time {dwell}",
                self.dwell_time
            )));
        }
        if !is_convex(&self.retained_mask(), self.theta0.count) {
            return Err(SafeSetError::Validation(
                "retained region is not convex".to_string(),
            ));
        }
        Ok(())
    }
}

/// Build the switching set from a full sweep.
pub fn build_safe_set(
    config: &SweepConfig,
    records: &[SweepRecord],
    safety_bound: f64,
    limits: &RobotLimits,
) -> Result<SafeSet, SafeSetError> {
    if !safety_bound.is_finite() || safety_bound <= 0.0 {
        return Err(SafeSetError::Validation(format!(
            "safety bound must be finite and > 0, got {safety_bound}"
        )));
    }
    let aggregates = aggregate_cells(config, records)?;
    let n_d = config.d0.count;
    let n_theta = config.theta0.count;

    // worst-case rule plus safety: every simulation converged and the worst
    // deviation stays strictly below the bound
    let mut mask: Vec<bool> = aggregates
        .iter()
        .map(|c| c.all_converged && c.worst_max_d < safety_bound)
        .collect();
    if !mask.iter().any(|m| *m) {
        return Err(SafeSetError::EmptySet);
    }
    make_convex(&mut mask, n_d, n_theta)?;

    let set_max_d = aggregates
        .iter()
        .zip(&mask)
        .filter(|(_, m)| **m)
        .map(|(c, _)| c.worst_max_d)
        .fold(f64::MIN, f64::max);
    let shrunk_max_d = set_max_d - limits.one_step_motion();

    let cells: Vec<Option<SafeCell>> = aggregates
        .iter()
        .zip(&mask)
        .map(|(c, m)| {
            m.then(|| SafeCell {
                worst_max_d: c.worst_max_d,
                worst_t_conv: c.worst_t_conv.expect("retained cells converged everywhere"),
                shrunk: c.worst_max_d <= shrunk_max_d,
            })
        })
        .collect();

    let dwell_time = cells
        .iter()
        .flatten()
        .filter(|c| c.shrunk)
        .map(|c| c.worst_t_conv)
        .fold(f64::NAN, f64::max);
    if dwell_time.is_nan() {
        return Err(SafeSetError::EmptyShrunkSet(limits.one_step_motion()));
    }

    let set = SafeSet {
        d0: config.d0,
        theta0: config.theta0,
        cells,
        set_max_d,
        shrunk_max_d,
        dwell_time,
        safety_bound,
        path_seed: config.path_seed,
    };
    set.validate(limits)?;
    Ok(set)
}

// ---------------------------------------------------------------------------
// Versioned plain-text format
// ---------------------------------------------------------------------------

pub fn save_safe_set(set: &SafeSet, path: &std::path::Path) -> Result<(), SafeSetError> {
    let mut out = String::new();
    writeln!(out, "{SAFE_SET_FORMAT_VERSION}").unwrap();
    writeln!(out, "d0 {} {} {}", set.d0.min, set.d0.step, set.d0.count).unwrap();
    writeln!(
        out,
        "theta0 {} {} {}",
        set.theta0.min, set.theta0.step, set.theta0.count
    )
    .unwrap();
    writeln!(out, "safety_bound {}", set.safety_bound).unwrap();
    writeln!(out, "path_seed {}", set.path_seed).unwrap();
    writeln!(out, "set_max_d {}", set.set_max_d).unwrap();
    writeln!(out, "shrunk_max_d {}", set.shrunk_max_d).unwrap();
    writeln!(out, "dwell_time {}", set.dwell_time).unwrap();
    writeln!(out, "cells {}", set.retained_count()).unwrap();
    for (i, j, c) in set.retained_cells() {
        writeln!(out, "{i},{j},{},{}", c.worst_max_d, c.worst_t_conv).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Load and re-validate every invariant (worst-case scalars, shrink
/// arithmetic against the robot limits, dwell, convexity).
pub fn load_safe_set(path: &std::path::Path, limits: &RobotLimits) -> Result<SafeSet, SafeSetError> {
    parse_safe_set(&std::fs::read_to_string(path)?, limits)
}

pub fn parse_safe_set(text: &str, limits: &RobotLimits) -> Result<SafeSet, SafeSetError> {
    let mut lines = text.lines().enumerate();
    let mut next = |expected: &'static str| -> Result<(usize, String), SafeSetError> {
        let (i, line) = lines.next().ok_or(SafeSetError::Parse {
            line: 0,
            reason: format!("missing {expected} line"),
        })?;
        Ok((i + 1, line.trim().to_string()))
    };

    let (_, version) = next("version")?;
    if version != SAFE_SET_FORMAT_VERSION {
        return Err(SafeSetError::VersionMismatch(version));
    }

    fn field<'a>(
        line_no: usize,
        line: &'a str,
        key: &str,
        parts: usize,
    ) -> Result<Vec<&'a str>, SafeSetError> {
        let mut split = line.split_whitespace();
        let head = split.next().unwrap_or_default();
        if head != key {
            return Err(SafeSetError::Parse {
                line: line_no,
                reason: format!("expected {key:?}, found {head:?}"),
            });
        }
        let rest: Vec<&str> = split.collect();
        if rest.len() != parts {
            return Err(SafeSetError::Parse {
                line: line_no,
                reason: format!("{key} expects {parts} values"),
            });
        }
        Ok(rest)
    }

    fn num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T, SafeSetError>
    where
        T::Err: std::fmt::Display,
    {
        s.parse().map_err(|e| SafeSetError::Parse {
            line,
            reason: format!("{e}"),
        })
    }

    let (n, line) = next("d0 grid")?;
    let v = field(n, &line, "d0", 3)?;
    let d0 = GridRange {
        min: num(n, v[0])?,
        step: num(n, v[1])?,
        count: num(n, v[2])?,
    };
    let (n, line) = next("theta0 grid")?;
    let v = field(n, &line, "theta0", 3)?;
    let theta0 = GridRange {
        min: num(n, v[0])?,
        step: num(n, v[1])?,
        count: num(n, v[2])?,
    };
    let (n, line) = next("safety_bound")?;
    let safety_bound: f64 = num(n, field(n, &line, "safety_bound", 1)?[0])?;
    let (n, line) = next("path_seed")?;
    let path_seed: u64 = num(n, field(n, &line, "path_seed", 1)?[0])?;
    let (n, line) = next("set_max_d")?;
    let set_max_d: f64 = num(n, field(n, &line, "set_max_d", 1)?[0])?;
    let (n, line) = next("shrunk_max_d")?;
    let shrunk_max_d: f64 = num(n, field(n, &line, "shrunk_max_d", 1)?[0])?;
    let (n, line) = next("dwell_time")?;
    let dwell_time: f64 = num(n, field(n, &line, "dwell_time", 1)?[0])?;
    let (n, line) = next("cells")?;
    let n_cells: usize = num(n, field(n, &line, "cells", 1)?[0])?;

    d0.validate("d0").map_err(|e| SafeSetError::Parse {
        line: 2,
        reason: e.to_string(),
    })?;
    theta0.validate("theta0").map_err(|e| SafeSetError::Parse {
        line: 3,
        reason: e.to_string(),
    })?;

    let mut cells: Vec<Option<SafeCell>> = vec![None; d0.count * theta0.count];
    let mut seen = 0usize;
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(SafeSetError::Parse {
                line: line_no,
                reason: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let i_d: usize = num(line_no, fields[0])?;
        let j_theta: usize = num(line_no, fields[1])?;
        let worst_max_d: f64 = num(line_no, fields[2])?;
        let worst_t_conv: f64 = num(line_no, fields[3])?;
        if i_d >= d0.count || j_theta >= theta0.count {
            return Err(SafeSetError::Parse {
                line: line_no,
                reason: format!("cell ({i_d}, {j_theta}) outside the grid"),
            });
        }
        let slot = &mut cells[i_d * theta0.count + j_theta];
        if slot.is_some() {
            return Err(SafeSetError::Parse {
                line: line_no,
                reason: format!("duplicate cell ({i_d}, {j_theta})"),
            });
        }
        *slot = Some(SafeCell {
            worst_max_d,
            worst_t_conv,
            shrunk: worst_max_d <= shrunk_max_d,
        });
        seen += 1;
    }
    if seen != n_cells {
        return Err(SafeSetError::Parse {
            line: 0,
            reason: format!("header announces {n_cells} cells, file holds {seen}"),
        });
    }

    let set = SafeSet {
        d0,
        theta0,
        cells,
        set_max_d,
        shrunk_max_d,
        dwell_time,
        safety_bound,
        path_seed,
    };
    set.validate(limits)?;
    Ok(set)
}
