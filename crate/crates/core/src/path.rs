//! Waypoint polyline geometry.
//!
//! A [`Path`] is an ordered polyline with precomputed cumulative arclength.
//! [`Path::project`] maps a world position to the closest point on the
//! polyline and [`Path::frame`] extends that with the heading-relative angle,
//! giving the `(d, Θ)` coordinates everything downstream works in.
//! Projection ties at corner waypoints resolve to the later segment so that
//! progress along the path never jumps backward.

use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kinematics::{wrap_angle, Pose};

/// Consecutive waypoints closer than this are considered duplicates.
pub const MIN_SEGMENT_LENGTH: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("a path needs at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("waypoints {0} and {1} are closer than {MIN_SEGMENT_LENGTH} m")]
    DuplicateWaypoint(usize, usize),
    #[error("non-finite coordinate at waypoint {0}")]
    NonFinite(usize),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// 2D point / vector in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(&self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(&self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(*self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

/// The robot's path-relative state.
///
/// `d_signed` is positive when the robot is left of the travel direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathFrame {
    /// Signed cross-track distance in meters.
    pub d_signed: f64,
    /// Heading relative to the projected segment's tangent, in `(-pi, pi]`.
    pub theta_rel: f64,
    /// Index of the segment the position projects onto.
    pub segment_index: usize,
    /// Progress along the path in meters.
    pub arclength: f64,
    /// Offset along the projected segment in meters.
    pub r_p: f64,
    /// World position the frame was computed for.
    pub position: Vec2,
}

/// Immutable waypoint polyline with precomputed cumulative arclength.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    waypoints: Vec<Vec2>,
    cumulative: Vec<f64>,
}

impl Path {
    pub fn new(waypoints: Vec<Vec2>) -> Result<Self, PathError> {
        if waypoints.len() < 2 {
            return Err(PathError::TooFewWaypoints(waypoints.len()));
        }
        for (i, w) in waypoints.iter().enumerate() {
            if !w.is_finite() {
                return Err(PathError::NonFinite(i));
            }
        }
        let mut cumulative = Vec::with_capacity(waypoints.len());
        cumulative.push(0.0);
        for i in 1..waypoints.len() {
            let len = (waypoints[i] - waypoints[i - 1]).norm();
            if len <= MIN_SEGMENT_LENGTH {
                return Err(PathError::DuplicateWaypoint(i - 1, i));
            }
            cumulative.push(cumulative[i - 1] + len);
        }
        Ok(Self {
            waypoints,
            cumulative,
        })
    }

    pub fn waypoints(&self) -> &[Vec2] {
        &self.waypoints
    }

    pub fn segment_count(&self) -> usize {
        self.waypoints.len() - 1
    }

    pub fn total_length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn final_waypoint(&self) -> Vec2 {
        *self.waypoints.last().unwrap()
    }

    pub fn segment_length(&self, index: usize) -> f64 {
        self.cumulative[index + 1] - self.cumulative[index]
    }

    /// Unit tangent of segment `index`.
    pub fn tangent(&self, index: usize) -> Vec2 {
        let d = self.waypoints[index + 1] - self.waypoints[index];
        d * (1.0 / d.norm())
    }

    /// Tangent heading of segment `index` in radians.
    pub fn tangent_angle(&self, index: usize) -> f64 {
        let d = self.waypoints[index + 1] - self.waypoints[index];
        d.y.atan2(d.x)
    }

    /// Point at offset `t` meters along segment `index`.
    pub fn point_on_segment(&self, index: usize, t: f64) -> Vec2 {
        self.waypoints[index] + self.tangent(index) * t
    }

    /// Project a world position onto the polyline.
    ///
    /// The returned frame has `theta_rel = 0`; use [`Path::frame`] when the
    /// heading is available. Equidistant candidates resolve to the later
    /// segment.
    pub fn project(&self, position: Vec2) -> PathFrame {
        self.project_segments(position, 0, self.segment_count())
    }

    /// Project considering only segments whose arclength range intersects
    /// `[center - back, center + ahead]`.
    ///
    /// Closed or self-overlapping tracks (the square circuit repeats its
    /// geometry every lap) make the global nearest point ambiguous; a
    /// progress-centered window keeps the frame on the lap being driven.
    pub fn project_window(
        &self,
        position: Vec2,
        center_arclength: f64,
        back: f64,
        ahead: f64,
    ) -> PathFrame {
        let lo = center_arclength - back;
        let hi = center_arclength + ahead;
        let first = self
            .cumulative
            .partition_point(|s| *s < lo)
            .saturating_sub(1)
            .min(self.segment_count() - 1);
        let last = self
            .cumulative
            .partition_point(|s| *s <= hi)
            .clamp(first + 1, self.segment_count().max(first + 1));
        self.project_segments(position, first, last)
    }

    fn project_segments(&self, position: Vec2, first: usize, last: usize) -> PathFrame {
        debug_assert!(first < last);
        let mut best_dist_sq = f64::INFINITY;
        let mut best_index = first;
        let mut best_t = 0.0f64;
        let mut best_point = self.waypoints[first];

        for i in first..last {
            let start = self.waypoints[i];
            let len = self.segment_length(i);
            let dir = self.tangent(i);
            let t = (position - start).dot(dir).clamp(0.0, len);
            // Snap clamped endpoints to the stored waypoints so corner
            // candidates from both adjacent segments compare exactly equal.
            let point = if t <= 0.0 {
                start
            } else if t >= len {
                self.waypoints[i + 1]
            } else {
                start + dir * t
            };
            let dist_sq = (position - point).norm_sq();
            if dist_sq <= best_dist_sq {
                best_dist_sq = dist_sq;
                best_index = i;
                best_t = t;
                best_point = point;
            }
        }

        let to_robot = position - best_point;
        let side = self.tangent(best_index).cross(to_robot);
        let dist = best_dist_sq.sqrt();
        PathFrame {
            d_signed: if side < 0.0 { -dist } else { dist },
            theta_rel: 0.0,
            segment_index: best_index,
            arclength: self.cumulative[best_index] + best_t,
            r_p: best_t,
            position,
        }
    }

    /// Project a pose: [`Path::project`] plus the heading-relative angle.
    pub fn frame(&self, pose: &Pose) -> PathFrame {
        let mut frame = self.project(Vec2::new(pose.x, pose.y));
        frame.theta_rel = wrap_angle(pose.theta() - self.tangent_angle(frame.segment_index));
        frame
    }

    /// Windowed variant of [`Path::frame`].
    pub fn frame_window(
        &self,
        pose: &Pose,
        center_arclength: f64,
        back: f64,
        ahead: f64,
    ) -> PathFrame {
        let mut frame =
            self.project_window(Vec2::new(pose.x, pose.y), center_arclength, back, ahead);
        frame.theta_rel = wrap_angle(pose.theta() - self.tangent_angle(frame.segment_index));
        frame
    }

    /// First intersection of the polyline with the circle of radius
    /// `lookahead` around the frame's position, at arclength strictly greater
    /// than the frame's. Falls back to the final waypoint when no
    /// intersection exists ahead.
    pub fn lookahead_point(&self, frame: &PathFrame, lookahead: f64) -> Vec2 {
        debug_assert!(lookahead > 0.0);
        let center = frame.position;
        for i in frame.segment_index..self.segment_count() {
            let start = self.waypoints[i];
            let dir = self.tangent(i);
            let len = self.segment_length(i);
            let offset = start - center;
            // |offset + t*dir|^2 = L^2 with |dir| = 1
            let b = 2.0 * offset.dot(dir);
            let c = offset.norm_sq() - lookahead * lookahead;
            let disc = b * b - 4.0 * c;
            if disc < 0.0 {
                continue;
            }
            let sqrt_disc = disc.sqrt();
            for t in [(-b - sqrt_disc) / 2.0, (-b + sqrt_disc) / 2.0] {
                if (0.0..=len).contains(&t) && self.cumulative[i] + t > frame.arclength {
                    return start + dir * t;
                }
            }
        }
        self.final_waypoint()
    }

    /// Serialize as `x,y` lines (meters, no header).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for w in &self.waypoints {
            writeln!(out, "{},{}", w.x, w.y).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, PathError> {
        let mut waypoints = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (x, y) = line.split_once(',').ok_or_else(|| PathError::Parse {
                line: i + 1,
                reason: "expected `x,y`".to_string(),
            })?;
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| PathError::Parse {
                    line: i + 1,
                    reason: e.to_string(),
                })
            };
            waypoints.push(Vec2::new(parse(x)?, parse(y)?));
        }
        Self::new(waypoints)
    }

    pub fn save_csv(&self, path: &std::path::Path) -> Result<(), PathError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load_csv(path: &std::path::Path) -> Result<Self, PathError> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Deterministic random path: starts at the origin heading +x, each
/// subsequent waypoint extends by `segment_length` at a heading perturbed by
/// a uniform turn in `[-turn_limit, +turn_limit]`.
pub fn generate_random_path(
    seed: u64,
    n_waypoints: usize,
    turn_limit: f64,
    segment_length: f64,
) -> Result<Path, PathError> {
    if n_waypoints < 2 {
        return Err(PathError::TooFewWaypoints(n_waypoints));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut waypoints = Vec::with_capacity(n_waypoints);
    let mut position = Vec2::new(0.0, 0.0);
    let mut heading = 0.0f64;
    waypoints.push(position);
    for _ in 1..n_waypoints {
        heading += rng.random_range(-turn_limit..=turn_limit);
        position = position + Vec2::new(heading.cos(), heading.sin()) * segment_length;
        waypoints.push(position);
    }
    Path::new(waypoints)
}

/// Square track layout: corner lengths, lap count, and waypoint spacing.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SquareTrackParams {
    /// Sideways segment length in meters.
    pub width: f64,
    /// Downwards segment length in meters.
    pub height: f64,
    /// Number of concatenated laps.
    pub laps: usize,
    /// Waypoint spacing along segments in meters.
    pub spacing: f64,
}

impl Default for SquareTrackParams {
    fn default() -> Self {
        Self {
            width: 10.0,
            height: 7.5,
            laps: 2,
            spacing: 0.5,
        }
    }
}

/// Closed rectangular circuit, two laps of 10 + 7.5 + 10 + 7.5 = 35 m at
/// defaults for 70 m total, densified at 0.5 m spacing.
pub fn square_track() -> Path {
    square_track_with(&SquareTrackParams::default())
}

pub fn square_track_with(params: &SquareTrackParams) -> Path {
    let w = params.width;
    let h = params.height;
    let corners = [
        Vec2::new(0.0, 0.0),
        Vec2::new(w, 0.0),
        Vec2::new(w, -h),
        Vec2::new(0.0, -h),
    ];
    let mut waypoints = Vec::new();
    waypoints.push(corners[0]);
    for _ in 0..params.laps {
        for c in 0..4 {
            let from = corners[c];
            let to = corners[(c + 1) % 4];
            let leg = to - from;
            let len = leg.norm();
            let dir = leg * (1.0 / len);
            let steps = (len / params.spacing).round() as usize;
            for k in 1..steps {
                waypoints.push(from + dir * (k as f64 * params.spacing));
            }
            waypoints.push(to);
        }
    }
    Path::new(waypoints).expect("square track parameters produce a valid path")
}

/// Cosine track shape: `y = amplitude * cos(2*pi*x/wavelength)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CosineTrackParams {
    pub amplitude: f64,
    pub wavelength: f64,
    /// Extent along x in meters.
    pub span: f64,
    /// Sample spacing along x in meters.
    pub spacing: f64,
}

impl Default for CosineTrackParams {
    fn default() -> Self {
        Self {
            amplitude: 2.0,
            wavelength: 20.0,
            span: 60.0,
            spacing: 0.5,
        }
    }
}

/// Curved track `y = A cos(kx)` sampled at 0.5 m spacing over 60 m.
pub fn cosine_track() -> Path {
    cosine_track_with(&CosineTrackParams::default())
}

pub fn cosine_track_with(params: &CosineTrackParams) -> Path {
    let k = std::f64::consts::TAU / params.wavelength;
    let steps = (params.span / params.spacing).round() as usize;
    let waypoints = (0..=steps)
        .map(|i| {
            let x = i as f64 * params.spacing;
            Vec2::new(x, params.amplitude * (k * x).cos())
        })
        .collect();
    Path::new(waypoints).expect("cosine track parameters produce a valid path")
}
