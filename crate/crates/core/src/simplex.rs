//! The decision module and the composed Simplex controller.
//!
//! The high-performance controller runs while the state sits inside the
//! shrunk safe set; on a membership failure the high-assurance controller
//! takes over within the same control tick. Switching back additionally
//! requires the dwell time to have elapsed since the high-assurance episode
//! began.
//!
//! Two switch conditions are provided. `Instantaneous` checks the robot's
//! current frame, relying on the motion-margin shrink to cover one tick of
//! motion. `Predictive` (the default) additionally rolls the
//! high-performance loop forward for a configurable number of control
//! periods and requires every previewed state to stay inside the shrunk
//! set. The first preview step uses the same integrator as the plant, so a
//! run in high-performance mode can never leave the shrunk set unnoticed —
//! even across corner waypoints, where the path tangent (and with it the
//! relative heading) jumps discontinuously and no state-space margin can
//! cover the jump. The preview horizon buys the saturated fallback
//! controller the room it needs to pre-turn into sharp corners.

use thiserror::Error;

use crate::controllers::{Controller, ControllerError, ControllerInput};
use crate::kinematics::{step, ControlCommand, RobotLimits};
use crate::path::PathFrame;
use crate::reachability::SafeSet;

#[derive(Debug, Error)]
pub enum SimplexError {
    #[error("time ran backward: {t} after {last}")]
    TimeRanBackward { t: f64, last: f64 },
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

/// Arclength window for progress-tracked projection in closed-loop runs.
/// Far smaller than one lap of any track, far larger than one tick of
/// motion or a corner-cut arclength jump.
pub const PROGRESS_WINDOW_BACK: f64 = 2.0;
pub const PROGRESS_WINDOW_AHEAD: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    HighPerformance,
    HighAssurance,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::HighPerformance => write!(f, "hp"),
            Mode::HighAssurance => write!(f, "ha"),
        }
    }
}

/// Which switch condition the composed controller evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwitchingStrategy {
    Instantaneous,
    #[default]
    Predictive,
}

/// Strategy plus the preview length used by the predictive condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecisionPolicy {
    pub strategy: SwitchingStrategy,
    /// Control periods the high-performance rollout is previewed for
    /// (2 s at the 0.05 s default period). Horizon 1 reproduces the
    /// one-step predicted-state check.
    pub horizon_steps: usize,
}

impl Default for DecisionPolicy {
    fn default() -> Self {
        Self {
            strategy: SwitchingStrategy::Predictive,
            horizon_steps: 40,
        }
    }
}

impl DecisionPolicy {
    pub fn instantaneous() -> Self {
        Self {
            strategy: SwitchingStrategy::Instantaneous,
            horizon_steps: 0,
        }
    }

    pub fn predictive(horizon_steps: usize) -> Self {
        Self {
            strategy: SwitchingStrategy::Predictive,
            horizon_steps: horizon_steps.max(1),
        }
    }
}

/// Decision-module bookkeeping for one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchState {
    pub mode: Mode,
    /// Most recent entry into high-assurance mode.
    pub t_entered_ha: Option<f64>,
    pub switch_count_to_ha: u32,
    pub switch_count_to_hp: u32,
    pub time_in_ha: f64,
    last_t: Option<f64>,
}

impl SwitchState {
    pub fn new() -> Self {
        Self {
            mode: Mode::HighPerformance,
            t_entered_ha: None,
            switch_count_to_ha: 0,
            switch_count_to_hp: 0,
            time_in_ha: 0.0,
            last_t: None,
        }
    }
}

impl Default for SwitchState {
    fn default() -> Self {
        Self::new()
    }
}

fn decide_with_membership(
    member: bool,
    t: f64,
    state: &SwitchState,
    set: &SafeSet,
) -> Result<(Mode, SwitchState), SimplexError> {
    let mut next = *state;
    if let Some(last) = state.last_t {
        if t < last {
            return Err(SimplexError::TimeRanBackward { t, last });
        }
        if state.mode == Mode::HighAssurance {
            next.time_in_ha += t - last;
        }
    }

    match state.last_t {
        // initialization pre-check: no switch is counted
        None => {
            if member {
                next.mode = Mode::HighPerformance;
            } else {
                next.mode = Mode::HighAssurance;
                next.t_entered_ha = Some(t);
            }
        }
        Some(_) => match state.mode {
            Mode::HighPerformance => {
                if !member {
                    next.mode = Mode::HighAssurance;
                    next.t_entered_ha = Some(t);
                    next.switch_count_to_ha += 1;
                }
            }
            Mode::HighAssurance => {
                let dwell_over = match state.t_entered_ha {
                    Some(t_ha) => t >= t_ha + set.dwell_time,
                    None => true,
                };
                if member && dwell_over {
                    next.mode = Mode::HighPerformance;
                    next.switch_count_to_hp += 1;
                }
            }
        },
    }

    next.last_t = Some(t);
    Ok((next.mode, next))
}

/// The decision function: high-performance mode iff the frame is inside the
/// shrunk set and the dwell time since the last high-assurance entry has
/// elapsed. Pure in `(frame, t, state, set)`; time must not run backward
/// within a run.
pub fn decide(
    frame: &PathFrame,
    t: f64,
    state: &SwitchState,
    set: &SafeSet,
) -> Result<(Mode, SwitchState), SimplexError> {
    decide_with_membership(
        set.membership(frame.d_signed, frame.theta_rel),
        t,
        state,
        set,
    )
}

/// Roll the high-performance loop forward and test whether every previewed
/// state stays in the shrunk set. Returns the verdict and the command for
/// the current tick (reused for actuation when high-performance mode is
/// kept). Controller or integration failures inside the preview count as
/// leaving the set: the high-performance controller is untrusted and a
/// failure simply keeps the high-assurance controller in charge.
fn preview_stays_inside(
    input: &ControllerInput<'_>,
    hp: &dyn Controller,
    set: &SafeSet,
    limits: &RobotLimits,
    horizon_steps: usize,
) -> (bool, Option<ControlCommand>) {
    let mut pose = input.pose;
    let mut frame = input.frame;
    let mut first_command = None;
    for k in 0..horizon_steps.max(1) {
        if frame.arclength >= input.path.total_length() - 0.25 {
            break;
        }
        let preview_input = ControllerInput {
            pose,
            frame,
            path: input.path,
            time: input.time + k as f64 * limits.control_period,
        };
        let cmd = match hp.compute(&preview_input) {
            Ok(cmd) => cmd,
            Err(_) => return (false, first_command),
        };
        if k == 0 {
            first_command = Some(cmd);
        }
        pose = match step(&pose, &cmd, limits.control_period) {
            Ok(next) => next,
            Err(_) => return (false, first_command),
        };
        frame = input.path.frame_window(
            &pose,
            frame.arclength,
            PROGRESS_WINDOW_BACK,
            PROGRESS_WINDOW_AHEAD,
        );
        if !set.membership(frame.d_signed, frame.theta_rel) {
            return (false, first_command);
        }
    }
    (true, first_command)
}

/// Run the decision module, then delegate to the selected controller.
pub fn simplex_compute(
    input: &ControllerInput<'_>,
    hp: &dyn Controller,
    ha: &dyn Controller,
    set: &SafeSet,
    state: &SwitchState,
    policy: DecisionPolicy,
    limits: &RobotLimits,
) -> Result<(ControlCommand, Mode, SwitchState), SimplexError> {
    let current = set.membership(input.frame.d_signed, input.frame.theta_rel);
    let mut hp_command = None;
    let member = match policy.strategy {
        SwitchingStrategy::Instantaneous => current,
        SwitchingStrategy::Predictive => {
            current && {
                let (inside, first) =
                    preview_stays_inside(input, hp, set, limits, policy.horizon_steps);
                hp_command = first;
                inside
            }
        }
    };

    let (mode, next) = decide_with_membership(member, input.time, state, set)?;
    let command = match mode {
        Mode::HighPerformance => match hp_command {
            Some(cmd) => cmd,
            None => hp.compute(input)?,
        },
        Mode::HighAssurance => ha.compute(input)?,
    };
    Ok((command, mode, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::{PurePursuit, PurePursuitParams};
    use crate::kinematics::Pose;
    use crate::path::{Path, Vec2};
    use crate::reachability::{build_safe_set, GridRange, SafeSet, SweepConfig, SweepRecord};
    use proptest::prelude::*;

    /// 5x5 grid over d, theta in [-0.4, 0.4]: center 3x3 block converges
    /// tightly (shrunk), the rim converges with larger deviation (retained
    /// only), worst shrunk convergence time 12.45 s.
    fn test_set() -> SafeSet {
        let config = SweepConfig {
            d0: GridRange::from_step(-0.4, 0.4, 0.2),
            theta0: GridRange::from_step(-0.4, 0.4, 0.2),
            rp: GridRange::from_step(0.0, 0.0, 0.1),
            n_paths: 1,
            ..SweepConfig::default()
        };
        let mut records = Vec::new();
        for i in 0..5usize {
            for j in 0..5usize {
                let rim = i == 0 || j == 0 || i == 4 || j == 4;
                let (max_d, t_conv) = if rim { (0.5, 3.0) } else { (0.2, 12.45) };
                records.push(SweepRecord {
                    d0: config.d0.point(i),
                    theta0: config.theta0.point(j),
                    rp: 0.0,
                    path_id: 0,
                    converged: true,
                    max_d,
                    t_conv: Some(t_conv),
                });
            }
        }
        let set = build_safe_set(&config, &records, 1.0, &RobotLimits::default()).unwrap();
        assert_eq!(set.dwell_time, 12.45);
        assert!(set.membership(0.0, 0.0));
        assert!(!set.membership(0.4, 0.0));
        assert!(set.membership_unshrunk(0.4, 0.0));
        set
    }

    fn frame_at(d: f64, theta: f64) -> PathFrame {
        PathFrame {
            d_signed: d,
            theta_rel: theta,
            segment_index: 0,
            arclength: 0.0,
            r_p: 0.0,
            position: Vec2::new(0.0, d),
        }
    }

    #[test]
    fn stays_in_hp_on_path() {
        let set = test_set();
        let state = SwitchState::new();
        let (mode, state) = decide(&frame_at(0.0, 0.0), 0.0, &state, &set).unwrap();
        assert_eq!(mode, Mode::HighPerformance);
        let (mode, _) = decide(&frame_at(0.05, 0.01), 0.05, &state, &set).unwrap();
        assert_eq!(mode, Mode::HighPerformance);
    }

    #[test]
    fn membership_failure_switches_within_the_same_tick() {
        let set = test_set();
        let state = SwitchState::new();
        let (_, state) = decide(&frame_at(0.0, 0.0), 0.0, &state, &set).unwrap();
        // the non-converging boundary state of the analysis grid
        let (mode, state) = decide(&frame_at(0.5, 0.0792), 0.05, &state, &set).unwrap();
        assert_eq!(mode, Mode::HighAssurance);
        assert_eq!(state.switch_count_to_ha, 1);
        assert_eq!(state.t_entered_ha, Some(0.05));
    }

    #[test]
    fn dwell_time_gates_the_switch_back() {
        let set = test_set();
        let mut state = SwitchState::new();
        // enter HA at t = 10
        (_, state) = decide(&frame_at(0.0, 0.0), 9.95, &state, &set).unwrap();
        (_, state) = decide(&frame_at(0.5, 0.0), 10.0, &state, &set).unwrap();
        assert_eq!(state.mode, Mode::HighAssurance);

        // back inside the set well before the dwell expires: stays HA
        let (mode, next) = decide(&frame_at(0.0, 0.0), 20.0, &state, &set).unwrap();
        assert_eq!(mode, Mode::HighAssurance);

        // exactly at t_ha + dwell: returns to HP
        let (mode, next2) = decide(&frame_at(0.0, 0.0), 22.45, &next, &set).unwrap();
        assert_eq!(mode, Mode::HighPerformance);
        assert_eq!(next2.switch_count_to_hp, 1);
        assert!((next2.time_in_ha - 12.45).abs() < 1e-9);
    }

    #[test]
    fn initial_precheck_starts_in_ha_without_counting_a_switch() {
        let set = test_set();
        let (mode, state) = decide(&frame_at(0.5, 0.0), 0.0, &SwitchState::new(), &set).unwrap();
        assert_eq!(mode, Mode::HighAssurance);
        assert_eq!(state.switch_count_to_ha, 0);
        assert_eq!(state.t_entered_ha, Some(0.0));
    }

    #[test]
    fn rejects_time_running_backward() {
        let set = test_set();
        let (_, state) = decide(&frame_at(0.0, 0.0), 5.0, &SwitchState::new(), &set).unwrap();
        assert!(matches!(
            decide(&frame_at(0.0, 0.0), 4.0, &state, &set),
            Err(SimplexError::TimeRanBackward { .. })
        ));
    }

    #[test]
    fn degenerate_composition_equals_the_lone_controller() {
        let set = test_set();
        let limits = RobotLimits::default();
        let pp = PurePursuit::new(PurePursuitParams::default(), limits).unwrap();
        let path = Path::new(vec![Vec2::new(0.0, 0.0), Vec2::new(30.0, 0.0)]).unwrap();

        let mut state = SwitchState::new();
        for (k, (x, y, theta)) in [
            (0.0, 0.0, 0.0),
            (1.0, 0.2, 0.1),
            (2.0, 0.5, 0.3), // outside the set: forces HA
            (3.0, 0.1, 0.0),
        ]
        .iter()
        .enumerate()
        {
            let pose = Pose::new(*x, *y, *theta).unwrap();
            let input = ControllerInput {
                pose,
                frame: path.frame(&pose),
                path: &path,
                time: k as f64 * 0.05,
            };
            let (cmd, _, next) = simplex_compute(
                &input,
                &pp,
                &pp,
                &set,
                &state,
                DecisionPolicy::default(),
                &limits,
            )
            .unwrap();
            let reference = pp.compute(&input).unwrap();
            assert_eq!(cmd.v().to_bits(), reference.v().to_bits());
            assert_eq!(cmd.omega().to_bits(), reference.omega().to_bits());
            state = next;
        }
    }

    #[test]
    fn replaying_a_decision_log_reproduces_the_mode_sequence() {
        let set = test_set();
        let frames: Vec<PathFrame> = (0..200)
            .map(|k| {
                let phase = (k as f64) * 0.37;
                frame_at(0.45 * phase.sin(), 0.3 * (phase * 0.7).cos())
            })
            .collect();

        let run = |frames: &[PathFrame]| -> Vec<Mode> {
            let mut state = SwitchState::new();
            let mut modes = Vec::new();
            for (k, frame) in frames.iter().enumerate() {
                let (mode, next) = decide(frame, k as f64 * 0.05, &state, &set).unwrap();
                modes.push(mode);
                state = next;
            }
            modes
        };
        assert_eq!(run(&frames), run(&frames));
    }

    proptest! {
        /// Over arbitrary membership sequences: counters are non-decreasing,
        /// no switch back before the dwell expires, and a membership failure
        /// in HP mode lands in HA on the same tick.
        #[test]
        fn switching_invariants_hold_for_arbitrary_membership_sequences(
            pattern in proptest::collection::vec(any::<bool>(), 1..300)
        ) {
            let set = test_set();
            let dt = 0.05;
            let mut state = SwitchState::new();
            let mut prev = state;
            for (k, member) in pattern.iter().enumerate() {
                let frame = if *member {
                    frame_at(0.0, 0.0)
                } else {
                    frame_at(0.5, 0.0)
                };
                let t = k as f64 * dt;
                let (mode, next) = decide(&frame, t, &state, &set).unwrap();

                prop_assert!(next.switch_count_to_ha >= prev.switch_count_to_ha);
                prop_assert!(next.switch_count_to_hp >= prev.switch_count_to_hp);
                prop_assert!(next.time_in_ha >= prev.time_in_ha);

                if !*member {
                    prop_assert_eq!(mode, Mode::HighAssurance);
                }
                if prev.mode == Mode::HighAssurance && mode == Mode::HighPerformance {
                    let t_ha = prev.t_entered_ha.expect("HA mode stamps its entry");
                    prop_assert!(t >= t_ha + set.dwell_time);
                }
                prev = next;
                state = next;
            }
        }
    }
}
