//! Benchmark harness: seeded closed-loop runs, per-run metrics, and
//! report generation over the (controller, track) matrix.
//!
//! Each run perturbs the initial state by a seeded uniform offset so the
//! repetitions are meaningful in a deterministic simulator; the perturbation
//! depends only on the seed base and run index, never on the controller, so
//! wrapped and standalone controllers face identical initial conditions.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::AppConfig;
use crate::controllers::{
    Controller, ControllerError, ControllerInput, PolicyFileController, PolicyFileError,
    PurePursuit, ScriptedTracker, UnsafeTracker,
};
use crate::exec::{map_indexed, Parallelism};
use crate::kinematics::{step, KinematicsError, RobotLimits};
use crate::path::{cosine_track_with, square_track_with, Path};
use crate::reachability::{initial_pose, mix_seed, SafeSet};
use crate::simplex::{simplex_compute, DecisionPolicy, Mode, SimplexError, SwitchState};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown controller id {0:?}; valid: pp, scripted, unsafe, policy, simplex-scripted, simplex-unsafe, simplex-policy")]
    UnknownController(String),
    #[error("unknown track id {0:?}; valid: square, cosine")]
    UnknownTrack(String),
    #[error("controller {0:?} needs a safe set; load or build one first")]
    SafeSetRequired(&'static str),
    #[error("controller {0:?} needs a policy file (--policy-file)")]
    PolicyFileRequired(&'static str),
    #[error(transparent)]
    Policy(#[from] PolicyFileError),
    #[error("run aborted at t={t}: {source}")]
    Controller { t: f64, source: ControllerError },
    #[error("run aborted at t={t}: {source}")]
    NonFiniteState { t: f64, source: KinematicsError },
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Controller and track identifiers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Pp,
    Scripted,
    Unsafe,
    Policy,
    SimplexScripted,
    SimplexUnsafe,
    SimplexPolicy,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 7] = [
        ControllerKind::Pp,
        ControllerKind::Scripted,
        ControllerKind::Unsafe,
        ControllerKind::Policy,
        ControllerKind::SimplexScripted,
        ControllerKind::SimplexUnsafe,
        ControllerKind::SimplexPolicy,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            ControllerKind::Pp => "pp",
            ControllerKind::Scripted => "scripted",
            ControllerKind::Unsafe => "unsafe",
            ControllerKind::Policy => "policy",
            ControllerKind::SimplexScripted => "simplex-scripted",
            ControllerKind::SimplexUnsafe => "simplex-unsafe",
            ControllerKind::SimplexPolicy => "simplex-policy",
        }
    }

    pub fn is_simplex(&self) -> bool {
        matches!(
            self,
            ControllerKind::SimplexScripted
                | ControllerKind::SimplexUnsafe
                | ControllerKind::SimplexPolicy
        )
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| HarnessError::UnknownController(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrackKind {
    Square,
    Cosine,
}

impl TrackKind {
    pub fn id(&self) -> &'static str {
        match self {
            TrackKind::Square => "square",
            TrackKind::Cosine => "cosine",
        }
    }
}

impl std::fmt::Display for TrackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

impl std::str::FromStr for TrackKind {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "square" => Ok(TrackKind::Square),
            "cosine" => Ok(TrackKind::Cosine),
            other => Err(HarnessError::UnknownTrack(other.to_string())),
        }
    }
}

pub fn build_track(config: &AppConfig, kind: TrackKind) -> Path {
    match kind {
        TrackKind::Square => square_track_with(&config.square_track),
        TrackKind::Cosine => cosine_track_with(&config.cosine_track),
    }
}

/// A controller ready to drive a run: either standalone or wrapped by the
/// decision module.
pub enum RunnableController {
    Plain(Box<dyn Controller>),
    Simplex {
        hp: Box<dyn Controller>,
        ha: Box<dyn Controller>,
        set: Arc<SafeSet>,
        policy: DecisionPolicy,
    },
}

pub fn build_controller(
    config: &AppConfig,
    kind: ControllerKind,
    set: Option<Arc<SafeSet>>,
    policy_file: Option<&std::path::Path>,
) -> Result<RunnableController, HarnessError> {
    let limits = config.robot;
    let pp = || {
        PurePursuit::new(config.pure_pursuit, limits)
            .expect("validated config produces a valid pure pursuit")
    };
    let scripted = || ScriptedTracker::new(config.scripted, limits);
    let unsafe_tracker =
        || UnsafeTracker::new(config.scripted, config.unsafe_perturbation, limits);
    let policy = |name| -> Result<PolicyFileController, HarnessError> {
        let path = policy_file.ok_or(HarnessError::PolicyFileRequired(name))?;
        Ok(PolicyFileController::load(path, &limits)?)
    };
    let need_set = |name| set.clone().ok_or(HarnessError::SafeSetRequired(name));

    Ok(match kind {
        ControllerKind::Pp => RunnableController::Plain(Box::new(pp())),
        ControllerKind::Scripted => RunnableController::Plain(Box::new(scripted())),
        ControllerKind::Unsafe => RunnableController::Plain(Box::new(unsafe_tracker())),
        ControllerKind::Policy => RunnableController::Plain(Box::new(policy("policy")?)),
        ControllerKind::SimplexScripted => RunnableController::Simplex {
            hp: Box::new(scripted()),
            ha: Box::new(pp()),
            set: need_set("simplex-scripted")?,
            policy: config.switching,
        },
        ControllerKind::SimplexUnsafe => RunnableController::Simplex {
            hp: Box::new(unsafe_tracker()),
            ha: Box::new(pp()),
            set: need_set("simplex-unsafe")?,
            policy: config.switching,
        },
        ControllerKind::SimplexPolicy => RunnableController::Simplex {
            hp: Box::new(policy("simplex-policy")?),
            ha: Box::new(pp()),
            set: need_set("simplex-policy")?,
            policy: config.switching,
        },
    })
}

// ---------------------------------------------------------------------------
// Single runs
// ---------------------------------------------------------------------------

/// One logged control tick. `d_signed` and `theta_rel` come from the
/// progress-tracked frame the controllers and the decision module see;
/// `d_path` is the unsigned distance to the nearest point of the whole
/// polyline, the safety quantity the metrics aggregate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickLog {
    pub t: f64,
    pub mode: Mode,
    pub d_signed: f64,
    pub theta_rel: f64,
    pub v: f64,
    pub omega: f64,
    pub d_path: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunMetrics {
    /// Time-average of |d| over ticks, meters.
    pub mean_d: f64,
    /// Worst |d| over the run, meters.
    pub max_d: f64,
    /// Time-average commanded speed, m/s.
    pub mean_v: f64,
    pub completion: bool,
    pub switches_to_ha: u32,
    pub fraction_time_ha: f64,
}

#[derive(Debug, Clone)]
pub struct SimulatedRun {
    pub ticks: Vec<TickLog>,
    pub metrics: RunMetrics,
    pub final_switch_state: SwitchState,
}

/// Closed-loop simulation at the control period until path completion
/// (projected arclength within 0.25 m of the total length) or the time cap.
pub fn simulate_run(
    controller: &RunnableController,
    path: &Path,
    limits: &RobotLimits,
    max_sim_time: f64,
    initial_offset: (f64, f64),
) -> Result<SimulatedRun, HarnessError> {
    let dt = limits.control_period;
    let max_ticks = (max_sim_time / dt).ceil() as usize;
    let mut pose = initial_pose(path, initial_offset.0, initial_offset.1, 0.0);
    let mut switch_state = SwitchState::new();
    let mut ticks: Vec<TickLog> = Vec::new();
    let mut completion = false;
    // lap progress; the windowed frame keeps closed circuits unambiguous
    let mut progress = 0.0f64;

    for k in 0..max_ticks {
        let t = k as f64 * dt;
        let frame = path.frame_window(
            &pose,
            progress,
            crate::simplex::PROGRESS_WINDOW_BACK,
            crate::simplex::PROGRESS_WINDOW_AHEAD,
        );
        progress = frame.arclength;
        if frame.arclength >= path.total_length() - 0.25 {
            completion = true;
            break;
        }
        let input = ControllerInput {
            pose,
            frame,
            path,
            time: t,
        };
        let (cmd, mode) = match controller {
            RunnableController::Plain(c) => {
                let cmd = c
                    .compute(&input)
                    .map_err(|source| HarnessError::Controller { t, source })?;
                (cmd, Mode::HighPerformance)
            }
            RunnableController::Simplex {
                hp,
                ha,
                set,
                policy,
            } => {
                let (cmd, mode, next) =
                    simplex_compute(&input, hp, ha, set, &switch_state, *policy, limits)?;
                switch_state = next;
                (cmd, mode)
            }
        };
        ticks.push(TickLog {
            t,
            mode,
            d_signed: frame.d_signed,
            theta_rel: frame.theta_rel,
            v: cmd.v(),
            omega: cmd.omega(),
            d_path: path.project(frame.position).d_signed.abs(),
        });
        pose = step(&pose, &cmd, dt)
            .map_err(|source| HarnessError::NonFiniteState { t, source })?;
    }

    let n = ticks.len().max(1) as f64;
    let metrics = RunMetrics {
        mean_d: ticks.iter().map(|l| l.d_path).sum::<f64>() / n,
        max_d: ticks.iter().map(|l| l.d_path).fold(0.0f64, f64::max),
        mean_v: ticks.iter().map(|l| l.v).sum::<f64>() / n,
        completion,
        switches_to_ha: switch_state.switch_count_to_ha,
        fraction_time_ha: ticks
            .iter()
            .filter(|l| l.mode == Mode::HighAssurance)
            .count() as f64
            / n,
    };
    Ok(SimulatedRun {
        ticks,
        metrics,
        final_switch_state: switch_state,
    })
}

/// Seeded initial perturbation for run `run_index`: independent of the
/// controller and track by construction.
pub fn run_perturbation(bench: &crate::config::BenchParams, run_index: usize) -> (u64, (f64, f64)) {
    let seed = mix_seed(bench.seed_base, run_index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d0 = rng.random_range(-bench.perturb_d..=bench.perturb_d);
    let theta0 = rng.random_range(-bench.perturb_theta..=bench.perturb_theta);
    (seed, (d0, theta0))
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

/// One (controller, track) cell of the benchmark protocol.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunConfig {
    pub controller: ControllerKind,
    pub track: TrackKind,
    pub n_runs: usize,
    pub seed_base: u64,
    pub max_sim_time: f64,
    pub perturb_d: f64,
    pub perturb_theta: f64,
}

impl RunConfig {
    pub fn from_app(config: &AppConfig, controller: ControllerKind, track: TrackKind) -> Self {
        Self {
            controller,
            track,
            n_runs: config.bench.n_runs,
            seed_base: config.bench.seed_base,
            max_sim_time: config.bench.max_sim_time,
            perturb_d: config.bench.perturb_d,
            perturb_theta: config.bench.perturb_theta,
        }
    }
}

/// The default evaluation matrix: five controllers on both tracks.
pub fn default_suite(config: &AppConfig) -> Vec<RunConfig> {
    let controllers = [
        ControllerKind::Pp,
        ControllerKind::Scripted,
        ControllerKind::Unsafe,
        ControllerKind::SimplexScripted,
        ControllerKind::SimplexUnsafe,
    ];
    let tracks = [TrackKind::Cosine, TrackKind::Square];
    controllers
        .iter()
        .flat_map(|c| tracks.iter().map(|t| RunConfig::from_app(config, *c, *t)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunRecord {
    pub controller: String,
    pub track: String,
    pub run_index: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: RunMetrics,
}

/// Aggregated row: means over runs except `max_d`, which is the worst case
/// over all runs of the cell.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReportRow {
    pub controller: String,
    pub track: String,
    pub mean_d: f64,
    pub max_d: f64,
    pub mean_v: f64,
    pub switches_to_ha: f64,
    pub fraction_time_ha: f64,
    pub n_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct BenchReport {
    pub rows: Vec<ReportRow>,
    pub runs: Vec<RunRecord>,
}

/// Run every configured cell. Runs execute independently (parallel when
/// requested); the reduction is sequential in (config, run) order so the
/// report bytes never depend on worker count.
pub fn benchmark(
    suite: &[RunConfig],
    config: &AppConfig,
    set: Option<Arc<SafeSet>>,
    policy_file: Option<&std::path::Path>,
    parallelism: Parallelism,
) -> Result<BenchReport, HarnessError> {
    Ok(benchmark_detailed(suite, config, set, policy_file, parallelism)?.0)
}

/// [`benchmark`] keeping the full tick logs, one entry per (config, run) in
/// suite order, for invariant checks over the logged trajectories.
pub fn benchmark_detailed(
    suite: &[RunConfig],
    config: &AppConfig,
    set: Option<Arc<SafeSet>>,
    policy_file: Option<&std::path::Path>,
    parallelism: Parallelism,
) -> Result<(BenchReport, Vec<SimulatedRun>), HarnessError> {
    let jobs: Vec<(usize, usize)> = suite
        .iter()
        .enumerate()
        .flat_map(|(ci, rc)| (0..rc.n_runs).map(move |ri| (ci, ri)))
        .collect();

    let outcomes = map_indexed(jobs.len(), parallelism, |idx| {
        let (ci, ri) = jobs[idx];
        let rc = &suite[ci];
        let track = build_track(config, rc.track);
        let controller = build_controller(config, rc.controller, set.clone(), policy_file)?;
        let bench = crate::config::BenchParams {
            n_runs: rc.n_runs,
            seed_base: rc.seed_base,
            max_sim_time: rc.max_sim_time,
            perturb_d: rc.perturb_d,
            perturb_theta: rc.perturb_theta,
        };
        let (seed, offset) = run_perturbation(&bench, ri);
        let run = simulate_run(&controller, &track, &config.robot, rc.max_sim_time, offset)?;
        Ok::<(usize, usize, u64, SimulatedRun), HarnessError>((ci, ri, seed, run))
    });

    let mut runs = Vec::with_capacity(jobs.len());
    let mut detailed = Vec::with_capacity(jobs.len());
    for outcome in outcomes {
        let (ci, ri, seed, run) = outcome?;
        let rc = &suite[ci];
        runs.push(RunRecord {
            controller: rc.controller.id().to_string(),
            track: rc.track.id().to_string(),
            run_index: ri,
            seed,
            metrics: run.metrics,
        });
        detailed.push(run);
    }

    let mut rows = Vec::with_capacity(suite.len());
    for (ci, rc) in suite.iter().enumerate() {
        let cell: Vec<&RunRecord> = runs
            .iter()
            .skip(suite[..ci].iter().map(|c| c.n_runs).sum())
            .take(rc.n_runs)
            .collect();
        let n = cell.len() as f64;
        rows.push(ReportRow {
            controller: rc.controller.id().to_string(),
            track: rc.track.id().to_string(),
            mean_d: cell.iter().map(|r| r.metrics.mean_d).sum::<f64>() / n,
            max_d: cell
                .iter()
                .map(|r| r.metrics.max_d)
                .fold(0.0f64, f64::max),
            mean_v: cell.iter().map(|r| r.metrics.mean_v).sum::<f64>() / n,
            switches_to_ha: cell
                .iter()
                .map(|r| r.metrics.switches_to_ha as f64)
                .sum::<f64>()
                / n,
            fraction_time_ha: cell
                .iter()
                .map(|r| r.metrics.fraction_time_ha)
                .sum::<f64>()
                / n,
            n_runs: cell.len(),
        });
    }

    Ok((BenchReport { rows, runs }, detailed))
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

pub fn render_report_csv(report: &BenchReport) -> String {
    let mut out = String::from("controller,track,mean_d,max_d,mean_v,switches_to_ha,fraction_time_ha,n_runs\n");
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.controller,
            r.track,
            r.mean_d,
            r.max_d,
            r.mean_v,
            r.switches_to_ha,
            r.fraction_time_ha,
            r.n_runs
        )
        .unwrap();
    }
    out
}

pub fn render_runs_csv(report: &BenchReport) -> String {
    let mut out = String::from(
        "controller,track,run_index,seed,mean_d,max_d,mean_v,completion,switches_to_ha,fraction_time_ha\n",
    );
    for r in &report.runs {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.controller,
            r.track,
            r.run_index,
            r.seed,
            r.metrics.mean_d,
            r.metrics.max_d,
            r.metrics.mean_v,
            r.metrics.completion as u8,
            r.metrics.switches_to_ha,
            r.metrics.fraction_time_ha
        )
        .unwrap();
    }
    out
}

/// Mode-trace export (`t,mode,d_signed,theta_rel,v,omega` per tick).
pub fn render_trace_csv(ticks: &[TickLog]) -> String {
    let mut out = String::from("t,mode,d_signed,theta_rel,v,omega\n");
    for l in ticks {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            l.t, l.mode, l.d_signed, l.theta_rel, l.v, l.omega
        )
        .unwrap();
    }
    out
}

// ---------------------------------------------------------------------------
// Switching invariants over logged runs
// ---------------------------------------------------------------------------

/// Check the decision-module invariants on a logged run:
/// membership failure in high-performance mode is answered within one tick,
/// no switch back before the dwell expires, and at every switch to
/// high-assurance the state is still inside the unshrunk set.
pub fn check_switching_invariants(run: &SimulatedRun, set: &SafeSet) -> Result<(), String> {
    let ticks = &run.ticks;
    for k in 0..ticks.len() {
        let l = &ticks[k];
        // one-tick reaction
        if l.mode == Mode::HighPerformance && !set.membership(l.d_signed, l.theta_rel) {
            if let Some(next) = ticks.get(k + 1) {
                if next.mode != Mode::HighAssurance {
                    return Err(format!(
                        "membership failed at t={} in hp mode but t={} is still hp",
                        l.t, next.t
                    ));
                }
            }
        }
        if k == 0 {
            continue;
        }
        let prev = &ticks[k - 1];
        // margin soundness at the switch instant
        if prev.mode == Mode::HighPerformance
            && l.mode == Mode::HighAssurance
            && !set.membership_unshrunk(l.d_signed, l.theta_rel)
        {
            return Err(format!(
                "switch to ha at t={} happened outside the unshrunk set (d={}, theta={})",
                l.t, l.d_signed, l.theta_rel
            ));
        }
        // dwell respected
        if prev.mode == Mode::HighAssurance && l.mode == Mode::HighPerformance {
            let entered = ticks[..k]
                .iter()
                .rev()
                .take_while(|x| x.mode == Mode::HighAssurance)
                .last()
                .map(|x| x.t)
                .unwrap_or(prev.t);
            if l.t - entered < set.dwell_time - 1e-9 {
                return Err(format!(
                    "switch back at t={} only {} s after entering ha (dwell {})",
                    l.t,
                    l.t - entered,
                    set.dwell_time
                ));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::Vec2;

    fn app() -> AppConfig {
        AppConfig::default()
    }

    #[test]
    fn controller_and_track_ids_parse() {
        for kind in ControllerKind::ALL {
            assert_eq!(kind.id().parse::<ControllerKind>().unwrap(), kind);
        }
        assert_eq!("square".parse::<TrackKind>().unwrap(), TrackKind::Square);
        assert!("warp".parse::<TrackKind>().is_err());
        assert!("rogue".parse::<ControllerKind>().is_err());
    }

    #[test]
    fn pure_pursuit_tracks_a_straight_path_tightly() {
        let config = app();
        let path = Path::new(vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)]).unwrap();
        let controller =
            build_controller(&config, ControllerKind::Pp, None, None).unwrap();
        let run = simulate_run(&controller, &path, &config.robot, 60.0, (0.0, 0.0)).unwrap();
        assert!(run.metrics.completion);
        assert!(run.metrics.mean_d < 0.01, "mean_d = {}", run.metrics.mean_d);
        assert!((run.metrics.mean_v - 0.5).abs() < 0.02);
        assert_eq!(run.metrics.switches_to_ha, 0);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let config = app();
        let path = build_track(&config, TrackKind::Cosine);
        let controller =
            build_controller(&config, ControllerKind::Scripted, None, None).unwrap();
        let a = simulate_run(&controller, &path, &config.robot, 200.0, (0.05, -0.02)).unwrap();
        let b = simulate_run(&controller, &path, &config.robot, 200.0, (0.05, -0.02)).unwrap();
        assert_eq!(a.ticks, b.ticks);
        assert_eq!(a.metrics, b.metrics);
    }

    #[test]
    fn perturbations_depend_only_on_seed_and_run_index() {
        let bench = crate::config::BenchParams::default();
        let (seed_a, off_a) = run_perturbation(&bench, 3);
        let (seed_b, off_b) = run_perturbation(&bench, 3);
        assert_eq!(seed_a, seed_b);
        assert_eq!(off_a, off_b);
        let (_, off_c) = run_perturbation(&bench, 4);
        assert_ne!(off_a, off_c);
        assert!(off_a.0.abs() <= bench.perturb_d);
        assert!(off_a.1.abs() <= bench.perturb_theta);
    }

    #[test]
    fn simplex_controllers_require_a_safe_set() {
        let config = app();
        assert!(matches!(
            build_controller(&config, ControllerKind::SimplexUnsafe, None, None),
            Err(HarnessError::SafeSetRequired(_))
        ));
        assert!(matches!(
            build_controller(&config, ControllerKind::Policy, None, None),
            Err(HarnessError::PolicyFileRequired(_))
        ));
    }

    #[test]
    fn benchmark_report_shape_and_determinism() {
        let mut config = app();
        config.bench.n_runs = 2;
        config.bench.max_sim_time = 40.0;
        let suite = vec![
            RunConfig::from_app(&config, ControllerKind::Pp, TrackKind::Cosine),
            RunConfig::from_app(&config, ControllerKind::Scripted, TrackKind::Cosine),
        ];
        let a = benchmark(&suite, &config, None, None, Parallelism::Sequential).unwrap();
        assert_eq!(a.rows.len(), 2);
        assert_eq!(a.runs.len(), 4);
        let b = benchmark(
            &suite,
            &config,
            None,
            None,
            Parallelism::Parallel { threads: Some(2) },
        )
        .unwrap();
        assert_eq!(render_report_csv(&a), render_report_csv(&b));
        assert_eq!(render_runs_csv(&a), render_runs_csv(&b));

        for row in &a.rows {
            assert!(row.max_d >= row.mean_d);
            assert!(row.mean_d >= 0.0);
            assert!((0.0..=1.0).contains(&row.fraction_time_ha));
        }
    }

    #[test]
    fn report_json_round_trip_and_empty_render() {
        let empty = BenchReport::default();
        let csv = render_report_csv(&empty);
        assert_eq!(csv.lines().count(), 1);

        let mut config = app();
        config.bench.n_runs = 1;
        config.bench.max_sim_time = 20.0;
        let suite = vec![RunConfig::from_app(&config, ControllerKind::Pp, TrackKind::Cosine)];
        let report = benchmark(&suite, &config, None, None, Parallelism::Sequential).unwrap();
        let text = serde_json::to_string_pretty(&report).unwrap();
        let back: BenchReport = serde_json::from_str(&text).unwrap();
        assert_eq!(report, back);
        // one line per run plus header
        assert_eq!(render_runs_csv(&report).lines().count(), 1 + report.runs.len());
    }

    #[test]
    fn invariant_checker_flags_bad_mode_sequences() {
        use crate::reachability::{build_safe_set, GridRange, SweepConfig, SweepRecord};
        let config = SweepConfig {
            d0: GridRange::from_step(-0.4, 0.4, 0.2),
            theta0: GridRange::from_step(-0.4, 0.4, 0.2),
            rp: GridRange::from_step(0.0, 0.0, 0.1),
            n_paths: 1,
            ..SweepConfig::default()
        };
        let records: Vec<SweepRecord> = (0..5)
            .flat_map(|i| (0..5).map(move |j| (i, j)))
            .map(|(i, j): (usize, usize)| {
                let ring = (i as i64 - 2).abs().max((j as i64 - 2).abs());
                SweepRecord {
                    d0: config.d0.point(i),
                    theta0: config.theta0.point(j),
                    rp: 0.0,
                    path_id: 0,
                    converged: true,
                    max_d: 0.1 + 0.04 * ring as f64,
                    t_conv: Some(5.0),
                }
            })
            .collect();
        let set = build_safe_set(&config, &records, 1.0, &RobotLimits::default()).unwrap();

        let tick = |t: f64, mode: Mode, d: f64| TickLog {
            t,
            mode,
            d_signed: d,
            theta_rel: 0.0,
            v: 0.5,
            omega: 0.0,
            d_path: d.abs(),
        };
        let run = |ticks: Vec<TickLog>| SimulatedRun {
            ticks,
            metrics: RunMetrics {
                mean_d: 0.0,
                max_d: 0.0,
                mean_v: 0.5,
                completion: true,
                switches_to_ha: 1,
                fraction_time_ha: 0.5,
            },
            final_switch_state: SwitchState::new(),
        };

        // membership fails at t=0.05 but the mode stays hp
        let lagging = run(vec![
            tick(0.0, Mode::HighPerformance, 0.0),
            tick(0.05, Mode::HighPerformance, 0.9),
            tick(0.10, Mode::HighPerformance, 0.9),
        ]);
        assert!(check_switching_invariants(&lagging, &set).is_err());

        // switch instant outside even the unshrunk set
        let late = run(vec![
            tick(0.0, Mode::HighPerformance, 0.0),
            tick(0.05, Mode::HighAssurance, 0.9),
        ]);
        assert!(check_switching_invariants(&late, &set).is_err());

        // switch back long before the dwell expires
        let impatient = run(vec![
            tick(0.0, Mode::HighAssurance, 0.0),
            tick(0.05, Mode::HighAssurance, 0.0),
            tick(0.10, Mode::HighPerformance, 0.0),
        ]);
        assert!(check_switching_invariants(&impatient, &set).is_err());

        // a clean sequence passes
        let clean = run(vec![
            tick(0.0, Mode::HighPerformance, 0.0),
            tick(0.05, Mode::HighAssurance, 0.3),
            tick(5.1, Mode::HighAssurance, 0.0),
            tick(5.15, Mode::HighPerformance, 0.0),
        ]);
        check_switching_invariants(&clean, &set).unwrap();
    }

    #[test]
    fn trace_csv_has_one_line_per_tick() {
        let config = app();
        let path = Path::new(vec![Vec2::new(0.0, 0.0), Vec2::new(5.0, 0.0)]).unwrap();
        let controller = build_controller(&config, ControllerKind::Pp, None, None).unwrap();
        let run = simulate_run(&controller, &path, &config.robot, 30.0, (0.0, 0.0)).unwrap();
        let csv = render_trace_csv(&run.ticks);
        assert_eq!(csv.lines().count(), run.ticks.len() + 1);
        assert!(csv.starts_with("t,mode,d_signed,theta_rel,v,omega\n"));
        assert!(csv.contains(",hp,"));
    }
}
