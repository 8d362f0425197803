//! Command-line front end wiring configs to the sweep, safe-set build,
//! single simulations, and benchmarks.
//!
//! All numeric defaults come from [`AppConfig::default`]; a JSON config file
//! (`--config`, or the `SIMPLEX_TRACK_CONFIG` environment variable) overrides
//! them, and flags override the file.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use simplex_track::config::AppConfig;
use simplex_track::controllers::PurePursuit;
use simplex_track::harness::{
    benchmark, build_controller, build_track, default_suite, render_report_csv, render_runs_csv,
    render_trace_csv, run_perturbation, simulate_run, ControllerKind, TrackKind,
};
use simplex_track::reachability::{
    aggregate_cells, build_safe_set, load_records_csv, load_safe_set, run_sweep, save_records_csv,
    save_safe_set, SweepConfig,
};
use simplex_track::Parallelism;

#[derive(Parser)]
#[command(
    name = "simplex-track",
    version,
    about = "Simplex-architecture path tracking: reachability sweep, safe-set construction, simulations, benchmarks"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// JSON config file; flags override file values
    #[arg(long, global = true, env = "SIMPLEX_TRACK_CONFIG")]
    config: Option<PathBuf>,

    /// Worker count: 0 = all cores, 1 = sequential [default: 0]
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory [default: out]
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Maximum linear velocity in m/s [default: 1]
    #[arg(long, global = true)]
    v_max: Option<f64>,

    /// Maximum angular velocity in rad/s [default: 0.5]
    #[arg(long, global = true)]
    omega_max: Option<f64>,

    /// Control period in seconds [default: 0.05]
    #[arg(long, global = true)]
    control_period: Option<f64>,

    /// Pure-pursuit lookahead distance in meters [default: 1]
    #[arg(long, global = true)]
    lookahead: Option<f64>,

    /// Pure-pursuit commanded speed in m/s [default: 0.5]
    #[arg(long, global = true)]
    v_pp: Option<f64>,

    /// Corridor safety bound in meters [default: 1]
    #[arg(long, global = true)]
    safety_bound: Option<f64>,

    /// Safe-set artifact consumed by run/bench [default: data/reference_safe_set.sst]
    #[arg(long, global = true)]
    safe_set: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the reachability sweep and write the records CSV plus a summary
    Sweep {
        /// Coarse preset: d step 0.2, theta step 0.2, rp step 0.1, 10 paths
        #[arg(long)]
        quick: bool,
        /// Records CSV output [default: <out-dir>/records.csv]
        #[arg(long)]
        records: Option<PathBuf>,
        /// Path family seed [default: 0]
        #[arg(long)]
        path_seed: Option<u64>,
        /// Number of random paths [default: 100]
        #[arg(long)]
        n_paths: Option<usize>,
    },
    /// Build the safe set from sweep records and save it
    BuildSet {
        /// Records CSV produced by `sweep`
        #[arg(long)]
        records: PathBuf,
        /// Interpret the records against the quick-preset grid
        #[arg(long)]
        quick: bool,
        /// Path family seed the records were generated with [default: 0]
        #[arg(long)]
        path_seed: Option<u64>,
        /// Number of random paths the records were generated with [default: 100]
        #[arg(long)]
        n_paths: Option<usize>,
        /// Safe-set output [default: <out-dir>/safe_set.sst]
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Simulate a single run and write trajectory + metrics files
    Run {
        /// pp | scripted | unsafe | policy | simplex-scripted | simplex-unsafe | simplex-policy
        #[arg(long)]
        controller: ControllerKind,
        /// square | cosine
        #[arg(long)]
        track: TrackKind,
        /// Seed for the initial perturbation [default: 7]
        #[arg(long)]
        seed: Option<u64>,
        /// Grid policy file for the policy controllers
        #[arg(long)]
        policy_file: Option<PathBuf>,
        /// Trajectory CSV output [default: <out-dir>/run_<controller>_<track>.csv]
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Metrics JSON output [default: <out-dir>/run_<controller>_<track>_metrics.json]
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Maximum simulated seconds [default: 400]
        #[arg(long)]
        max_sim_time: Option<f64>,
    },
    /// Run the full benchmark suite and export report files
    Bench {
        /// Runs per (controller, track) cell [default: 30]
        #[arg(long)]
        n_runs: Option<usize>,
        /// Base seed for the run perturbations [default: 7]
        #[arg(long)]
        seed: Option<u64>,
        /// Quick preset: 10 runs per cell
        #[arg(long)]
        quick: bool,
    },
    /// Aggregate sweep records per (d0, theta0) cell for contour plotting
    ExportContour {
        /// Records CSV produced by `sweep`
        #[arg(long)]
        records: PathBuf,
        /// Interpret the records against the quick-preset grid
        #[arg(long)]
        quick: bool,
        /// Number of random paths the records were generated with [default: 100]
        #[arg(long)]
        n_paths: Option<usize>,
        /// Contour CSV output [default: <out-dir>/contour.csv]
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn load_config(overrides: &Overrides) -> Result<AppConfig> {
    let mut config = match &overrides.config {
        Some(path) => AppConfig::load(path)?,
        None => AppConfig::default(),
    };
    if let Some(v) = overrides.workers {
        config.workers = v;
    }
    if let Some(v) = &overrides.out_dir {
        config.output_dir = v.clone();
    }
    if let Some(v) = overrides.v_max {
        config.robot.v_max = v;
    }
    if let Some(v) = overrides.omega_max {
        config.robot.omega_max = v;
    }
    if let Some(v) = overrides.control_period {
        config.robot.control_period = v;
    }
    if let Some(v) = overrides.lookahead {
        config.pure_pursuit.lookahead = v;
    }
    if let Some(v) = overrides.v_pp {
        config.pure_pursuit.v_cmd = v;
    }
    if let Some(v) = overrides.safety_bound {
        config.safety_bound = v;
    }
    if let Some(v) = &overrides.safe_set {
        config.safe_set_file = v.clone();
    }
    config.validate()?;
    Ok(config)
}

fn ensure_out_dir(config: &AppConfig) -> Result<()> {
    std::fs::create_dir_all(&config.output_dir).with_context(|| {
        format!(
            "cannot create output directory {}",
            config.output_dir.display()
        )
    })
}

fn sweep_config(config: &AppConfig, quick: bool) -> SweepConfig {
    if quick {
        SweepConfig {
            path_seed: config.sweep.path_seed,
            ..SweepConfig::quick()
        }
    } else {
        config.sweep.clone()
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_sweep(
    config: &AppConfig,
    quick: bool,
    records_out: Option<PathBuf>,
    path_seed: Option<u64>,
    n_paths: Option<usize>,
) -> Result<()> {
    let mut sweep = sweep_config(config, quick);
    if let Some(seed) = path_seed {
        sweep.path_seed = seed;
    }
    if let Some(n) = n_paths {
        sweep.n_paths = n;
    }
    let controller = PurePursuit::new(config.pure_pursuit, config.robot)?;

    ensure_out_dir(config)?;
    let records_path = records_out.unwrap_or_else(|| config.output_dir.join("records.csv"));

    let started = Instant::now();
    let records = run_sweep(
        &sweep,
        &controller,
        Parallelism::from_worker_count(config.workers),
    )?;
    let elapsed = started.elapsed();
    save_records_csv(&records_path, &records)?;

    let converged = records.iter().filter(|r| r.converged).count();
    let cells = aggregate_cells(&sweep, &records)?;
    let bad_cells = cells.iter().filter(|c| !c.all_converged).count();
    println!("sweep complete in {:.1} s", elapsed.as_secs_f64());
    println!(
        "  grid states: {} ({} x {} x {})",
        sweep.grid_cardinality(),
        sweep.d0.count,
        sweep.theta0.count,
        sweep.rp.count
    );
    println!("  records: {} ({} per state)", records.len(), sweep.n_paths);
    println!(
        "  converged: {} ({} non-converging records, {} non-converging cells)",
        converged,
        records.len() - converged,
        bad_cells
    );
    println!("  records written to {}", records_path.display());
    Ok(())
}

fn cmd_build_set(
    config: &AppConfig,
    records_path: &Path,
    quick: bool,
    path_seed: Option<u64>,
    n_paths: Option<usize>,
    output: Option<PathBuf>,
) -> Result<()> {
    let mut sweep = sweep_config(config, quick);
    if let Some(seed) = path_seed {
        sweep.path_seed = seed;
    }
    if let Some(n) = n_paths {
        sweep.n_paths = n;
    }
    let records = load_records_csv(records_path)?;
    let set = build_safe_set(&sweep, &records, config.safety_bound, &config.robot)?;

    ensure_out_dir(config)?;
    let out = output.unwrap_or_else(|| config.output_dir.join("safe_set.sst"));
    save_safe_set(&set, &out)?;
    println!("safe set written to {}", out.display());
    println!(
        "  retained cells: {} of {} ({} in the shrunk set)",
        set.retained_count(),
        set.d0.count * set.theta0.count,
        set.shrunk_count()
    );
    println!("  set_max_d:    {} m", set.set_max_d);
    println!("  shrunk_max_d: {} m", set.shrunk_max_d);
    println!("  dwell_time:   {} s", set.dwell_time);
    Ok(())
}

fn load_set_if_needed(
    config: &AppConfig,
    kind: ControllerKind,
) -> Result<Option<Arc<simplex_track::reachability::SafeSet>>> {
    if !kind.is_simplex() {
        return Ok(None);
    }
    let set = load_safe_set(&config.safe_set_file, &config.robot).with_context(|| {
        format!(
            "cannot load safe set {} (run `sweep` and `build-set` first, or pass --safe-set)",
            config.safe_set_file.display()
        )
    })?;
    Ok(Some(Arc::new(set)))
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    config: &AppConfig,
    kind: ControllerKind,
    track_kind: TrackKind,
    seed: Option<u64>,
    policy_file: Option<PathBuf>,
    trace_out: Option<PathBuf>,
    metrics_out: Option<PathBuf>,
    max_sim_time: Option<f64>,
) -> Result<()> {
    let set = load_set_if_needed(config, kind)?;
    let controller = build_controller(config, kind, set, policy_file.as_deref())?;
    let track = build_track(config, track_kind);

    let mut bench = config.bench;
    if let Some(s) = seed {
        bench.seed_base = s;
    }
    let max_time = max_sim_time.unwrap_or(bench.max_sim_time);
    let (used_seed, offset) = run_perturbation(&bench, 0);
    let run = simulate_run(&controller, &track, &config.robot, max_time, offset)?;

    ensure_out_dir(config)?;
    let stem = format!("run_{}_{}", kind.id(), track_kind.id());
    let trace_path = trace_out.unwrap_or_else(|| config.output_dir.join(format!("{stem}.csv")));
    let metrics_path =
        metrics_out.unwrap_or_else(|| config.output_dir.join(format!("{stem}_metrics.json")));
    write_file(&trace_path, &render_trace_csv(&run.ticks))?;
    write_file(
        &metrics_path,
        &serde_json::to_string_pretty(&run.metrics)?,
    )?;

    let m = &run.metrics;
    println!("run {} on {} (seed {used_seed})", kind.id(), track_kind.id());
    println!(
        "  mean_d = {:.3} m, max_d = {:.3} m, mean_v = {:.3} m/s",
        m.mean_d, m.max_d, m.mean_v
    );
    println!(
        "  completion: {}, switches to ha: {}, time in ha: {:.1}%",
        m.completion,
        m.switches_to_ha,
        100.0 * m.fraction_time_ha
    );
    println!("  trace written to {}", trace_path.display());
    println!("  metrics written to {}", metrics_path.display());
    Ok(())
}

fn cmd_bench(config: &AppConfig, n_runs: Option<usize>, seed: Option<u64>, quick: bool) -> Result<()> {
    let mut config = config.clone();
    if quick {
        config.bench.n_runs = 10;
    }
    if let Some(n) = n_runs {
        config.bench.n_runs = n;
    }
    if let Some(s) = seed {
        config.bench.seed_base = s;
    }
    config.validate()?;

    let suite = default_suite(&config);
    let needs_set = suite.iter().any(|rc| rc.controller.is_simplex());
    let set = if needs_set {
        load_set_if_needed(&config, ControllerKind::SimplexScripted)?
    } else {
        None
    };

    let started = Instant::now();
    let report = benchmark(
        &suite,
        &config,
        set,
        None,
        Parallelism::from_worker_count(config.workers),
    )?;
    let elapsed = started.elapsed();

    ensure_out_dir(&config)?;
    let report_path = config.output_dir.join("report.csv");
    let runs_path = config.output_dir.join("runs.csv");
    let json_path = config.output_dir.join("report.json");
    let meta_path = config.output_dir.join("meta.json");
    write_file(&report_path, &render_report_csv(&report))?;
    write_file(&runs_path, &render_runs_csv(&report))?;
    write_file(&json_path, &serde_json::to_string_pretty(&report)?)?;
    // timestamps are confined to this sidecar so the data files stay
    // byte-reproducible
    let meta = serde_json::json!({
        "finished_unix_ms": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0),
        "elapsed_seconds": elapsed.as_secs_f64(),
        "workers": config.workers,
        "n_runs": config.bench.n_runs,
        "seed_base": config.bench.seed_base,
    });
    write_file(&meta_path, &serde_json::to_string_pretty(&meta)?)?;

    println!(
        "benchmark: {} cells x {} runs in {:.1} s",
        report.rows.len(),
        config.bench.n_runs,
        elapsed.as_secs_f64()
    );
    println!(
        "{:<18} {:<8} {:>8} {:>8} {:>8} {:>9} {:>8}",
        "controller", "track", "mean_d", "max_d", "mean_v", "sw_to_ha", "t_ha%"
    );
    for r in &report.rows {
        println!(
            "{:<18} {:<8} {:>8.3} {:>8.3} {:>8.3} {:>9.2} {:>8.1}",
            r.controller,
            r.track,
            r.mean_d,
            r.max_d,
            r.mean_v,
            r.switches_to_ha,
            100.0 * r.fraction_time_ha
        );
    }
    println!("report files written to {}", config.output_dir.display());
    Ok(())
}

fn cmd_export_contour(
    config: &AppConfig,
    records_path: &Path,
    quick: bool,
    n_paths: Option<usize>,
    output: Option<PathBuf>,
) -> Result<()> {
    let mut sweep = sweep_config(config, quick);
    if let Some(n) = n_paths {
        sweep.n_paths = n;
    }
    let records = load_records_csv(records_path)?;
    let cells = aggregate_cells(&sweep, &records)?;

    ensure_out_dir(config)?;
    let out = output.unwrap_or_else(|| config.output_dir.join("contour.csv"));
    let mut text = String::from("d0,theta0,all_converged,worst_max_d,worst_t_conv\n");
    for c in &cells {
        use std::fmt::Write as _;
        match c.worst_t_conv {
            Some(t) => writeln!(
                text,
                "{},{},{},{},{t}",
                c.d0, c.theta0, c.all_converged as u8, c.worst_max_d
            )?,
            None => writeln!(
                text,
                "{},{},{},{},",
                c.d0, c.theta0, c.all_converged as u8, c.worst_max_d
            )?,
        }
    }
    write_file(&out, &text)?;
    println!(
        "contour data for {} cells written to {}",
        cells.len(),
        out.display()
    );
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = load_config(&cli.overrides).and_then(|config| match cli.command {
        Command::Sweep {
            quick,
            records,
            path_seed,
            n_paths,
        } => cmd_sweep(&config, quick, records, path_seed, n_paths),
        Command::BuildSet {
            records,
            quick,
            path_seed,
            n_paths,
            output,
        } => cmd_build_set(&config, &records, quick, path_seed, n_paths, output),
        Command::Run {
            controller,
            track,
            seed,
            policy_file,
            trace,
            metrics,
            max_sim_time,
        } => cmd_run(
            &config,
            controller,
            track,
            seed,
            policy_file,
            trace,
            metrics,
            max_sim_time,
        ),
        Command::Bench { n_runs, seed, quick } => cmd_bench(&config, n_runs, seed, quick),
        Command::ExportContour {
            records,
            quick,
            n_paths,
            output,
        } => cmd_export_contour(&config, &records, quick, n_paths, output),
    });
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
