//! The `quadbal` command-line tool.
//!
//! Every command writes into its own run directory together with a
//! `run.json` manifest. Run directories are never overwritten unless
//! `--force` is given.

use crate::evalbench::{
    build_benchmark, emit_report, estimator_accuracy, evaluate, trajectory_histograms, trend_csv, BenchKind,
    BenchSpec, BenchmarkSet, Controller, EstimatorSource, EvalError, EvalMode, EvalOptions, EvalSetup, RangeSet,
    TrendPoint,
};
use crate::learn::{checkpoint_config, train_observed, ConfigError, TaskFactory, TrainConfig, TrainError};
use crate::nets::{load_checkpoint, Networks};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const OUT_ENV: &str = "QUADBAL_OUT";
pub const MANIFEST: &str = "run.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, unreadable or inconsistent inputs.
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(format!("config: {e}"))
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn config(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(e) => e.into(),
            TrainError::Resume(_) => config(e),
            e => runtime(e),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "quadbal", version, about = "Train and evaluate a self-balancing quadruped on moving platforms")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Master seed (defaults: 0 for benches, the config's seed for training)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 gives bit-exact reproducible runs, 0 uses every core
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write into a non-empty run directory
    #[arg(long, global = true)]
    pub force: bool,
    /// Run directory (default: a subdirectory of $QUADBAL_OUT, or ./runs)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an evaluation benchmark set
    GenBench(GenBenchArgs),
    /// Train a policy with PPO and online adaptation
    Train(TrainArgs),
    /// Evaluate a checkpoint and/or baselines on a benchmark
    Eval(EvalArgs),
    /// Write tidy CSV plot data from a run directory
    ExportPlots(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ranges {
    Train,
    Test,
}

impl From<Ranges> for RangeSet {
    fn from(r: Ranges) -> Self {
        match r {
            Ranges::Train => RangeSet::Train,
            Ranges::Test => RangeSet::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenBenchArgs {
    #[arg(long, default_value_t = 500)]
    pub count: usize,
    #[arg(long, value_enum, default_value_t = Ranges::Test)]
    pub ranges: Ranges,
    /// Stationary level platforms instead of trajectories
    #[arg(long, conflicts_with = "waypoints")]
    pub r#static: bool,
    /// Pin the number of waypoints per trajectory
    #[arg(long)]
    pub waypoints: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML training config; built-in defaults when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Continue from a trainer checkpoint
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Override the iteration budget
    #[arg(long)]
    pub iterations: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Estimated,
    Privileged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    StandStill,
    Random,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Trained checkpoint
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Benchmark directory written by gen-bench
    #[arg(long)]
    pub bench: PathBuf,
    /// `privileged` adds a ground-truth-input row next to the estimated one
    #[arg(long, value_enum, default_value_t = Mode::Estimated)]
    pub mode: Mode,
    /// Non-learned reference controllers (repeatable)
    #[arg(long, value_enum)]
    pub baseline: Vec<Baseline>,
    /// Only use the first N episodes of the benchmark
    #[arg(long)]
    pub limit: Option<usize>,
    /// Shards for the reported standard deviation
    #[arg(long, default_value_t = 5)]
    pub shards: usize,
    /// Keep state logs of the first N episodes of each method
    #[arg(long, default_value_t = 0)]
    pub state_logs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    Stats,
    EstimatorTraces,
    TrainingCurves,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Run directory to read from
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, value_enum)]
    pub what: PlotKind,
    /// Histogram bins for `stats`
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
}

/// Written to every run directory.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub threads: usize,
    pub config: serde_json::Value,
    pub files: Vec<String>,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let recorded: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli, recorded) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, recorded: Vec<String>) -> Result<(), CliError> {
    let g = cli.global;
    match cli.command {
        Command::GenBench(a) => gen_bench(&g, &a, recorded),
        Command::Train(a) => cmd_train(&g, &a, recorded),
        Command::Eval(a) => cmd_eval(&g, &a, recorded),
        Command::ExportPlots(a) => export_plots(&g, &a),
    }
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn dir_is_empty(dir: &Path) -> bool {
    std::fs::read_dir(dir).map(|mut d| d.next().is_none()).unwrap_or(true)
}

fn prepare_out(g: &GlobalOpts, default_name: &str, allow_existing: bool) -> Result<PathBuf, CliError> {
    let dir = g.out.clone().unwrap_or_else(|| out_root().join(default_name));
    if dir.exists() && !dir.is_dir() {
        return Err(CliError::Config(format!("{} exists and is not a directory", dir.display())));
    }
    if !dir_is_empty(&dir) && !g.force && !allow_existing {
        return Err(CliError::Config(format!(
            "run directory {} is not empty; pick another --out or pass --force",
            dir.display()
        )));
    }
    std::fs::create_dir_all(&dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(runtime)?;
    Ok(pool.install(f))
}

fn list_files(root: &Path) -> Vec<String> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) {
        let Ok(rd) = std::fs::read_dir(dir) else { return };
        for e in rd.flatten() {
            let p = e.path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if let Ok(rel) = p.strip_prefix(root) {
                out.push(rel.to_string_lossy().replace('\\', "/"));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.retain(|f| f != MANIFEST);
    out.sort();
    out
}

fn write_manifest(
    dir: &Path,
    command: &str,
    args: Vec<String>,
    seed: u64,
    threads: usize,
    config: serde_json::Value,
) -> Result<(), CliError> {
    let m = RunManifest {
        tool: "quadbal".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        args,
        seed,
        threads,
        config,
        files: list_files(dir),
    };
    let text = serde_json::to_string_pretty(&m).map_err(runtime)?;
    let path = dir.join(MANIFEST);
    std::fs::write(&path, text + "\n").map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// Drops `--out <dir>` so the manifest does not depend on where the run lives.
fn strip_out(args: Vec<String>) -> Vec<String> {
    let mut kept = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--out" {
            it.next();
        } else if !a.starts_with("--out=") {
            kept.push(a);
        }
    }
    kept
}

fn gen_bench(g: &GlobalOpts, a: &GenBenchArgs, args: Vec<String>) -> Result<(), CliError> {
    let seed = g.seed.unwrap_or(0);
    let mut spec = BenchSpec::new(a.count, seed, a.ranges.into());
    if a.r#static {
        spec.kind = BenchKind::Static;
    } else if let Some(n) = a.waypoints {
        spec.kind = BenchKind::Moving(Some(n));
    }
    if spec.count == 0 {
        return Err(CliError::Config("--count must be positive".into()));
    }
    let name = format!("bench_{}_{seed}", spec.ranges.name());
    let dir = prepare_out(g, &name, false)?;
    let threads = g.threads.unwrap_or(0);
    let bench = with_threads(threads, || build_benchmark(&spec))?.map_err(|e| match e {
        EvalError::Invalid(_) => config(e),
        e => runtime(e),
    })?;
    bench.write(&dir).map_err(runtime)?;
    let cfg = serde_json::to_value(&spec).map_err(runtime)?;
    write_manifest(&dir, "gen-bench", strip_out(args), seed, threads, cfg)?;
    let s = bench.mean_stats();
    println!(
        "wrote {} episodes to {} (mean path length {:.2} m, mean speed {:.3} m/s)",
        bench.len(),
        dir.display(),
        s.path_length,
        s.mean_speed
    );
    Ok(())
}

fn cmd_train(g: &GlobalOpts, a: &TrainArgs, args: Vec<String>) -> Result<(), CliError> {
    let resume_ck = match &a.resume {
        Some(p) => Some(load_checkpoint(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let mut cfg = match (&a.config, &resume_ck) {
        (Some(p), _) => TrainConfig::load(p)?,
        (None, Some(ck)) => checkpoint_config(ck)
            .ok_or_else(|| CliError::Config("resume checkpoint carries no config; pass --config".into()))?,
        (None, None) => TrainConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.run.seed = s;
    }
    if let Some(t) = g.threads {
        cfg.run.threads = t;
    }
    if let Some(n) = a.iterations {
        cfg.run.iterations = n;
    }
    cfg.validate()?;
    let name = format!("train_{}", cfg.run.seed);
    let dir = prepare_out(g, &name, a.resume.is_some())?;
    let cfg_path = dir.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml_string()).map_err(|e| runtime(format!("{}: {e}", cfg_path.display())))?;
    let total = cfg.run.iterations;
    let every = (total / 20).max(1);
    let mut report = |s: &crate::learn::IterationStats| {
        if s.iteration == 1 || s.iteration.is_multiple_of(every) || s.iteration == total {
            let episodes = if s.episodes == 0 {
                format!("{:>27}", "no finished episodes")
            } else {
                format!("return {:>9.3}  len {:>6.1}", s.mean_episode_return, s.mean_episode_length)
            };
            eprintln!(
                "iter {:>6}/{total}  level {:>2}  success {:.2}  {episodes}  kl {:.4}",
                s.iteration, s.level, s.success_rate, s.update.approx_kl
            );
        }
    };
    let factory = TaskFactory::training(&cfg);
    let (seed, threads) = (cfg.run.seed, cfg.run.threads);
    let snapshot = serde_json::to_value(&cfg).map_err(runtime)?;
    let outcome = train_observed(cfg, factory, &dir, a.resume.as_deref(), &mut report)?;
    write_manifest(&dir, "train", strip_out(args), seed, threads, snapshot)?;
    println!(
        "finished at iteration {} (curriculum level {}); checkpoint {}",
        outcome.iterations,
        outcome.level,
        outcome.checkpoint.display()
    );
    Ok(())
}

fn save_logs(dir: &Path, tag: &str, records: &[crate::evalbench::EpisodeRecord]) -> Result<(), CliError> {
    let logs: Vec<_> = records.iter().filter_map(|r| r.state_log.as_ref().map(|l| (r.index, l))).collect();
    if logs.is_empty() {
        return Ok(());
    }
    let sub = dir.join("logs").join(tag);
    std::fs::create_dir_all(&sub).map_err(|e| runtime(format!("{}: {e}", sub.display())))?;
    for (index, text) in logs {
        let p = sub.join(format!("episode_{index:05}.csv"));
        std::fs::write(&p, text).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn eval_err(e: EvalError) -> CliError {
    match e {
        EvalError::Incompatible(_) | EvalError::Invalid(_) | EvalError::Manifest { .. } => config(e),
        e => runtime(e),
    }
}

fn cmd_eval(g: &GlobalOpts, a: &EvalArgs, args: Vec<String>) -> Result<(), CliError> {
    if a.checkpoint.is_none() && a.baseline.is_empty() {
        return Err(CliError::Config("nothing to evaluate: pass --checkpoint and/or --baseline".into()));
    }
    if a.shards == 0 {
        return Err(CliError::Config("--shards must be positive".into()));
    }
    let mut bench = BenchmarkSet::load(&a.bench).map_err(|e| CliError::Config(format!("bench: {e}")))?;
    if let Some(n) = a.limit {
        bench = bench.head(n);
    }
    let (nets, cfg) = match &a.checkpoint {
        Some(p) => {
            let ck = load_checkpoint(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            let cfg = checkpoint_config(&ck).unwrap_or_default();
            let nets = Networks::from_store(ck.spec.clone(), ck.params).map_err(config)?;
            (Some(nets), cfg)
        }
        None => (None, TrainConfig::default()),
    };
    let setup = EvalSetup::from_config(&cfg);
    if let Some(n) = &nets {
        setup.check_compatible(&n.spec).map_err(eval_err)?;
    }
    let seed = g.seed.unwrap_or(0);
    let name = format!("eval_{}", bench.spec.seed);
    let dir = prepare_out(g, &name, false)?;
    let threads = g.threads.unwrap_or(0);
    let opts = EvalOptions { shards: a.shards, state_logs: a.state_logs };

    let mut ctrls: Vec<(&str, Controller)> = Vec::new();
    if let Some(n) = &nets {
        ctrls.push(("estimated", Controller::Policy { nets: n, mode: EvalMode::Estimated }));
        if a.mode == Mode::Privileged {
            ctrls.push(("privileged", Controller::Policy { nets: n, mode: EvalMode::Privileged }));
        }
    }
    for b in &a.baseline {
        match b {
            Baseline::StandStill => ctrls.push(("stand_still", Controller::StandStill)),
            Baseline::Random => ctrls.push(("random", Controller::Random { seed })),
        }
    }
    let (reports, estimator) = with_threads(threads, || -> Result<_, CliError> {
        let mut reports = Vec::new();
        for (tag, ctrl) in &ctrls {
            let (r, records) = evaluate(&setup, ctrl, &bench, &opts).map_err(eval_err)?;
            save_logs(&dir, tag, &records)?;
            reports.push(r);
        }
        let estimator = match &nets {
            Some(n) if n.has_explicit_estimator() => {
                Some(estimator_accuracy(&setup, n, EvalMode::Estimated, EstimatorSource::Networks, &bench).map_err(eval_err)?)
            }
            _ => None,
        };
        Ok((reports, estimator))
    })??;
    emit_report(&dir, &reports, estimator.as_ref().map(|(r, t)| (r, t.as_slice()))).map_err(runtime)?;
    let snapshot = serde_json::json!({
        "bench": bench.spec,
        "episodes": bench.len(),
        "train_config": serde_json::to_value(&cfg).map_err(runtime)?,
    });
    write_manifest(&dir, "eval", strip_out(args), seed, threads, snapshot)?;
    let text = std::fs::read_to_string(dir.join("report.txt")).map_err(runtime)?;
    print!("{text}");
    Ok(())
}

fn not_found(dir: &Path, what: &str) -> CliError {
    CliError::Config(format!("{}: {what} not found", dir.display()))
}

fn export_plots(g: &GlobalOpts, a: &ExportArgs) -> Result<(), CliError> {
    if !a.run.is_dir() || dir_is_empty(&a.run) {
        return Err(not_found(&a.run, "run directory"));
    }
    let plot_dir = g.out.clone().unwrap_or_else(|| a.run.join("plotdata"));
    let (file, text) = match a.what {
        PlotKind::Stats => ("trajectory_histograms.csv", export_stats(&a.run, a.bins, &plot_dir)?),
        PlotKind::EstimatorTraces => ("estimator_traces.csv", export_traces(&a.run)?),
        PlotKind::TrainingCurves => ("training_curves.csv", export_curves(&a.run)?),
    };
    let path = plot_dir.join(file);
    if path.exists() && !g.force {
        return Err(CliError::Config(format!("{} exists; pass --force to replace it", path.display())));
    }
    std::fs::create_dir_all(&plot_dir).map_err(runtime)?;
    std::fs::write(&path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn export_stats(run: &Path, bins: usize, plot_dir: &Path) -> Result<String, CliError> {
    if !run.join(crate::evalbench::MANIFEST_FILE).exists() {
        return Err(not_found(run, "benchmark manifest"));
    }
    let bench = BenchmarkSet::load(run).map_err(|e| CliError::Config(format!("bench: {e}")))?;
    let mut groups: BTreeMap<usize, Vec<crate::trajgen::TrajectoryStats>> = BTreeMap::new();
    for ep in &bench.episodes {
        groups.entry(ep.waypoints()).or_default().push(ep.stats);
    }
    let points: Vec<TrendPoint> = groups
        .into_iter()
        .map(|(waypoints, stats)| {
            let n = stats.len() as f64;
            TrendPoint {
                waypoints,
                mean_path_length: stats.iter().map(|s| s.path_length).sum::<f64>() / n,
                mean_speed: stats.iter().map(|s| s.mean_speed).sum::<f64>() / n,
                stats,
            }
        })
        .collect();
    std::fs::create_dir_all(plot_dir).map_err(runtime)?;
    let trend = plot_dir.join("trajectory_trend.csv");
    std::fs::write(&trend, trend_csv(&points)).map_err(|e| runtime(format!("{}: {e}", trend.display())))?;
    Ok(trajectory_histograms(&points, bins))
}

/// Long format `t,parameter,predicted,ground_truth` from an eval run.
fn export_traces(run: &Path) -> Result<String, CliError> {
    let src = run.join("plotdata").join("estimator_trace.csv");
    let text = std::fs::read_to_string(&src).map_err(|_| not_found(run, "plotdata/estimator_trace.csv"))?;
    let mut lines = text.lines();
    let head: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let dims = (head.len().saturating_sub(1)) / 2;
    if dims == 0 || head.len() != 2 * dims + 1 {
        return Err(CliError::Config(format!("{}: malformed trace header", src.display())));
    }
    let mut out = String::from("t,parameter,predicted,ground_truth\n");
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != head.len() {
            return Err(CliError::Config(format!("{}: ragged row", src.display())));
        }
        for k in 0..dims {
            let name = head[1 + k].trim_start_matches("est_");
            let _ = writeln!(out, "{},{name},{},{}", cells[0], cells[1 + k], cells[1 + dims + k]);
        }
    }
    Ok(out)
}

const CURVE_SERIES: [&str; 8] = [
    "level",
    "success_rate",
    "mean_episode_return",
    "mean_episode_length",
    "policy_loss",
    "value_loss",
    "explicit_loss",
    "implicit_loss",
];

/// Long format `iteration,env_steps,series,value` from a training run.
fn export_curves(run: &Path) -> Result<String, CliError> {
    let src = run.join("metrics.csv");
    let text = std::fs::read_to_string(&src).map_err(|_| not_found(run, "metrics.csv"))?;
    let mut lines = text.lines();
    let head: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| head.iter().position(|h| *h == name);
    let (Some(it), Some(steps)) = (col("iteration"), col("env_steps")) else {
        return Err(CliError::Config(format!("{}: unexpected header", src.display())));
    };
    let series: Vec<(&str, usize)> = CURVE_SERIES.iter().filter_map(|s| col(s).map(|c| (*s, c))).collect();
    let mut out = String::from("iteration,env_steps,series,value\n");
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != head.len() {
            return Err(CliError::Config(format!("{}: ragged row", src.display())));
        }
        for (name, c) in &series {
            let _ = writeln!(out, "{},{},{name},{}", cells[it], cells[steps], cells[*c]);
        }
    }
    Ok(out)
}
