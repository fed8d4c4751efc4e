//! Evaluation benchmark sets, the balancing metrics, baselines, estimator accuracy and reports.

mod report;
mod run;

pub use report::{
    emit_report, estimator_table, parse_report_csv, report_csv, report_table, trajectory_histograms, trend_csv,
    write_estimator_report,
    REPORT_COLUMNS,
};
pub use run::{
    estimator_accuracy, evaluate, run_episode, waypoint_trend, Controller, EpisodeOptions, EpisodeRecord,
    EstimatorAccuracyReport, EstimatorSource, EstimatorSums, EvalMode, EvalOptions, EvalSetup, MetricStat,
    MetricsReport, TraceRow, TrendPoint,
};

use crate::env::{sample_draw, EpisodeDraw};
use crate::simcore::{IntrinsicRanges, PlatformGainRanges};
use crate::trajgen::{
    compute_stats, generate_one, write_trajectory_files, PlatformTrajectory, TrajError, TrajGenConfig, TrajectoryStats,
    Waypoint6,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

pub const MANIFEST_FILE: &str = "manifest.csv";
const MANIFEST_MAGIC: &str = "# quadbal benchmark v1";
const MANIFEST_HEADER: &str = "index,file,episode_seed,waypoints,path_length,mean_speed,mean_curvature";
const STATS_SAMPLES: usize = 1000;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Traj(#[from] TrajError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Net(#[from] crate::nets::NetError),
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),
    #[error("benchmark manifest {path}: {msg}")]
    Manifest { path: PathBuf, msg: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeSet {
    Train,
    Test,
}

impl RangeSet {
    pub fn trajgen(self) -> TrajGenConfig {
        match self {
            RangeSet::Train => TrajGenConfig::training(),
            RangeSet::Test => TrajGenConfig::testing(),
        }
    }

    pub fn intrinsics(self) -> IntrinsicRanges {
        match self {
            RangeSet::Train => IntrinsicRanges::training(),
            RangeSet::Test => IntrinsicRanges::testing(),
        }
    }

    pub fn gains(self) -> PlatformGainRanges {
        match self {
            RangeSet::Train => PlatformGainRanges::training(),
            RangeSet::Test => PlatformGainRanges::testing(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RangeSet::Train => "train",
            RangeSet::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(RangeSet::Train),
            "test" => Some(RangeSet::Test),
            _ => None,
        }
    }
}

/// How a benchmark's platforms move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BenchKind {
    /// Spline trajectories; `Some(n)` pins the waypoint count.
    Moving(Option<usize>),
    /// Stationary, level platforms at a random position and heading.
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub count: usize,
    pub seed: u64,
    pub ranges: RangeSet,
    pub kind: BenchKind,
}

impl BenchSpec {
    pub fn new(count: usize, seed: u64, ranges: RangeSet) -> Self {
        Self { count, seed, ranges, kind: BenchKind::Moving(None) }
    }

    fn header(&self) -> String {
        let kind = match self.kind {
            BenchKind::Moving(None) => "moving".to_string(),
            BenchKind::Moving(Some(n)) => format!("moving:{n}"),
            BenchKind::Static => "static".to_string(),
        };
        format!("# seed={} count={} ranges={} kind={kind}", self.seed, self.count, self.ranges.name())
    }

    fn parse_header(line: &str) -> Option<Self> {
        let mut spec = BenchSpec::new(0, 0, RangeSet::Test);
        for kv in line.strip_prefix("# ")?.split_whitespace() {
            let (k, v) = kv.split_once('=')?;
            match k {
                "seed" => spec.seed = v.parse().ok()?,
                "count" => spec.count = v.parse().ok()?,
                "ranges" => spec.ranges = RangeSet::parse(v)?,
                "kind" => {
                    spec.kind = match v {
                        "moving" => BenchKind::Moving(None),
                        "static" => BenchKind::Static,
                        _ => BenchKind::Moving(Some(v.strip_prefix("moving:")?.parse().ok()?)),
                    }
                }
                _ => return None,
            }
        }
        Some(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchEpisode {
    pub index: usize,
    pub seed: u64,
    pub trajectory: Arc<PlatformTrajectory>,
    pub draw: EpisodeDraw,
    pub stats: TrajectoryStats,
}

impl BenchEpisode {
    pub fn waypoints(&self) -> usize {
        self.trajectory.waypoint_count()
    }

    pub fn file_stem(&self) -> String {
        format!("traj_{:05}", self.index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSet {
    pub spec: BenchSpec,
    pub episodes: Vec<BenchEpisode>,
}

/// Seed of episode `index`, independent of every other episode.
pub fn episode_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn make_episode(spec: &BenchSpec, index: usize) -> Result<BenchEpisode, TrajError> {
    let seed = episode_seed(spec.seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = spec.ranges.trajgen();
    let trajectory = match spec.kind {
        BenchKind::Moving(pinned) => {
            let n = pinned.unwrap_or_else(|| rng.gen_range(cfg.min_waypoints..=cfg.max_waypoints));
            generate_one(&cfg, n, &mut rng)?
        }
        BenchKind::Static => {
            let wp = Waypoint6 {
                x: cfg.x.sample(&mut rng),
                y: cfg.y.sample(&mut rng),
                z: cfg.z.sample(&mut rng),
                roll: 0.0,
                pitch: 0.0,
                yaw: cfg.yaw.sample(&mut rng),
            };
            PlatformTrajectory::stationary(wp, cfg.duration)
        }
    };
    let draw = sample_draw(&spec.ranges.intrinsics(), &spec.ranges.gains(), &mut rng);
    let stats = compute_stats(&trajectory, STATS_SAMPLES);
    Ok(BenchEpisode { index, seed, trajectory: Arc::new(trajectory), draw, stats })
}

/// Generates every episode from its own seed (in parallel; the result does
/// not depend on the thread count).
pub fn build_benchmark(spec: &BenchSpec) -> Result<BenchmarkSet, EvalError> {
    if spec.count == 0 {
        return Err(EvalError::Invalid("benchmark count must be at least 1".into()));
    }
    let cfg = spec.ranges.trajgen();
    if let BenchKind::Moving(Some(n)) = spec.kind {
        if n < 4 {
            return Err(EvalError::Invalid(format!("a trajectory needs at least 4 waypoints, got {n}")));
        }
    }
    cfg.validate()?;
    let episodes = (0..spec.count).into_par_iter().map(|i| make_episode(spec, i)).collect::<Result<Vec<_>, _>>()?;
    Ok(BenchmarkSet { spec: spec.clone(), episodes })
}

impl BenchmarkSet {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// The first `n` episodes.
    pub fn head(&self, n: usize) -> BenchmarkSet {
        let episodes: Vec<BenchEpisode> = self.episodes.iter().take(n).cloned().collect();
        BenchmarkSet { spec: BenchSpec { count: episodes.len(), ..self.spec.clone() }, episodes }
    }

    /// Mean path length, speed and curvature over the set.
    pub fn mean_stats(&self) -> TrajectoryStats {
        let n = self.episodes.len().max(1) as f64;
        let sum = |f: fn(&TrajectoryStats) -> f64| self.episodes.iter().map(|e| f(&e.stats)).sum::<f64>() / n;
        TrajectoryStats {
            path_length: sum(|s| s.path_length),
            mean_speed: sum(|s| s.mean_speed),
            mean_curvature: sum(|s| s.mean_curvature),
        }
    }

    pub fn manifest(&self) -> String {
        let mut out = format!("{MANIFEST_MAGIC}\n{}\n{MANIFEST_HEADER}\n", self.spec.header());
        for e in &self.episodes {
            let s = &e.stats;
            let _ = writeln!(
                out,
                "{},trajectories/{}.csv,{},{},{},{},{}",
                e.index,
                e.file_stem(),
                e.seed,
                e.waypoints(),
                s.path_length,
                s.mean_speed,
                s.mean_curvature
            );
        }
        out
    }

    /// Writes `manifest.csv` and one sample table plus waypoint sidecar per trajectory.
    pub fn write(&self, dir: &Path) -> Result<(), EvalError> {
        let traj_dir = dir.join("trajectories");
        std::fs::create_dir_all(&traj_dir).map_err(io_err(&traj_dir))?;
        self.episodes.par_iter().try_for_each(|e| write_trajectory_files(&e.trajectory, &traj_dir, &e.file_stem()))?;
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, self.manifest()).map_err(io_err(&path))
    }

    /// Regenerates the set from the manifest seeds and checks every row and
    /// trajectory file against the regenerated episode.
    pub fn load(dir: &Path) -> Result<BenchmarkSet, EvalError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let bad = |msg: String| EvalError::Manifest { path: path.clone(), msg };
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_MAGIC) {
            return Err(bad("missing benchmark header".into()));
        }
        let spec = lines.next().and_then(BenchSpec::parse_header).ok_or_else(|| bad("unreadable settings line".into()))?;
        if lines.next() != Some(MANIFEST_HEADER) {
            return Err(bad("unexpected column header".into()));
        }
        let set = build_benchmark(&spec)?;
        let expected = set.manifest();
        for (k, (got, want)) in text.lines().zip(expected.lines()).enumerate().skip(3) {
            if got != want {
                return Err(bad(format!("line {} does not match its seed", k + 1)));
            }
        }
        if text.lines().count() != expected.lines().count() {
            return Err(bad(format!("expected {} episodes", spec.count)));
        }
        for e in &set.episodes {
            let side = dir.join("trajectories").join(format!("{}.waypoints.csv", e.file_stem()));
            let t = crate::trajgen::read_waypoint_file(&side)?;
            if t.waypoints() != e.trajectory.waypoints() {
                return Err(bad(format!("{} differs from its seed", side.display())));
            }
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests;
