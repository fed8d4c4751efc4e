//! Platform trajectory generation.
//!
//! A trajectory is six independent natural cubic splines (x, y, z, roll,
//! pitch, yaw) interpolating random waypoints at uniformly spaced knot
//! times over a fixed duration. The number of waypoints is the curriculum
//! difficulty: more waypoints in the same duration means longer and faster
//! motion.

use crate::spatial::{euler_rates_to_angular_velocity, EulerXYZ, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use thiserror::Error;

/// Rows per second in trajectory table files.
pub const TABLE_RATE_HZ: f64 = 100.0;
pub const TABLE_HEADER: &str = "t,x,y,z,roll,pitch,yaw";

#[derive(Debug, Error)]
pub enum TrajError {
    #[error("waypoint count {0} is invalid (need at least 4 and membership in the configured set)")]
    InvalidCount(usize),
    #[error("knot times must be strictly increasing (knot {0})")]
    DegenerateKnots(usize),
    #[error("query time {t} outside [0, {duration}]")]
    OutOfDomain { t: f64, duration: f64 },
    #[error("invalid range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path} line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
}

/// Closed interval sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn validate(&self) -> Result<(), TrajError> {
        if self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi {
            Ok(())
        } else {
            Err(TrajError::InvalidRange { lo: self.lo, hi: self.hi })
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // Degenerate ranges must return `lo` exactly.
        let u: f64 = rng.gen();
        if self.lo == self.hi {
            self.lo
        } else {
            self.lo + (self.hi - self.lo) * u
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Waypoint6 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Waypoint6 {
    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.z, self.roll, self.pitch, self.yaw]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { x: a[0], y: a[1], z: a[2], roll: a[3], pitch: a[4], yaw: a[5] }
    }
}

/// Waypoint sampling ranges, waypoint-count set and duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajGenConfig {
    pub x: Range,
    pub y: Range,
    pub z: Range,
    pub roll: Range,
    pub pitch: Range,
    pub yaw: Range,
    /// Smallest and largest admissible waypoint count (inclusive).
    pub min_waypoints: usize,
    pub max_waypoints: usize,
    pub duration: f64,
    pub seed: u64,
}

impl Default for TrajGenConfig {
    fn default() -> Self {
        Self::training()
    }
}

impl TrajGenConfig {
    /// Training ranges: waypoint counts 5..=15.
    pub fn training() -> Self {
        Self {
            x: Range::new(-1.0, 1.0),
            y: Range::new(-1.0, 1.0),
            z: Range::new(0.0, 5.0),
            roll: Range::new(-0.7, 0.7),
            pitch: Range::new(-0.7, 0.7),
            yaw: Range::new(-2.6, 2.6),
            min_waypoints: 5,
            max_waypoints: 15,
            duration: 10.0,
            seed: 0,
        }
    }

    /// Testing ranges: waypoint counts 4..=16, same spatial ranges.
    pub fn testing() -> Self {
        Self { min_waypoints: 4, max_waypoints: 16, ..Self::training() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn ranges(&self) -> [Range; 6] {
        [self.x, self.y, self.z, self.roll, self.pitch, self.yaw]
    }

    pub fn validate(&self) -> Result<(), TrajError> {
        for r in self.ranges() {
            r.validate()?;
        }
        if self.min_waypoints < 4 || self.min_waypoints > self.max_waypoints {
            return Err(TrajError::InvalidCount(self.min_waypoints));
        }
        if !(self.duration > 0.0) {
            return Err(TrajError::InvalidRange { lo: 0.0, hi: self.duration });
        }
        Ok(())
    }

    pub fn admits(&self, n: usize) -> bool {
        n >= 4 && n >= self.min_waypoints && n <= self.max_waypoints
    }
}

/// Uniform knot times on `[0, duration]`, endpoints included.
pub fn uniform_knots(n: usize, duration: f64) -> Vec<f64> {
    let last = (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { duration } else { duration * i as f64 / last })
        .collect()
}

/// Draws `n` waypoints with every component uniform in its range.
pub fn sample_waypoints<R: Rng + ?Sized>(
    cfg: &TrajGenConfig,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Waypoint6>, TrajError> {
    if !cfg.admits(n) {
        return Err(TrajError::InvalidCount(n));
    }
    let ranges = cfg.ranges();
    Ok((0..n)
        .map(|_| {
            let mut a = [0.0; 6];
            for (slot, r) in a.iter_mut().zip(ranges.iter()) {
                *slot = r.sample(rng);
            }
            Waypoint6::from_array(a)
        })
        .collect())
}

/// Natural cubic spline through `(knots[i], values[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Second derivative at each knot.
    moments: Vec<f64>,
}

impl CubicSpline {
    pub fn natural(knots: &[f64], values: &[f64]) -> Result<Self, TrajError> {
        let n = knots.len();
        if n < 2 || values.len() != n {
            return Err(TrajError::InvalidCount(n));
        }
        for i in 1..n {
            if !(knots[i] > knots[i - 1]) {
                return Err(TrajError::DegenerateKnots(i));
            }
        }
        let mut moments = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for interior moments, Thomas algorithm.
            let m = n - 2;
            let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut lower = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for k in 0..m {
                let i = k + 1;
                lower[k] = h[i - 1];
                diag[k] = 2.0 * (h[i - 1] + h[i]);
                upper[k] = h[i];
                rhs[k] = 6.0
                    * ((values[i + 1] - values[i]) / h[i] - (values[i] - values[i - 1]) / h[i - 1]);
            }
            for k in 1..m {
                let w = lower[k] / diag[k - 1];
                diag[k] -= w * upper[k - 1];
                rhs[k] -= w * rhs[k - 1];
            }
            let mut sol = vec![0.0; m];
            sol[m - 1] = rhs[m - 1] / diag[m - 1];
            for k in (0..m - 1).rev() {
                sol[k] = (rhs[k] - upper[k] * sol[k + 1]) / diag[k];
            }
            moments[1..n - 1].copy_from_slice(&sol);
        }
        Ok(Self { knots: knots.to_vec(), values: values.to_vec(), moments })
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.knots.len();
        match self.knots.partition_point(|&k| k <= t) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        }
    }

    /// Value, first and second derivative at `t` (extrapolates outside the knots).
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let i = self.segment(t);
        let (t0, t1) = (self.knots[i], self.knots[i + 1]);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.moments[i], self.moments[i + 1]);
        let h = t1 - t0;
        let a = t1 - t;
        let b = t - t0;
        // Exact at the knots themselves.
        if b == 0.0 {
            let d1 = (y1 - y0) / h - h * (2.0 * m0 + m1) / 6.0;
            return (y0, d1, m0);
        }
        if a == 0.0 {
            let d1 = (y1 - y0) / h + h * (m0 + 2.0 * m1) / 6.0;
            return (y1, d1, m1);
        }
        let v = m0 * a * a * a / (6.0 * h)
            + m1 * b * b * b / (6.0 * h)
            + (y0 / h - m0 * h / 6.0) * a
            + (y1 / h - m1 * h / 6.0) * b;
        let d1 = -m0 * a * a / (2.0 * h) + m1 * b * b / (2.0 * h) + (y1 - y0) / h
            - (m1 - m0) * h / 6.0;
        let d2 = (m0 * a + m1 * b) / h;
        (v, d1, d2)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }
}

/// Pose, twist and translational acceleration of the reference at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlatformSample {
    pub position: Vec3,
    pub euler: EulerXYZ,
    pub linear_velocity: Vec3,
    /// Time derivative of (roll, pitch, yaw).
    pub euler_rates: Vec3,
    /// World-frame angular velocity.
    pub angular_velocity: Vec3,
    pub linear_acceleration: Vec3,
}

impl PlatformSample {
    pub fn pose_array(&self) -> [f64; 6] {
        [
            self.position.x,
            self.position.y,
            self.position.z,
            self.euler.roll,
            self.euler.pitch,
            self.euler.yaw,
        ]
    }

    pub fn rate_array(&self) -> [f64; 6] {
        [
            self.linear_velocity.x,
            self.linear_velocity.y,
            self.linear_velocity.z,
            self.euler_rates.x,
            self.euler_rates.y,
            self.euler_rates.z,
        ]
    }
}

/// Six-DoF interpolating trajectory of duration `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatformTrajectory {
    waypoints: Vec<Waypoint6>,
    splines: Vec<CubicSpline>,
    duration: f64,
}

/// Fits one natural cubic spline per DoF at uniform knots on `[0, duration]`.
pub fn fit_interpolating_spline(
    wps: &[Waypoint6],
    duration: f64,
) -> Result<PlatformTrajectory, TrajError> {
    if wps.len() < 4 {
        return Err(TrajError::InvalidCount(wps.len()));
    }
    fit_with_knots(wps, &uniform_knots(wps.len(), duration))
}

/// Fits at explicit knot times (first knot must be 0).
pub fn fit_with_knots(wps: &[Waypoint6], knots: &[f64]) -> Result<PlatformTrajectory, TrajError> {
    if wps.len() < 4 || knots.len() != wps.len() {
        return Err(TrajError::InvalidCount(wps.len()));
    }
    let splines = (0..6)
        .map(|d| {
            let vals: Vec<f64> = wps.iter().map(|w| w.to_array()[d]).collect();
            CubicSpline::natural(knots, &vals)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PlatformTrajectory {
        waypoints: wps.to_vec(),
        splines,
        duration: *knots.last().unwrap(),
    })
}

impl PlatformTrajectory {
    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn waypoints(&self) -> &[Waypoint6] {
        &self.waypoints
    }

    pub fn knots(&self) -> &[f64] {
        self.splines[0].knots()
    }

    /// Per-DoF splines in `[x, y, z, roll, pitch, yaw]` order.
    pub fn splines(&self) -> &[CubicSpline] {
        &self.splines
    }

    pub fn waypoint_count(&self) -> usize {
        self.waypoints.len()
    }

    /// Constant trajectory holding `wp` (used for static-platform scenarios).
    pub fn stationary(wp: Waypoint6, duration: f64) -> Self {
        fit_interpolating_spline(&[wp; 4], duration).expect("constant trajectory is valid")
    }

    /// Evaluates the splines at `t`, clamped to `[0, T]`.
    pub fn sample_clamped(&self, t: f64) -> PlatformSample {
        let t = t.clamp(0.0, self.duration);
        let mut v = [0.0; 6];
        let mut d = [0.0; 6];
        let mut dd = [0.0; 6];
        for (k, s) in self.splines.iter().enumerate() {
            let (a, b, c) = s.eval(t);
            v[k] = a;
            d[k] = b;
            dd[k] = c;
        }
        let euler = EulerXYZ::new(v[3], v[4], v[5]);
        let euler_rates = Vec3::new(d[3], d[4], d[5]);
        PlatformSample {
            position: Vec3::new(v[0], v[1], v[2]),
            euler,
            linear_velocity: Vec3::new(d[0], d[1], d[2]),
            euler_rates,
            angular_velocity: euler_rates_to_angular_velocity(euler, euler_rates),
            linear_acceleration: Vec3::new(dd[0], dd[1], dd[2]),
        }
    }

    /// Pose and twist at `t ∈ [0, T]`.
    pub fn query(&self, t: f64) -> Result<PlatformSample, TrajError> {
        if !(t >= 0.0 && t <= self.duration) {
            return Err(TrajError::OutOfDomain { t, duration: self.duration });
        }
        Ok(self.sample_clamped(t))
    }
}

/// Translational statistics of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryStats {
    pub path_length: f64,
    pub mean_speed: f64,
    pub mean_curvature: f64,
}

/// Speeds below this are skipped by the curvature average.
const CURVATURE_MIN_SPEED: f64 = 1e-3;

/// Dense-sample statistics; `samples` intervals on `[0, T]`.
pub fn compute_stats(traj: &PlatformTrajectory, samples: usize) -> TrajectoryStats {
    let samples = samples.max(1);
    let t_end = traj.duration();
    let mut length = 0.0;
    let mut curv_sum = 0.0;
    let mut curv_n = 0usize;
    let mut prev: Option<Vec3> = None;
    for i in 0..=samples {
        let t = t_end * i as f64 / samples as f64;
        let s = traj.sample_clamped(t);
        if let Some(p) = prev {
            length += (s.position - p).norm();
        }
        prev = Some(s.position);
        let speed = s.linear_velocity.norm();
        if speed > CURVATURE_MIN_SPEED {
            curv_sum += s.linear_velocity.cross(&s.linear_acceleration).norm() / speed.powi(3);
            curv_n += 1;
        }
    }
    TrajectoryStats {
        path_length: length,
        mean_speed: length / t_end,
        mean_curvature: if curv_n > 0 { curv_sum / curv_n as f64 } else { 0.0 },
    }
}

/// One trajectory with `n` waypoints drawn from `rng`.
pub fn generate_one<R: Rng + ?Sized>(
    cfg: &TrajGenConfig,
    n: usize,
    rng: &mut R,
) -> Result<PlatformTrajectory, TrajError> {
    let wps = sample_waypoints(cfg, n, rng)?;
    fit_interpolating_spline(&wps, cfg.duration)
}

/// `count` trajectories seeded from `cfg.seed`. A given `level` pins the
/// waypoint count; otherwise each count is uniform over the configured set.
pub fn generate_set(
    cfg: &TrajGenConfig,
    count: usize,
    level: Option<usize>,
) -> Result<Vec<PlatformTrajectory>, TrajError> {
    cfg.validate()?;
    if count == 0 {
        return Err(TrajError::InvalidCount(0));
    }
    if let Some(n) = level {
        if !cfg.admits(n) {
            return Err(TrajError::InvalidCount(n));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..count)
        .map(|_| {
            let n = level.unwrap_or_else(|| rng.gen_range(cfg.min_waypoints..=cfg.max_waypoints));
            generate_one(cfg, n, &mut rng)
        })
        .collect()
}

fn io_err(path: &Path, source: std::io::Error) -> TrajError {
    TrajError::Io { path: path.display().to_string(), source }
}

fn push_row(out: &mut String, t: f64, v: &[f64; 6]) {
    let _ = write!(out, "{t}");
    for x in v {
        let _ = write!(out, ",{x}");
    }
    out.push('\n');
}

/// Renders the 100 Hz pose table.
pub fn trajectory_table(traj: &PlatformTrajectory) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    let n = (traj.duration() * TABLE_RATE_HZ).round() as usize;
    for i in 0..=n {
        let t = (i as f64 / TABLE_RATE_HZ).min(traj.duration());
        push_row(&mut out, t, &traj.sample_clamped(t).pose_array());
    }
    out
}

/// Renders the sidecar table of knot times and waypoints.
pub fn waypoint_table(traj: &PlatformTrajectory) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for (t, w) in traj.knots().iter().zip(traj.waypoints()) {
        push_row(&mut out, *t, &w.to_array());
    }
    out
}

/// Writes `<stem>.csv` (100 Hz samples) and `<stem>.waypoints.csv`.
pub fn write_trajectory_files(
    traj: &PlatformTrajectory,
    dir: &Path,
    stem: &str,
) -> Result<(), TrajError> {
    let table = dir.join(format!("{stem}.csv"));
    fs::write(&table, trajectory_table(traj)).map_err(|e| io_err(&table, e))?;
    let side = dir.join(format!("{stem}.waypoints.csv"));
    fs::write(&side, waypoint_table(traj)).map_err(|e| io_err(&side, e))?;
    Ok(())
}

/// Parses a `t,x,y,z,roll,pitch,yaw` table.
pub fn parse_table(text: &str, path: &str) -> Result<Vec<(f64, [f64; 6])>, TrajError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TABLE_HEADER => {}
        _ => {
            return Err(TrajError::Parse {
                path: path.into(),
                line: 1,
                msg: format!("expected header `{TABLE_HEADER}`"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| TrajError::Parse { path: path.into(), line: i + 1, msg: e.to_string() })?;
        if vals.len() != 7 {
            return Err(TrajError::Parse {
                path: path.into(),
                line: i + 1,
                msg: format!("expected 7 columns, found {}", vals.len()),
            });
        }
        rows.push((vals[0], [vals[1], vals[2], vals[3], vals[4], vals[5], vals[6]]));
    }
    Ok(rows)
}

/// Rebuilds a trajectory from its sidecar waypoint file.
pub fn read_waypoint_file(path: &Path) -> Result<PlatformTrajectory, TrajError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let rows = parse_table(&text, &path.display().to_string())?;
    let knots: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let wps: Vec<Waypoint6> = rows.iter().map(|r| Waypoint6::from_array(r.1)).collect();
    fit_with_knots(&wps, &knots)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn sampled_waypoints_stay_in_range() {
        let cfg = TrajGenConfig::training();
        let wps = sample_waypoints(&cfg, 5, &mut seeded(3)).unwrap();
        assert_eq!(wps.len(), 5);
        for w in &wps {
            assert!(cfg.x.contains(w.x) && cfg.y.contains(w.y) && cfg.z.contains(w.z));
            assert!(cfg.roll.contains(w.roll) && cfg.pitch.contains(w.pitch) && cfg.yaw.contains(w.yaw));
        }
    }

    #[test]
    fn invalid_counts_rejected() {
        let cfg = TrajGenConfig::testing();
        assert!(matches!(sample_waypoints(&cfg, 3, &mut seeded(0)), Err(TrajError::InvalidCount(3))));
        assert!(matches!(sample_waypoints(&cfg, 17, &mut seeded(0)), Err(TrajError::InvalidCount(17))));
        assert!(sample_waypoints(&cfg, 4, &mut seeded(0)).is_ok());
    }

    #[test]
    fn degenerate_range_is_constant() {
        let mut cfg = TrajGenConfig::training();
        cfg.x = Range::new(0.25, 0.25);
        let wps = sample_waypoints(&cfg, 9, &mut seeded(1)).unwrap();
        assert!(wps.iter().all(|w| w.x == 0.25));
    }

    #[test]
    fn uniform_sample_statistics() {
        // U(-1, 1): mean 0, σ = 1/√3; mean of 10⁴ samples has σ_mean = σ/100.
        let r = Range::new(-1.0, 1.0);
        let mut rng = seeded(11);
        let xs: Vec<f64> = (0..10_000).map(|_| r.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sigma_mean = (1.0f64 / 3.0).sqrt() / 100.0;
        assert!(mean.abs() < 3.0 * sigma_mean, "mean {mean}");
        assert!(xs.iter().all(|x| r.contains(*x)));
    }

    #[test]
    fn duplicate_knots_rejected() {
        let wps = vec![Waypoint6::default(); 4];
        let err = fit_with_knots(&wps, &[0.0, 1.0, 1.0, 2.0]).unwrap_err();
        assert!(matches!(err, TrajError::DegenerateKnots(2)));
    }

    #[test]
    fn collinear_waypoints_reproduce_line() {
        let wps: Vec<Waypoint6> = (0..6)
            .map(|i| {
                let s = i as f64;
                Waypoint6 { x: 0.2 * s, y: -0.1 * s, z: 1.0 + 0.3 * s, ..Default::default() }
            })
            .collect();
        let traj = fit_interpolating_spline(&wps, 10.0).unwrap();
        for k in 0..=100 {
            let s = traj.query(k as f64 * 0.1).unwrap();
            let u = s.position.x / 0.2;
            assert!((s.position.y + 0.1 * u).abs() < 1e-12);
            assert!((s.position.z - 1.0 - 0.3 * u).abs() < 1e-12);
            assert!(s.linear_acceleration.norm() < 1e-12);
        }
        assert!(compute_stats(&traj, 2000).mean_curvature < 1e-9);
    }

    #[test]
    fn interpolates_waypoints_at_knots() {
        let cfg = TrajGenConfig::training();
        let traj = generate_one(&cfg, 9, &mut seeded(5)).unwrap();
        for (t, w) in traj.knots().iter().zip(traj.waypoints()) {
            let p = traj.query(*t).unwrap().pose_array();
            for (a, b) in p.iter().zip(w.to_array()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn natural_end_conditions_by_finite_differences() {
        let cfg = TrajGenConfig::training();
        let traj = generate_one(&cfg, 7, &mut seeded(9)).unwrap();
        let h = 1e-4;
        let t_end = traj.duration();
        let pos = |t: f64| traj.query(t).unwrap().pose_array();
        // One-sided second difference; O(h) error times the third derivative.
        for (a, b, c) in [(0.0, h, 2.0 * h), (t_end, t_end - h, t_end - 2.0 * h)] {
            let (pa, pb, pc) = (pos(a), pos(b), pos(c));
            for d in 0..6 {
                let fd = (pa[d] - 2.0 * pb[d] + pc[d]) / (h * h);
                assert!(fd.abs() < 1e-2, "dof {d}: {fd}");
            }
        }
        for spline in &traj.splines {
            assert!(spline.eval(0.0).2.abs() < 1e-9);
            assert!(spline.eval(t_end).2.abs() < 1e-9);
        }
    }

    #[test]
    fn query_domain_and_constant_trajectory() {
        let traj = PlatformTrajectory::stationary(Waypoint6 { z: 1.0, ..Default::default() }, 10.0);
        assert!(matches!(traj.query(-0.01), Err(TrajError::OutOfDomain { .. })));
        assert!(matches!(traj.query(10.01), Err(TrajError::OutOfDomain { .. })));
        let s = traj.query(4.2).unwrap();
        assert_eq!(s.linear_velocity, Vec3::zeros());
        assert_eq!(s.angular_velocity, Vec3::zeros());
        assert_eq!(s.position.z, 1.0);
    }

    #[test]
    fn velocity_matches_central_differences() {
        let cfg = TrajGenConfig::testing();
        let traj = generate_one(&cfg, 12, &mut seeded(21)).unwrap();
        let mut rng = seeded(22);
        let h = 1e-5;
        for _ in 0..100 {
            let t = rng.gen_range(h..traj.duration() - h);
            let s = traj.query(t).unwrap();
            let (p1, p0) = (traj.query(t + h).unwrap().pose_array(), traj.query(t - h).unwrap().pose_array());
            let rates = s.rate_array();
            for d in 0..6 {
                let fd = (p1[d] - p0[d]) / (2.0 * h);
                let err = (fd - rates[d]).abs() / rates[d].abs().max(1e-3);
                assert!(err < 1e-6, "dof {d} t {t}: analytic {} fd {fd}", rates[d]);
            }
        }
    }

    #[test]
    fn straight_line_stats() {
        let wps: Vec<Waypoint6> = (0..5)
            .map(|i| Waypoint6 { x: 0.5 * i as f64, ..Default::default() })
            .collect();
        let traj = fit_interpolating_spline(&wps, 10.0).unwrap();
        let st = compute_stats(&traj, 1000);
        assert!((st.path_length - 2.0).abs() < 1e-9);
        assert!((st.mean_speed - 0.2).abs() < 1e-10);
        assert!(st.mean_curvature < 1e-9);
    }

    #[test]
    fn circle_curvature() {
        // 121 waypoints on a radius-0.8 circle traversed once in 10 s.
        let r = 0.8;
        let n = 121;
        let wps: Vec<Waypoint6> = (0..n)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64;
                Waypoint6 { x: r * a.cos(), y: r * a.sin(), z: 2.0, ..Default::default() }
            })
            .collect();
        let traj = fit_interpolating_spline(&wps, 10.0).unwrap();
        let st = compute_stats(&traj, 20_000);
        assert!((st.mean_curvature * r - 1.0).abs() < 0.01, "κ·r = {}", st.mean_curvature * r);
        assert!((st.path_length - 2.0 * std::f64::consts::PI * r).abs() < 1e-3);
    }

    #[test]
    fn generate_set_levels_and_determinism() {
        let cfg = TrajGenConfig::training().with_seed(42);
        let one = generate_set(&cfg, 1, Some(5)).unwrap();
        assert_eq!(one[0].waypoint_count(), 5);
        let a = generate_set(&cfg, 20, None).unwrap();
        let b = generate_set(&cfg, 20, None).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|t| (5..=15).contains(&t.waypoint_count())));
        assert!(generate_set(&cfg, 1, Some(16)).is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrajGenConfig::testing();
        let traj = generate_one(&cfg, 8, &mut seeded(77)).unwrap();
        write_trajectory_files(&traj, dir.path(), "traj_0").unwrap();
        let back = read_waypoint_file(&dir.path().join("traj_0.waypoints.csv")).unwrap();
        let text = fs::read_to_string(dir.path().join("traj_0.csv")).unwrap();
        let rows = parse_table(&text, "traj_0.csv").unwrap();
        assert_eq!(rows.len(), 1001);
        for (t, pose) in rows {
            let q = back.query(t).unwrap().pose_array();
            for d in 0..6 {
                assert!((q[d] - pose[d]).abs() < 1e-6);
            }
        }
    }
}
