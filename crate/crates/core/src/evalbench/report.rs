use super::{io_err, EstimatorAccuracyReport, EvalError, MetricStat, MetricsReport, TraceRow, TrendPoint};
use crate::env::EXP_NAMES;
use std::fmt::Write as _;
use std::path::Path;

pub const REPORT_COLUMNS: [&str; 13] = [
    "method",
    "episodes",
    "steps",
    "collision_rate",
    "collision_rate_std",
    "height_violation_rate",
    "height_violation_rate_std",
    "position_m",
    "position_m_std",
    "rotation_rad",
    "rotation_rad_std",
    "power_w",
    "power_w_std",
];

fn stats(r: &MetricsReport) -> [MetricStat; 5] {
    [r.collision_rate, r.height_violation_rate, r.position_deviation, r.rotation_deviation, r.power]
}

/// Human-readable comparison table, one row per report.
pub fn report_table(reports: &[MetricsReport]) -> String {
    let heads = ["Method", "Collision", "Height viol.", "Position m", "Rotation rad", "Power W"];
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = vec![r.label.clone()];
            for (k, s) in stats(r).iter().enumerate() {
                let prec = if k == 4 { 2 } else { 3 };
                row.push(format!("{:.prec$} ± {:.prec$}", s.mean, s.std));
            }
            row
        })
        .collect();
    let widths: Vec<usize> = (0..heads.len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).chain([heads[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (c, cell) in cells.iter().enumerate() {
            let pad = widths[c] - cell.chars().count();
            if c == 0 {
                let _ = write!(s, "{cell}{}", " ".repeat(pad));
            } else {
                let _ = write!(s, "  {}{cell}", " ".repeat(pad));
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(&heads.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for r in &rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

/// Machine-readable rows; numbers use the shortest exact representation.
pub fn report_csv(reports: &[MetricsReport]) -> String {
    let mut out = REPORT_COLUMNS.join(",");
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{},{},{}", r.label.replace([',', '\n'], " "), r.episodes, r.steps);
        for s in stats(r) {
            let _ = write!(out, ",{},{}", s.mean, s.std);
        }
        out.push('\n');
    }
    out
}

pub fn parse_report_csv(text: &str) -> Result<Vec<MetricsReport>, EvalError> {
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_COLUMNS.join(",").as_str()) {
        return Err(EvalError::Invalid("report csv: unexpected header".into()));
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            let bad = |what: &str| EvalError::Invalid(format!("report csv line {}: {what}", k + 2));
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != REPORT_COLUMNS.len() {
                return Err(bad("wrong number of fields"));
            }
            let int = |i: usize| cells[i].parse::<usize>().map_err(|_| bad(REPORT_COLUMNS[i]));
            let num = |i: usize| cells[i].parse::<f64>().map_err(|_| bad(REPORT_COLUMNS[i]));
            let stat = |i: usize| -> Result<MetricStat, EvalError> { Ok(MetricStat { mean: num(i)?, std: num(i + 1)? }) };
            Ok(MetricsReport {
                label: cells[0].to_string(),
                episodes: int(1)?,
                steps: int(2)?,
                collision_rate: stat(3)?,
                height_violation_rate: stat(5)?,
                position_deviation: stat(7)?,
                rotation_deviation: stat(9)?,
                power: stat(11)?,
            })
        })
        .collect()
}

/// Tidy histogram rows `waypoints,quantity,bin_lo,bin_hi,count` of path
/// length and mean speed, with bins shared across waypoint counts.
pub fn trajectory_histograms(points: &[TrendPoint], bins: usize) -> String {
    let mut out = String::from("waypoints,quantity,bin_lo,bin_hi,count\n");
    let bins = bins.max(1);
    let quantities: [(&str, fn(&crate::trajgen::TrajectoryStats) -> f64); 2] =
        [("path_length", |s| s.path_length), ("mean_speed", |s| s.mean_speed)];
    for (name, f) in quantities {
        let all = points.iter().flat_map(|p| p.stats.iter().map(f));
        let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            continue;
        }
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        for p in points {
            let mut counts = vec![0usize; bins];
            for v in p.stats.iter().map(f) {
                let b = (((v - lo) / width) as usize).min(bins - 1);
                counts[b] += 1;
            }
            for (b, c) in counts.iter().enumerate() {
                let a = lo + b as f64 * width;
                let _ = writeln!(out, "{},{name},{},{},{c}", p.waypoints, a, a + width);
            }
        }
    }
    out
}

/// Per-waypoint-count means.
pub fn trend_csv(points: &[TrendPoint]) -> String {
    let mut out = String::from("waypoints,trajectories,mean_path_length,mean_speed\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{}", p.waypoints, p.stats.len(), p.mean_path_length, p.mean_speed);
    }
    out
}

pub fn estimator_table(r: &EstimatorAccuracyReport) -> String {
    let mut out = format!("{:<10}  {:>10}  {:>10}\n", "Parameter", "Error", "Std");
    for (name, s) in EXP_NAMES.iter().zip(&r.explicit) {
        let _ = writeln!(out, "{name:<10}  {:>10.4}  {:>10.4}", s.mean, s.std);
    }
    let _ = writeln!(out, "{:<10}  {:>10.4}  {:>10.4}", "latent", r.implicit.mean, r.implicit.std);
    out
}

fn estimator_csv(r: &EstimatorAccuracyReport) -> String {
    let mut out = String::from("parameter,norm,mean,std\n");
    for (name, s) in EXP_NAMES.iter().zip(&r.explicit) {
        let _ = writeln!(out, "{name},l1,{},{}", s.mean, s.std);
    }
    let _ = writeln!(out, "latent,l2,{},{}", r.implicit.mean, r.implicit.std);
    out
}

fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("t");
    for n in EXP_NAMES {
        let _ = write!(out, ",est_{n}");
    }
    for n in EXP_NAMES {
        let _ = write!(out, ",true_{n}");
    }
    out.push('\n');
    for r in trace {
        let _ = write!(out, "{}", r.t);
        for v in r.estimate.iter().chain(&r.truth) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn write(path: &Path, text: &str) -> Result<(), EvalError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, text).map_err(io_err(path))
}

/// `plotdata/estimator_accuracy.csv` and `plotdata/estimator_trace.csv`.
pub fn write_estimator_report(dir: &Path, r: &EstimatorAccuracyReport, trace: &[TraceRow]) -> Result<(), EvalError> {
    write(&dir.join("plotdata").join("estimator_accuracy.csv"), &estimator_csv(r))?;
    write(&dir.join("plotdata").join("estimator_trace.csv"), &trace_csv(trace))
}

/// Writes `report.txt` and `report.csv`, plus the estimator files when given.
pub fn emit_report(
    dir: &Path,
    reports: &[MetricsReport],
    estimator: Option<(&EstimatorAccuracyReport, &[TraceRow])>,
) -> Result<(), EvalError> {
    if reports.is_empty() {
        return Err(EvalError::Invalid("nothing to report".into()));
    }
    let mut text = report_table(reports);
    if let Some((r, trace)) = estimator {
        text.push('\n');
        text.push_str(&estimator_table(r));
        write_estimator_report(dir, r, trace)?;
    }
    write(&dir.join("report.txt"), &text)?;
    write(&dir.join("report.csv"), &report_csv(reports))
}
