//! Generates platform trajectories and prints their statistics.
//!
//! ```text
//! cargo run --example trajectory_stats -- 200 7
//! ```

use quadbal::trajgen::{compute_stats, generate_set, trajectory_table, TrajGenConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let cfg = TrajGenConfig::testing().with_seed(seed);
    let set = generate_set(&cfg, count, None).expect("trajectory generation");

    println!("{:>4}  {:>10}  {:>10}  {:>10}", "n", "length m", "speed m/s", "curv 1/m");
    for n in cfg.min_waypoints..=cfg.max_waypoints {
        let stats: Vec<_> = set.iter().filter(|t| t.waypoint_count() == n).map(|t| compute_stats(t, 1000)).collect();
        if stats.is_empty() {
            continue;
        }
        let k = stats.len() as f64;
        println!(
            "{n:>4}  {:>10.3}  {:>10.3}  {:>10.3}",
            stats.iter().map(|s| s.path_length).sum::<f64>() / k,
            stats.iter().map(|s| s.mean_speed).sum::<f64>() / k,
            stats.iter().map(|s| s.mean_curvature).sum::<f64>() / k,
        );
    }

    let first = &set[0];
    println!("\nfirst trajectory, {} waypoints, head of the 100 Hz table:", first.waypoint_count());
    for line in trajectory_table(first).lines().take(4) {
        println!("  {line}");
    }
}
