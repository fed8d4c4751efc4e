//! A short training run with progress printed every few iterations.
//!
//! ```text
//! cargo run --example train_smoke -- 20 /tmp/quadbal_smoke
//! ```

use quadbal::learn::{train, TrainConfig};
use std::path::PathBuf;

fn main() {
    let mut args = std::env::args().skip(1);
    let iterations: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("quadbal_train_smoke"));

    let mut cfg = TrainConfig::smoke();
    cfg.run.iterations = iterations;
    cfg.run.checkpoint_every = iterations.max(1);
    let _ = std::fs::remove_dir_all(&out);

    let outcome = match train(cfg, &out, None) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("training failed: {e}");
            std::process::exit(3);
        }
    };
    for s in outcome.history.iter().step_by(5) {
        let episodes = if s.episodes == 0 {
            "no finished episodes".to_string()
        } else {
            format!("return {:>9.3}  len {:>6.1}", s.mean_episode_return, s.mean_episode_length)
        };
        println!(
            "iter {:>4}  level {:>2}  {episodes}  policy loss {:>8.4}  explicit loss {:>8.5}",
            s.iteration,
            s.level,
            s.update.policy_loss,
            s.update.explicit_loss
        );
    }
    println!("final level {}; checkpoint {}", outcome.level, outcome.checkpoint.display());
}
