//! Prints a complete training config as TOML.
//!
//! ```text
//! cargo run --example default_config            # full-scale defaults
//! cargo run --example default_config -- smoke   # a few minutes on a laptop
//! ```

use quadbal::learn::TrainConfig;

fn main() {
    let cfg = match std::env::args().nth(1).as_deref() {
        Some("smoke") => TrainConfig::smoke(),
        Some(other) => {
            eprintln!("unknown preset {other:?}; expected `smoke` or nothing");
            std::process::exit(2);
        }
        None => TrainConfig::default(),
    };
    print!("{}", cfg.to_toml_string());
}
