//! Runs the actor and both history estimators on one observation, from a
//! checkpoint if given or from fresh weights otherwise.
//!
//! ```text
//! cargo run --example network_inference -- runs/train_0/checkpoint_latest.bin
//! ```

use quadbal::env::{EXP_NAMES, OBS_DIM};
use quadbal::learn::TrainConfig;
use quadbal::nets::{load_checkpoint, ExpInput, LatentInput, Mat, Networks};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let nets = match std::env::args().nth(1) {
        Some(path) => {
            let ck = load_checkpoint(path.as_ref()).unwrap_or_else(|e| {
                eprintln!("{e}");
                std::process::exit(2);
            });
            println!("checkpoint at iteration {}", ck.meta["iteration"]);
            Networks::from_store(ck.spec, ck.params).expect("consistent checkpoint")
        }
        None => {
            let spec = TrainConfig::default().net_spec();
            Networks::new(spec, &mut ChaCha8Rng::seed_from_u64(0)).expect("valid spec")
        }
    };
    println!("{} parameters", nets.store.count());

    let spec = &nets.spec;
    let obs = Mat::zeros(1, OBS_DIM);
    let hist = Mat::zeros(1, spec.history * OBS_DIM);
    let out = nets.infer(&obs, &hist, ExpInput::Estimated, LatentInput::Estimated).expect("forward pass");

    println!("action mean {:.4?}", out.mean.row(0));
    println!("latent      {:.4?}", out.latent.row(0));
    if let Some(x) = &out.x_exp_hat {
        for (name, v) in EXP_NAMES.iter().zip(x.row(0)) {
            println!("  {name:<10} {v:>9.4}");
        }
    }
}
