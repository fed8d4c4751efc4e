//! Steps the balancing environment with zero actions and prints the reward terms.

use quadbal::env::{sample_draw, BalanceEnv, EpisodeConfig, RewardCoeffs, ACTION_DIM, REWARD_TERM_NAMES};
use quadbal::simcore::{IntrinsicRanges, PlatformGainRanges, RobotModel, SimConfig};
use quadbal::trajgen::{generate_one, TrajGenConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let traj = Arc::new(generate_one(&TrajGenConfig::training(), 5, &mut rng).expect("trajectory"));
    let draw = sample_draw(&IntrinsicRanges::training(), &PlatformGainRanges::training(), &mut rng);
    let mut env = BalanceEnv::reset(
        Arc::new(RobotModel::default()),
        SimConfig::default(),
        RewardCoeffs::default(),
        EpisodeConfig::default(),
        traj,
        &draw,
    );

    let mut totals = vec![0.0; REWARD_TERM_NAMES.len()];
    let mut ret = 0.0;
    while !env.is_done() {
        let r = env.step(&[0.0; ACTION_DIM]).expect("step");
        for (t, v) in totals.iter_mut().zip(r.reward.terms().iter()) {
            *t += v;
        }
        ret += r.reward.total;
        if r.done {
            let why = match r.info.collision {
                Some(kind) => format!("collision ({kind:?})"),
                None => "time limit".into(),
            };
            println!("episode ended after {} of {} steps: {why}", env.steps(), env.max_steps());
        }
    }
    println!("return {ret:.3}");
    for (name, t) in REWARD_TERM_NAMES.iter().zip(&totals) {
        println!("  {name:<24} {t:>10.4}");
    }
    println!("alignment command at the end: {:.3?}", env.alignment());
}
