//! Simulates the robot holding its nominal stance on a moving platform.

use quadbal::simcore::{IntrinsicParams, PlatformGains, RobotModel, SimConfig, Simulation};
use quadbal::trajgen::{generate_one, Range, TrajGenConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = TrajGenConfig { roll: Range::new(-0.1, 0.1), pitch: Range::new(-0.1, 0.1), ..TrajGenConfig::training() };
    let traj = Arc::new(generate_one(&cfg, 6, &mut rng).expect("trajectory"));

    let model = Arc::new(RobotModel::default());
    let params = IntrinsicParams::nominal(&model);
    let mut sim = Simulation::new(model.clone(), SimConfig::default(), params, traj, PlatformGains::uniform(1.25, 0.025), 0.0);

    println!("{:>5}  {:>8}  {:>8}  {:>8}  {:>9}", "t", "z m", "roll", "pitch", "plat err");
    let target = model.q_nominal;
    while sim.time < sim.trajectory.duration() - 1e-9 {
        sim.step(&target).expect("finite state");
        if let Some(kind) = sim.collision() {
            println!("collision at t = {:.2}: {kind:?}", sim.time);
            return;
        }
        let step = (sim.time / sim.cfg.dt).round() as usize;
        if step.is_multiple_of(50) {
            let (roll, pitch) = sim.robot.orientation.tilt();
            let reference = sim.trajectory.sample_clamped(sim.time).position;
            println!(
                "{:>5.2}  {:>8.3}  {:>8.3}  {:>8.3}  {:>9.4}",
                sim.time,
                sim.robot.position.z,
                roll,
                pitch,
                (sim.platform.position() - reference).norm()
            );
        }
    }
    println!("stood for the full {:.1} s", sim.time);
}
