//! Rotations, Euler angles and rigid transforms between world and platform frames.

use quadbal::spatial::{euler_to_rotation, rotation_to_euler, EulerXYZ, FrameTransform, Vec3};

fn main() {
    let tilt = EulerXYZ { roll: 0.3, pitch: -0.2, yaw: 1.1 };
    let r = euler_to_rotation(tilt);
    let back = rotation_to_euler(&r).expect("away from gimbal lock");
    println!("euler in  {:?}", tilt.to_array());
    println!("euler out {:?}", back.to_array());
    println!("orthonormality error {:.2e}", r.orthonormality_error());

    let (roll, pitch) = r.tilt();
    println!("tilt roll {roll:.3} pitch {pitch:.3}, heading {:.3}", r.heading());

    let platform = FrameTransform::new(r, Vec3::new(0.5, -0.2, 2.0));
    let foot_world = Vec3::new(0.7, 0.0, 2.1);
    let foot_local = platform.apply_inverse(&foot_world);
    println!("foot in platform frame {:.4?}", foot_local.as_slice());
    println!("round trip error {:.2e}", (platform.apply(&foot_local) - foot_world).norm());

    let composed = platform.compose(&platform.inverse());
    println!("T * T^-1 translation {:.2e}", composed.translation.norm());
}
