//! Point-foot contact against the platform's top surface.
//!
//! Normal force is a one-sided spring-damper on penetration depth. The
//! tangential force is a stick spring-damper anchored where the foot first
//! touched down, clamped to the Coulomb cone; when the clamp is active the
//! anchor slides along with the foot.

use super::model::{FootStates, IntrinsicParams, NUM_LEGS};
use super::platform::PlatformSim;
use super::SimConfig;
use crate::spatial::Vec3;
use nalgebra::Matrix3;

/// Per-foot contact outcome in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContactResult {
    pub forces: [Vec3; NUM_LEGS],
    pub contacts: [bool; NUM_LEGS],
    /// Normal force magnitude per foot.
    pub normal: [f64; NUM_LEGS],
    /// World-frame derivative of each foot force with respect to foot
    /// displacement (negated) and foot velocity (negated).
    pub stiffness: [Matrix3<f64>; NUM_LEGS],
    pub damping: [Matrix3<f64>; NUM_LEGS],
    /// Platform velocity at each contact point.
    pub surface_velocity: [Vec3; NUM_LEGS],
}

/// Computes contact forces and updates the stick anchors (platform-frame xy).
pub fn contact_forces(
    feet: &FootStates,
    plat: &PlatformSim,
    params: &IntrinsicParams,
    cfg: &SimConfig,
    anchors: &mut [Option<[f64; 2]>; NUM_LEGS],
) -> ContactResult {
    let frame = plat.frame();
    let mu = params.friction;
    let mut out = ContactResult::default();
    for leg in 0..NUM_LEGS {
        let p_world = feet.positions[leg];
        let local = frame.apply_inverse(&p_world);
        let depth = -local.z;
        if !(plat.within_extent(&local) && depth > 0.0 && depth < plat.shape[2]) {
            anchors[leg] = None;
            continue;
        }
        let v_surface = plat.point_velocity(&p_world);
        let v_rel_world = feet.velocities[leg] - v_surface;
        let v_rel = frame.rotation.apply_inverse(&v_rel_world);
        let normal = (cfg.contact_stiffness * depth - cfg.contact_damping * v_rel.z).max(0.0);
        if normal <= 0.0 {
            anchors[leg] = None;
            continue;
        }
        let anchor = anchors[leg].get_or_insert([local.x, local.y]);
        let mut ft = [
            -cfg.tangential_stiffness * (local.x - anchor[0]) - cfg.tangential_damping * v_rel.x,
            -cfg.tangential_stiffness * (local.y - anchor[1]) - cfg.tangential_damping * v_rel.y,
        ];
        let mag = ft[0].hypot(ft[1]);
        let limit = mu * normal;
        let sliding = mag > limit;
        if sliding {
            let s = limit / mag;
            ft = [ft[0] * s, ft[1] * s];
            // Slide the anchor so the spring alone carries the cone force.
            anchor[0] = local.x + ft[0] / cfg.tangential_stiffness;
            anchor[1] = local.y + ft[1] / cfg.tangential_stiffness;
        }
        debug_assert!(normal >= 0.0);
        debug_assert!(ft[0].hypot(ft[1]) <= mu * normal + 1e-9);
        out.forces[leg] = frame.rotation.apply(&Vec3::new(ft[0], ft[1], normal));
        out.contacts[leg] = true;
        out.normal[leg] = normal;
        out.surface_velocity[leg] = v_surface;
        let (kt, dt) = if sliding { (0.0, 0.0) } else { (cfg.tangential_stiffness, cfg.tangential_damping) };
        let rot = frame.rotation.matrix();
        out.stiffness[leg] = rot * Matrix3::from_diagonal(&Vec3::new(kt, kt, cfg.contact_stiffness)) * rot.transpose();
        out.damping[leg] = rot * Matrix3::from_diagonal(&Vec3::new(dt, dt, cfg.contact_damping)) * rot.transpose();
    }
    out
}
