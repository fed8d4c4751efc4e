//! Per-control-step state log.
//!
//! Columns, in order:
//! `t, base_x, base_y, base_z, base_roll, base_pitch, base_yaw,
//! base_vx, base_vy, base_vz, base_wx, base_wy, base_wz,
//! q0..q11, qd0..qd11, tau0..tau11, c0..c3,
//! f0x, f0y, f0z, .., f3z,
//! plf_x, plf_y, plf_z, plf_roll, plf_pitch, plf_yaw,
//! plf_vx, plf_vy, plf_vz, plf_wx, plf_wy, plf_wz`.

use super::Simulation;
use std::fmt::Write as _;

pub fn state_log_header() -> String {
    let mut cols: Vec<String> = ["t", "base_x", "base_y", "base_z", "base_roll", "base_pitch", "base_yaw"]
        .iter()
        .chain(["base_vx", "base_vy", "base_vz", "base_wx", "base_wy", "base_wz"].iter())
        .map(|s| s.to_string())
        .collect();
    for prefix in ["q", "qd", "tau"] {
        cols.extend((0..12).map(|j| format!("{prefix}{j}")));
    }
    cols.extend((0..4).map(|i| format!("c{i}")));
    for i in 0..4 {
        cols.extend(["x", "y", "z"].iter().map(|a| format!("f{i}{a}")));
    }
    cols.extend(
        ["plf_x", "plf_y", "plf_z", "plf_roll", "plf_pitch", "plf_yaw", "plf_vx", "plf_vy", "plf_vz", "plf_wx", "plf_wy", "plf_wz"]
            .iter()
            .map(|s| s.to_string()),
    );
    cols.join(",")
}

/// Accumulates rows for one episode.
#[derive(Debug, Clone, Default)]
pub struct StateLog {
    text: String,
}

impl StateLog {
    pub fn new() -> Self {
        let mut text = state_log_header();
        text.push('\n');
        Self { text }
    }

    pub fn record(&mut self, sim: &Simulation) {
        let r = &sim.robot;
        let e = r.euler();
        let mut vals: Vec<f64> = vec![sim.time];
        vals.extend(r.position.iter());
        vals.extend([e.roll, e.pitch, e.yaw]);
        vals.extend(r.linear_velocity.iter());
        vals.extend(r.angular_velocity.iter());
        vals.extend(r.q);
        vals.extend(r.qd);
        vals.extend(r.tau);
        vals.extend(r.contacts.iter().map(|c| if *c { 1.0 } else { 0.0 }));
        for f in &r.foot_forces {
            vals.extend(f.iter());
        }
        vals.extend(sim.platform.pose);
        vals.extend(sim.platform.linear_velocity().iter());
        vals.extend(sim.platform.angular_velocity().iter());
        let mut first = true;
        for v in vals {
            if !first {
                self.text.push(',');
            }
            first = false;
            let _ = write!(self.text, "{v}");
        }
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn into_string(self) -> String {
        self.text
    }
}
