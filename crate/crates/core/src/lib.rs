//! Self-balancing quadruped on six-DoF moving platforms.

pub mod cli;
pub mod env;
pub mod evalbench;
pub mod learn;
pub mod nets;
pub mod simcore;
pub mod spatial;
pub mod trajgen;
