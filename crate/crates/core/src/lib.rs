//! Quasistatic planar pushing: a force-feedback single-point pushing
//! controller together with the simulator, analytic contact solver and
//! scenario harness used to evaluate it.

pub mod controller;
pub mod engine;
pub mod geometry;
pub mod harness;
pub mod ik;
pub mod oracle;
pub mod path;
