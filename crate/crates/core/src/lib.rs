//! Neuromusculoskeletal simulation and learning toolkit for hip-exoskeleton
//! assistance studies.

pub mod dynamics;
pub mod distill;
pub mod env;
pub mod exo;
pub mod gait;
pub mod muscle;
pub mod net;
pub mod rng;
pub mod runner;
pub mod sac;
pub mod synergy;
