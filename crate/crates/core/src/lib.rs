//! Semiclassical dynamics of the unbalanced Dicke model in the bad-cavity
//! limit: trajectories, local bifurcations, kneading invariants and
//! continuation of periodic and connecting orbits.

pub mod bvpcont;
pub mod integrate;
pub mod io;
pub mod kneading;
pub mod localbif;
pub mod model;

pub use integrate::{compare_dicke, simulate, simulate_dicke, Tolerances, Trajectory};
pub use model::{DickeState, LmgField, ModelParams, ReducedParams, SpinState};
