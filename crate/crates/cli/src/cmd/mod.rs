//! Command implementations. Each takes the resolved config plus its own
//! flags and returns through the process exit-code contract.

pub mod diagnose;
pub mod eval;
pub mod gen_scenes;
pub mod train;
pub mod visualize;
