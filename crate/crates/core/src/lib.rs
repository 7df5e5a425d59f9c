//! Retroactive hierarchical MPC for periodic systems.
//!
//! Periodic targets (state at period boundaries and a peak level) are
//! refined from accumulated period data by an incremental cutting-plane
//! scheme; within each period a forecast-driven MPC follows the targets.
//! The battery/frequency-regulation model in [`battery`] is the bundled
//! application.

pub mod battery;
pub mod cli;
pub mod controller;
pub mod cuts;
pub mod lp;
pub mod oracle;
pub mod scenario;
pub mod stage;
