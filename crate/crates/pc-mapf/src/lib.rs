//! Solvers for multi-agent pickup and delivery on 4-connected grids where
//! tasks carry precedence constraints and may require a coalition of agents
//! to move in unison from pickup to delivery.
//!
//! The crate provides:
//!
//! * [`pccbs`] — a makespan-optimal conflict-based search that reasons over
//!   execution-time intervals on the task graph in addition to the usual
//!   vertex/edge constraints,
//! * [`hcbs`] — a prioritized baseline that fixes task order by critical-path
//!   slack and plans against a reservation table,
//! * [`verify`] — an independent solution validator and a brute-force
//!   joint-state oracle for cross-checking makespans on small instances,
//! * [`bench`] — a seeded random instance generator with greedy task
//!   assignment plus benchmark metrics.

pub mod bench;
pub mod gridworld;
pub mod hcbs;
pub mod lowlevel;
pub mod pccbs;
pub mod taskgraph;
pub mod verify;
