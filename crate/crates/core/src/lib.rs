//! Distributed finite-time formation tracking for networks of two-link
//! Euler-Lagrange manipulators following a double-integrator leader.
//!
//! The crate is split by concern:
//!
//! * [`graph`]: undirected interaction topology, leader pinning and the
//!   coupling matrix `B = L + diag(P)`.
//! * [`formation`]: closed formations and the piecewise-constant switching
//!   schedule.
//! * [`dynamics`]: two-link planar manipulator model and leader trajectories.
//! * [`control`]: sig-power map, shaping functions, reference acceleration,
//!   computed torque and the sliding-mode acceleration estimator.
//! * [`sim`]: fixed-step closed-loop simulation producing a [`sim::TrajectoryLog`].
//! * [`metrics`]: tracking errors, settle times, Lyapunov and homogeneity checks.

pub mod control;
pub mod dynamics;
mod error;
pub mod formation;
pub mod graph;
pub mod metrics;
pub mod sim;

pub use error::{Error, Result};
