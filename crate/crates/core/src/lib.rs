//! Proprioceptive terrain estimation and terrain-aware safe locomotion for quadrupeds.
//!
//! The crate is organised bottom-up:
//!
//! * [`terrain_map`] fuses foot support triangles into a 2.5-D height grid and
//!   fits the support plane under the body.
//! * [`contact`] fuses force and foot-to-plane distance evidence into a contact
//!   probability per leg.
//! * [`estimator`] is the linear Kalman filter over CoM and foot positions whose
//!   foot-height observation is blended with the support plane.
//! * [`safety`] turns the map and plane into discrete-time barrier rows.
//! * [`mpc`] assembles and solves the single-rigid-body force QP with friction
//!   pyramids, contact gating and barrier rows.
//! * [`sim`] is a deterministic kinematic quadruped and scenario runner used to
//!   exercise everything above against analytic ground truth.

pub mod contact;
pub mod estimator;
pub mod geometry;
pub mod kinematics;
pub mod mpc;
pub mod safety;
pub mod sim;
pub mod terrain_map;

pub use contact::{ContactBelief, ContactConfig};
pub use estimator::{EstimatorState, ProprioSample};
pub use geometry::{Leg, PlaneParams};
pub use mpc::{MpcConfig, MpcState};
pub use safety::{CbfRow, HazardInfo, SafetyConfig};
pub use terrain_map::GridMap2p5;

/// Standard gravity used throughout, m/s².
pub const GRAVITY: f64 = 9.81;
