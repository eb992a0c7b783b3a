//! De Broglie–Bohm trajectories in an incomplete Mach-Zehnder interferometer.
//!
//! The wave field is a superposition of freely propagating Gaussian packets
//! living on the extended configuration space `plane × {none, r, t}`, where the
//! discrete coordinate is the one-bit which-way tag. Optical elements act as
//! instantaneous packet-level unitaries; between them the closed form is
//! exact. A split-operator grid solver is kept alongside as an independent
//! oracle.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(a < b)` also rejects NaN

pub mod analysis;
pub mod error;
pub mod grid;
pub mod optics;
pub mod scenario;
pub mod trajectories;
pub mod wavefield;

pub use error::{Error, Result};
pub use optics::{DetectorId, DetectorRegion, EventKind, InterferometerGeometry, OpticalEvent, Plane2D};
pub use scenario::{FieldTimeline, Scenario, ScenarioParams, Tolerances};
pub use trajectories::{Arm, EnsembleResult, EnsembleRun, Endpoint, Trajectory, TrajectoryPoint};
pub use wavefield::{GaussianPacket, PhysicalConstants, PolarForm, WaveField, WwLabel};

/// Real 2-vector used for positions, wavevectors and velocities.
pub type Vec2 = nalgebra::Vector2<f64>;
/// Complex 2-vector (gradients of the wave field).
pub type CVec2 = nalgebra::Vector2<num_complex::Complex64>;
