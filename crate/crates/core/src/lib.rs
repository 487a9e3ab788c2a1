//! Bloch and flow-augmented Bloch simulation: pulse sequences, a
//! discontinuous Galerkin upwind discretization for moving spins, explicit
//! Runge–Kutta integrators, signal formation and verification oracles.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`.

// `!(x > 0)` guards are written to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Kernels index several per-axis arrays with one loop variable.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod isochromat;
pub mod mesh_dg;
pub mod num;
pub mod physics;
pub mod quadrature;
pub mod scenarios;
pub mod sequence;
pub mod signal;
pub mod timeint;
pub mod units;
pub mod verify;

pub use error::{Error, Result};
pub use num::Real;

pub type Vec3 = physics::Vec3<f64>;
pub type Magnetization = physics::Magnetization<f64>;
pub type EffectiveField = physics::EffectiveField<f64>;
pub type TissueParams = physics::TissueParams<f64>;
pub type PhysicalConstants = physics::PhysicalConstants<f64>;
pub type SequenceTimeline = sequence::SequenceTimeline<f64>;
pub type RfPulse = sequence::RfPulse<f64>;
pub type Waveform = sequence::Waveform<f64>;
