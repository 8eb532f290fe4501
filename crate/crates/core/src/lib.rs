//! Simulator and verification harness for two stratified compressible
//! viscoelastic fluids in a horizontally periodic slab, written in Lagrangian
//! coordinates with a sharp internal interface at `y3 = 0`.
//!
//! The crate is generic over the scalar type via [`scalar::Real`] (`f32` or
//! `f64`); the aliases below pin the common `f64` instantiation.

pub mod error;
pub mod scalar;

pub mod banded;
pub mod field;
pub mod grid;
pub mod mat3;

pub mod kinematics;
pub mod stress;

pub mod lame;

pub mod evolve;

pub mod checks;
pub mod config;
pub mod diagnostics;
pub mod export;
pub mod sweep;

pub use error::{Error, Result};
pub use scalar::Real;

/// Concrete `f64` instantiations of the core types.
pub type Grid64 = grid::SlabGrid<f64>;
pub type Field64 = field::Field<f64>;
pub type PlaneField64 = field::PlaneField<f64>;
pub type MaterialParams64 = kinematics::MaterialParams<f64>;
pub type KinematicState64 = kinematics::KinematicState<f64>;
