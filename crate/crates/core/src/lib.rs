//! Spectral vector calculus and dynamics on the flat 3-torus.
//!
//! Fields live in [`field`] as truncated Fourier series; [`calculus`] holds
//! the differential operators and the helicity family; [`transport`] moves
//! fields and points with volume-preserving maps; [`paths`] builds
//! constant-helicity paths; [`annulus`] studies resonant twist maps; and
//! [`experiments`] composes them into reproducible reports.

pub mod annulus;
pub mod calculus;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod field;
pub mod parallel;
pub mod paths;
pub mod transport;

pub use error::{Error, Result};
pub use field::{
    evaluate_at, from_grid, make_field, to_grid, FieldSpec, GridField, GridFlags, GridScalar,
    ScalarSpectral, SpectralField, Vec3, WaveVector,
};
