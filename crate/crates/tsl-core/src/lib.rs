//! Tauberian analysis of distributions through localized wavelet-type transforms.

pub mod class_estimates;
pub mod error;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod numerics;
pub mod pde_examples;
pub mod regvar_besov;
pub mod signals;
pub mod synthesis;
pub mod transform;
#[cfg(test)]
mod testutil;

pub use error::{Result, TslError};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use grid::{Axis, EdgeCheck, ScaleLadder, SpectralGrid, UniformGrid};
