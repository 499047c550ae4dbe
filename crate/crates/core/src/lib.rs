//! Distributed pseudo-spectral solver for the incompressible Navier-Stokes
//! equations on the triply periodic box `[0, 2 pi)^3`.

// Component loops index several parallel arrays at once.
#![allow(clippy::needless_range_loop, clippy::len_without_is_empty)]

pub mod cases;
pub mod checkpoint;
pub mod comm;
pub mod config;
pub mod diagnostics;
pub mod driver;
mod error;
pub mod fft;
pub mod kernels;
pub mod mesh;
pub mod real;
pub mod solver;

pub use error::{Error, Result};
pub use num_complex::Complex;
pub use real::{Precision, Real};
