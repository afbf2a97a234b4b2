//! Cartesian MRI reconstruction toolkit.
//!
//! The crate covers the whole measurement chain used by the benchmark harness:
//! centered unitary Fourier transforms, Cartesian undersampling masks, the
//! multi-coil forward model with root-sum-of-squares and emulated single-coil
//! combination, DB2 wavelets, sparsity regularizers with their proximal maps,
//! proximal-gradient and conjugate-gradient solvers, image-quality metrics and
//! an ellipse phantom simulator.
//!
//! All volumes use a dense row-major `(slice, coil, height, width)` layout.

pub mod coils;
pub mod error;
pub mod fourier;
pub mod masking;
pub mod metrics;
pub mod phantom;
pub mod regularizers;
pub mod solver;
pub mod tensor;
pub mod wavelet;

pub use error::{CoreError, Result};
pub use tensor::{
    center_crop, validate_volume, Acquisition, ComplexTensor, CropSpec, ImageVolume,
    KSpaceVolume, RealVolume, Violation,
};

/// Complex sample type used throughout the crate.
pub type C64 = num_complex::Complex64;
