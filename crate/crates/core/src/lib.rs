//! Time-symmetric filtering and smoothing for classical signals coupled to
//! finite-dimensional quantum systems under Poisson and Gaussian measurement.

pub mod classical;
pub mod error;
pub mod grid;
pub mod hardy;
pub mod hybrid;
pub mod linalg;
pub mod magnetometer;
pub mod output;
pub mod record;
pub mod regress;
pub mod rng;
pub mod weakmeas;
pub mod wigner;

pub use error::{Error, Result};
pub use grid::{Axis, ClassicalGrid, DensityGrid};
pub use linalg::CMatrix;
pub use record::MeasurementRecord;
pub use rng::RngStream;
