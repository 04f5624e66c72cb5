//! Grid-based classical filtering and smoothing under Poisson observations.

mod generator;
mod model;
mod simulate;
mod smoother;
mod steps;

pub use generator::{Accumulate, Generator};
pub use model::{ClassicalModel, ClassicalModelBuilder, DriftScheme, JumpKernel};
pub use smoother::{
    backward_sweep, forward_sweep, pairing_deviation, smooth, smoothing_densities, ForwardKind,
    SmootherOptions, Sweep,
};
pub use simulate::{path_intensities, sample_path};
pub(crate) use smoother::stored;
pub use steps::{
    ck_step, combine_smooth, pairing, pardoux_forward_step, retrodictive_backward_step, snyder_step,
};
