//! Hybrid classical–quantum filtering, retrodiction and smoothing.

mod model;
mod operator;
mod simulate;
mod smoother;
mod steps;
#[cfg(test)]
mod tests;

pub use model::{GaussianChannels, HybridModel, HybridModelBuilder, JumpChannel, MeasurementOperatorSet, PointOp};
pub use operator::HybridOperator;
pub use simulate::{sample_trajectory, HybridTrajectory};
pub use smoother::{
    backward_sweep, forward_sweep, pairing_deviation, smooth, HybridForwardKind, HybridSmootherOptions,
    HybridSweep,
};
pub use steps::{
    combined_step_backward, combined_step_forward, effect_backward_step, filtered_gaussian_innovation,
    hybrid_prior_step, quantum_snyder_step, quantum_zakai_step, smooth_density, HybridStepper,
};
