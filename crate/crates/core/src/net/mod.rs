//! The finite-width network with `1/n` layer averaging, its backward
//! recursions, and the SGD loop.

mod arch;
mod finite;
pub(crate) mod kernel;
mod weights;

pub use arch::NetworkArch;
pub use finite::{
    backward_finite, forward_finite, full_batch_step, sgd_step, train_finite, BatchMode, FinitePass,
    FiniteSnapshot, FiniteTrajectory, Interrupted, TrainOptions,
};
pub(crate) use finite::grid_time;
pub use weights::{FiniteWeights, NetView, Weights};

#[cfg(test)]
mod tests;
