//! Shared primitives: activations, losses, learning-rate schedules, data.

mod activation;
mod data;
mod loss;
mod schedule;

pub use activation::{ActivationConformance, ActivationKind, ActivationSpec, LayerRole};
pub use data::{DataModel, DataSource, InputLaw, Sample, Teacher};
pub use loss::{LossConformance, LossKind, LossSpec};
pub use schedule::{ScheduleForm, Schedules};
