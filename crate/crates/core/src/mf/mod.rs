//! Particle discretisation of the mean-field limit, fixed-step time
//! integration, and the auxiliary pair flows.

mod aux;
mod integrate;
mod particles;

pub use aux::{aux_flow, aux_flow_batch, probe_shape, AuxPairState, Direction};
pub use integrate::{integrate_mf, IntegrateOptions, MfTrajectory, Scheme};
pub use particles::{mf_drift, MfProblem, ParticleSystem};

use crate::model::Sample;
use crate::net::kernel::{self, Trace};
use crate::scalar::Scalar;

/// `(ŷ, H)` of the particle system at input `x`.
pub fn forward_particles<T: Scalar>(ps: &ParticleSystem<T>, x: &[T]) -> crate::Result<(T, Vec<Vec<T>>)> {
    if x.len() != ps.arch().input_dim() {
        return Err(crate::Error::Shape(format!(
            "input has dimension {}, expected {}",
            x.len(),
            ps.arch().input_dim()
        )));
    }
    let Trace { pre, yhat, .. } = kernel::forward(&ps.view(), x);
    Ok((yhat, pre))
}

/// Output of the particle system on every panel sample.
pub fn predictions<T: Scalar>(ps: &ParticleSystem<T>, panel: &[Sample<T>]) -> Vec<T> {
    let view = ps.view();
    panel.iter().map(|z| kernel::forward(&view, &z.x).yhat).collect()
}
