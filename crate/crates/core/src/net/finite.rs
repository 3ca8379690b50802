use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DataModel, DataSource, LossSpec, Sample, Schedules};
use crate::net::kernel::{self, Trace};
use crate::net::{NetView, NetworkArch, Weights};
use crate::reduce::Reduction;
use crate::rng::RngState;
use crate::scalar::Scalar;

/// Forward and backward quantities of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePass<T> {
    /// `H_i` per layer, index `k` holding layer `k + 1`.
    pub pre: Vec<Vec<T>>,
    pub yhat: T,
    /// `Δ_i^H` per layer.
    pub delta_h: Vec<Vec<T>>,
    /// `Δ_i^w`, shaped like the weights.
    pub delta_w: Weights<T>,
}

/// `(ŷ(x), H)` of the finite network.
pub fn forward_finite<T: Scalar>(arch: &NetworkArch, weights: &Weights<T>, x: &[T]) -> Result<(T, Vec<Vec<T>>)> {
    let view = checked_view(arch, weights, x)?;
    let Trace { pre, yhat, .. } = kernel::forward(&view, x);
    Ok((yhat, pre))
}

pub fn backward_finite<T: Scalar>(
    arch: &NetworkArch,
    weights: &Weights<T>,
    sample: &Sample<T>,
    loss: &LossSpec,
) -> Result<FinitePass<T>> {
    let view = checked_view(arch, weights, &sample.x)?;
    let trace = kernel::forward(&view, &sample.x);
    let (_, d2) = loss.eval_unchecked(sample.y, trace.yhat);
    let delta_h = kernel::backward(&view, &trace, d2);
    let delta_w = kernel::delta_w(&view, &sample.x, &trace, &delta_h);
    Ok(FinitePass { pre: trace.pre, yhat: trace.yhat, delta_h, delta_w })
}

fn checked_view<'a, T: Scalar>(arch: &'a NetworkArch, weights: &'a Weights<T>, x: &[T]) -> Result<NetView<'a, T>> {
    weights.check_shape(arch)?;
    if x.len() != arch.input_dim() {
        return Err(Error::shape(format!("input has dimension {}, expected {}", x.len(), arch.input_dim())));
    }
    Ok(NetView::finite(arch, weights))
}

/// Physical time of step `k` at step size `h`.
#[inline]
pub(crate) fn grid_time<T: Scalar>(k: u64, h: T) -> T {
    T::of(k as f64) * h
}

/// `w_i − ε·(ξ_i(kε)·g_i)` for every layer, failing on non-finite results.
pub(crate) fn apply_update<T: Scalar>(
    weights: &Weights<T>,
    direction: &Weights<T>,
    schedules: &Schedules,
    eps: T,
    k: u64,
) -> Result<Weights<T>> {
    let xi = schedules.eval_all(grid_time(k, eps))?;
    let mut next = weights.clone();
    for (i, &x) in xi.iter().enumerate() {
        let g = direction.layer(i + 1);
        for (w, &gv) in next.layer_mut(i + 1).as_mut_slice().iter_mut().zip(g.as_slice()) {
            *w -= eps * (x * gv);
        }
    }
    if !next.all_finite() {
        return Err(Error::OverflowAtStep { step: k });
    }
    Ok(next)
}

/// One SGD update on a single sample.
#[allow(clippy::too_many_arguments)]
pub fn sgd_step<T: Scalar>(
    arch: &NetworkArch,
    weights: &Weights<T>,
    sample: &Sample<T>,
    loss: &LossSpec,
    schedules: &Schedules,
    eps: T,
    k: u64,
) -> Result<Weights<T>> {
    if !(eps > T::zero()) {
        return Err(Error::domain(format!("learning rate {eps} must be positive")));
    }
    check_depth(arch, schedules)?;
    let pass = backward_finite(arch, weights, sample, loss)?;
    apply_update(weights, &pass.delta_w, schedules, eps, k)
}

/// One gradient step on the panel average of `Δ^w`.
#[allow(clippy::too_many_arguments)]
pub fn full_batch_step<T: Scalar>(
    arch: &NetworkArch,
    weights: &Weights<T>,
    panel: &[Sample<T>],
    loss: &LossSpec,
    schedules: &Schedules,
    eps: T,
    k: u64,
    mode: Reduction,
) -> Result<Weights<T>> {
    if !(eps > T::zero()) {
        return Err(Error::domain(format!("learning rate {eps} must be positive")));
    }
    check_depth(arch, schedules)?;
    weights.check_shape(arch)?;
    let grad = kernel::mean_delta_w(&NetView::finite(arch, weights), panel, loss, mode)?;
    apply_update(weights, &grad.mean_delta_w, schedules, eps, k)
}

fn check_depth(arch: &NetworkArch, schedules: &Schedules) -> Result<()> {
    if schedules.depth() != arch.depth() {
        return Err(Error::config(format!(
            "{} schedules for {} layers",
            schedules.depth(),
            arch.depth()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchMode {
    /// One fresh sample per step.
    #[default]
    Single,
    /// The exact average over a finite dataset.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub eps: f64,
    pub steps: u64,
    /// Snapshot period in steps; `0` keeps only the first and last state.
    pub log_every: u64,
    pub batch: BatchMode,
    pub reduction: Reduction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSnapshot<T> {
    pub step: u64,
    pub weights: Weights<T>,
}

/// Logged SGD trajectory `𝐖(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteTrajectory<T> {
    pub eps: f64,
    pub snapshots: Vec<FiniteSnapshot<T>>,
}

impl<T: Scalar> FiniteTrajectory<T> {
    pub fn last(&self) -> &FiniteSnapshot<T> {
        self.snapshots.last().expect("trajectory holds the initial snapshot")
    }
}

/// A failed run together with whatever was produced before the failure.
#[derive(Debug)]
pub struct Interrupted<P> {
    pub error: Error,
    pub partial: P,
}

impl<P> From<Interrupted<P>> for Error {
    fn from(i: Interrupted<P>) -> Self {
        i.error
    }
}

/// Runs `steps` SGD (or full-batch) updates from `init`.
///
/// Samples are drawn i.i.d. from `data` with a generator derived from
/// `rng`; the run is a deterministic function of its arguments.
#[allow(clippy::too_many_arguments)]
pub fn train_finite<T: Scalar>(
    arch: &NetworkArch,
    init: &Weights<T>,
    data: &DataModel<T>,
    loss: &LossSpec,
    schedules: &Schedules,
    opts: &TrainOptions,
    rng: RngState,
) -> Result<FiniteTrajectory<T>, Interrupted<FiniteTrajectory<T>>> {
    let mut traj = FiniteTrajectory { eps: opts.eps, snapshots: vec![FiniteSnapshot { step: 0, weights: init.clone() }] };
    let fail = |error, traj| Err(Interrupted { error, partial: traj });
    if let Err(e) = init.check_shape(arch).and_then(|_| check_depth(arch, schedules)) {
        return fail(e, traj);
    }
    if !(opts.eps > 0.0) {
        return fail(Error::domain("learning rate must be positive"), traj);
    }
    let eps = T::of(opts.eps);
    let full_panel = match (opts.batch, data.source()) {
        (BatchMode::Full, DataSource::FiniteDataset(samples)) => Some(samples.as_slice()),
        (BatchMode::Full, _) => return fail(Error::config("full-batch training needs a finite dataset"), traj),
        (BatchMode::Single, _) => None,
    };
    let mut gen = rng.generator();
    let mut current = init.clone();
    for k in 0..opts.steps {
        let next = match full_panel {
            Some(panel) => full_batch_step(arch, &current, panel, loss, schedules, eps, k, opts.reduction),
            None => {
                let z = data.draw_sample(&mut gen);
                sgd_step(arch, &current, &z, loss, schedules, eps, k)
            }
        };
        current = match next {
            Ok(w) => w,
            Err(e) => return fail(e, traj),
        };
        let step = k + 1;
        if (opts.log_every > 0 && step % opts.log_every == 0) || step == opts.steps {
            traj.snapshots.push(FiniteSnapshot { step, weights: current.clone() });
        }
    }
    Ok(traj)
}
