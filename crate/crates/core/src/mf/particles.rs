use crate::error::{Error, Result};
use crate::model::{LossSpec, Sample, Schedules};
use crate::net::{kernel, NetView, NetworkArch, Weights};
use crate::reduce::Reduction;
use crate::scalar::Scalar;

/// Particle discretisation of the mean-field parameter `W(t)`.
///
/// Layer `i` holds `M_i` particles (sampled latent codes); `𝔼_{C_i}` is the
/// equal-weight average over the first `population(i)` of them. Any
/// particles beyond the population are tracers: they follow the mean-field
/// dynamics of their codes without entering any average.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem<T> {
    arch: NetworkArch,
    weights: Weights<T>,
    populations: Vec<usize>,
    t: T,
}

impl<T: Scalar> ParticleSystem<T> {
    /// All particles participate in the averages.
    pub fn new(arch: NetworkArch, weights: Weights<T>, t: T) -> Result<Self> {
        let populations = arch.widths().to_vec();
        Self::with_tracers(arch, weights, populations, t)
    }

    /// The first `populations[i]` particles of each layer are averaged over;
    /// the rest are tracers.
    pub fn with_tracers(arch: NetworkArch, weights: Weights<T>, populations: Vec<usize>, t: T) -> Result<Self> {
        let ps = ParticleSystem { arch, weights, populations, t };
        ps.view().check()?;
        if !ps.weights.all_finite() {
            return Err(Error::domain("particle weights must be finite"));
        }
        Ok(ps)
    }

    pub fn arch(&self) -> &NetworkArch {
        &self.arch
    }

    pub fn weights(&self) -> &Weights<T> {
        &self.weights
    }

    pub fn populations(&self) -> &[usize] {
        &self.populations
    }

    pub fn t(&self) -> T {
        self.t
    }

    pub fn view(&self) -> NetView<'_, T> {
        NetView { arch: &self.arch, weights: &self.weights, populations: &self.populations }
    }

    pub fn has_tracers(&self) -> bool {
        self.populations.iter().zip(self.arch.widths()).any(|(p, n)| p != n)
    }

    /// Tracer count of layer `i` (1-based).
    pub fn tracers(&self, i: usize) -> usize {
        self.arch.width(i) - self.populations[i - 1]
    }

    pub(crate) fn with_state(&self, weights: Weights<T>, t: T) -> Self {
        ParticleSystem { arch: self.arch.clone(), weights, populations: self.populations.clone(), t }
    }

    /// Weights among the first `widths[i]` tracers of each hidden layer,
    /// shaped like a finite network of those widths.
    pub fn tracer_block(&self, widths: &[usize]) -> Result<Weights<T>> {
        let depth = self.arch.depth();
        if widths.len() != depth || widths[depth - 1] != 1 {
            return Err(Error::shape("tracer block widths must match depth and end in 1"));
        }
        for i in 1..depth {
            if widths[i - 1] > self.tracers(i) {
                return Err(Error::shape(format!(
                    "layer {i} has {} tracers, {} requested",
                    self.tracers(i),
                    widths[i - 1]
                )));
            }
        }
        let offset = |i: usize| if i == depth { 0 } else { self.populations[i - 1] };
        let mut layers = vec![self.weights.layer(1).block(offset(1), 0, widths[0], self.arch.input_dim())];
        for i in 2..=depth {
            layers.push(self.weights.layer(i).block(offset(i - 1), offset(i), widths[i - 2], widths[i - 1]));
        }
        let arch = self.arch.with_widths(widths.to_vec())?;
        Weights::from_layers(&arch, layers)
    }
}

/// Everything the drift needs besides the state: the data panel standing
/// in for `𝔼_Z`, the loss, the schedules, and the reduction mode.
#[derive(Debug, Clone)]
pub struct MfProblem<T> {
    pub panel: Vec<Sample<T>>,
    pub loss: LossSpec,
    pub schedules: Schedules,
    pub reduction: Reduction,
}

impl<T: Scalar> MfProblem<T> {
    pub fn new(panel: Vec<Sample<T>>, loss: LossSpec, schedules: Schedules) -> Result<Self> {
        if panel.is_empty() {
            return Err(Error::config("data panel is empty"));
        }
        Ok(MfProblem { panel, loss, schedules, reduction: Reduction::Tree })
    }

    pub(crate) fn check(&self, arch: &NetworkArch) -> Result<()> {
        if self.panel.is_empty() {
            return Err(Error::config("data panel is empty"));
        }
        if self.schedules.depth() != arch.depth() {
            return Err(Error::config("schedule count differs from depth"));
        }
        if self.panel[0].x.len() != arch.input_dim() {
            return Err(Error::shape("panel input dimension differs from architecture"));
        }
        Ok(())
    }
}

/// `∂w_i/∂t = −ξ_i(t)·𝔼_Z[Δ_i^w(Z; W(t))]` for every layer and particle.
pub fn mf_drift<T: Scalar>(ps: &ParticleSystem<T>, problem: &MfProblem<T>) -> Result<Weights<T>> {
    problem.check(&ps.arch)?;
    drift_at(&ps.view(), ps.t, problem)
}

pub(crate) fn drift_at<T: Scalar>(view: &NetView<'_, T>, t: T, problem: &MfProblem<T>) -> Result<Weights<T>> {
    let grad = kernel::mean_delta_w(view, &problem.panel, &problem.loss, problem.reduction)?;
    let neg_xi: Vec<T> = problem.schedules.eval_all(t)?.into_iter().map(|x| -x).collect();
    Ok(grad.mean_delta_w.scale_layers(&neg_xi))
}
