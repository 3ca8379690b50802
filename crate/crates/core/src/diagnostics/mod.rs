//! Measurable quantities: population loss, convergence-mode metrics,
//! coupling distances, gradient checks and the round-trip diversity test.

mod csv;

pub use csv::{metrics_header, write_metrics_csv};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mf::{aux_flow_batch, AuxPairState, Direction, MfProblem, MfTrajectory, ParticleSystem};
use crate::model::{LossSpec, Sample};
use crate::net::{forward_finite, kernel, FiniteTrajectory, NetView, NetworkArch, Weights};
use crate::reduce::{tree_reduce, Reduction};
use crate::scalar::Scalar;

/// One row of the metrics series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub t: f64,
    pub pop_loss: f64,
    /// `max_{c_{L−1}} |∂_t w_L(t, c_{L−1})|` over active particles.
    pub esssup_dwl: f64,
    /// Weighted distances to the reference, layers `1..=L`.
    pub weighted_l1: Vec<f64>,
    pub coupling_dist: Option<f64>,
}

/// `𝔼_Z[𝓛(Y, ŷ(X))]` over the panel.
pub fn population_loss<T: Scalar>(view: &NetView<'_, T>, panel: &[Sample<T>], loss: &LossSpec) -> Result<T> {
    view.check()?;
    kernel::mean_loss(view, panel, loss, Reduction::Tree)
}

/// Per-layer weighted distances between `state` and `reference`:
///
/// ```text
/// layer 1:  mean_{c₁} ‖w₁ − w̄₁‖ · b₁(c₁)
/// layer i:  mean_{c_{i−1}, c_i} |w_i − w̄_i| · b_i(c_i)
/// b_L = 1,  b_j(c_j) = mean_{c_{j+1}} |w̄_{j+1}(c_j, c_{j+1})| · b_{j+1}(c_{j+1})
/// ```
///
/// i.e. `𝔼[|w_i − w̄_i| · Π_{j>i} |w̄_j|]` with the product integrated
/// along the chain. Averages run over the active particles of each layer.
pub fn weighted_l1<T: Scalar>(state: &NetView<'_, T>, reference: &NetView<'_, T>) -> Result<Vec<T>> {
    state.check()?;
    reference.check()?;
    if state.weights.layers().iter().zip(reference.weights.layers()).any(|(a, b)| a.shape() != b.shape())
        || state.populations != reference.populations
    {
        return Err(Error::shape("state and reference differ in shape"));
    }
    let depth = state.arch.depth();
    let pop = |i: usize| state.population(i);
    let wbar = reference.weights;
    // b[i − 1] = b_i over the active particles of layer i.
    let mut b: Vec<Vec<T>> = vec![Vec::new(); depth];
    b[depth - 1] = vec![T::one(); pop(depth)];
    for j in (1..depth).rev() {
        let m = wbar.layer(j + 1);
        let upper = &b[j];
        b[j - 1] = (0..pop(j))
            .map(|r| {
                let s = m.row(r)[..pop(j + 1)].iter().zip(upper).fold(T::zero(), |s, (&w, &u)| s + w.abs() * u);
                s / T::of_usize(pop(j + 1))
            })
            .collect();
    }
    let mut out = Vec::with_capacity(depth);
    let (w1, wb1) = (state.weights.layer(1), wbar.layer(1));
    let s1 = (0..pop(1)).fold(T::zero(), |s, j| {
        let n = w1.row(j).iter().zip(wb1.row(j)).fold(T::zero(), |a, (&x, &y)| a + (x - y) * (x - y)).sqrt();
        s + n * b[0][j]
    });
    out.push(s1 / T::of_usize(pop(1)));
    for i in 2..=depth {
        let (w, wb) = (state.weights.layer(i), wbar.layer(i));
        let mut s = T::zero();
        for r in 0..pop(i - 1) {
            for c in 0..pop(i) {
                s += (w[(r, c)] - wb[(r, c)]).abs() * b[i - 1][c];
            }
        }
        out.push(s / T::of_usize(pop(i - 1) * pop(i)));
    }
    Ok(out)
}

/// `max_{c_{L−1}} |ξ_L(t) 𝔼_Z[Δ_L^w(Z, c_{L−1})]|` over active particles.
pub fn esssup_dwl<T: Scalar>(view: &NetView<'_, T>, t: T, problem: &MfProblem<T>) -> Result<T> {
    let depth = view.arch.depth();
    let grad = kernel::mean_delta_w(view, &problem.panel, &problem.loss, problem.reduction)?;
    let xi = problem.schedules.eval(depth, t)?;
    let wl = grad.mean_delta_w.layer(depth).column(0);
    Ok(wl[..view.population(depth - 1)].iter().fold(T::zero(), |m, &g| m.max((xi * g).abs())))
}

fn record<T: Scalar>(
    t: T,
    state: &NetView<'_, T>,
    reference: &NetView<'_, T>,
    problem: &MfProblem<T>,
) -> Result<MetricsRecord> {
    let pop_loss = kernel::mean_loss(state, &problem.panel, &problem.loss, problem.reduction)?;
    Ok(MetricsRecord {
        t: t.as_f64(),
        pop_loss: pop_loss.as_f64(),
        esssup_dwl: esssup_dwl(state, t, problem)?.as_f64(),
        weighted_l1: weighted_l1(state, reference)?.into_iter().map(Scalar::as_f64).collect(),
        coupling_dist: None,
    })
}

/// Metrics at every checkpoint of a mean-field run, measured against
/// `reference` (typically the final checkpoint, standing in for `w̄`).
pub fn convergence_metrics<T: Scalar>(
    traj: &MfTrajectory<T>,
    reference: &ParticleSystem<T>,
    problem: &MfProblem<T>,
) -> Result<Vec<MetricsRecord>> {
    let ref_view = reference.view();
    traj.checkpoints.iter().map(|ps| record(ps.t(), &ps.view(), &ref_view, problem)).collect()
}

/// The same metrics for a finite run at times `kε`; the reference is the
/// last snapshot and `esssup_dwL` is the full-panel drift of `w_L`.
pub fn finite_metrics<T: Scalar>(
    arch: &NetworkArch,
    traj: &FiniteTrajectory<T>,
    problem: &MfProblem<T>,
) -> Result<Vec<MetricsRecord>> {
    let last = traj.last();
    let ref_view = NetView::finite(arch, &last.weights);
    traj.snapshots
        .iter()
        .map(|s| {
            let t = T::of(s.step as f64) * T::of(traj.eps);
            record(t, &NetView::finite(arch, &s.weights), &ref_view, problem)
        })
        .collect()
}

/// Coupling distances at aligned times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSeries {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub running_max: Vec<f64>,
}

impl CouplingSeries {
    pub fn max(&self) -> f64 {
        self.running_max.last().copied().unwrap_or(0.0)
    }
}

/// `max_i mean |𝐰_i(k) − w_i(kε, C_{i−1}, C_i)|` at every finite snapshot.
///
/// Each snapshot at step `k` must meet a mean-field checkpoint at `t = kε`.
/// If the particle system carries tracers, the finite network is compared
/// with the leading tracer block of matching widths; otherwise with the
/// whole system.
pub fn coupling_distance<T: Scalar>(
    arch: &NetworkArch,
    finite: &FiniteTrajectory<T>,
    mf: &MfTrajectory<T>,
) -> Result<CouplingSeries> {
    let mut times = Vec::with_capacity(finite.snapshots.len());
    let mut distances = Vec::with_capacity(finite.snapshots.len());
    let mut running_max = Vec::with_capacity(finite.snapshots.len());
    let mut idx = 0usize;
    let mut worst = 0.0f64;
    for snap in &finite.snapshots {
        let t = snap.step as f64 * finite.eps;
        let tol = 1e-9 * t.abs().max(1.0);
        while idx < mf.checkpoints.len() && mf.checkpoints[idx].t().as_f64() < t - tol {
            idx += 1;
        }
        let ps = match mf.checkpoints.get(idx) {
            Some(ps) if (ps.t().as_f64() - t).abs() <= tol => ps,
            _ => return Err(Error::Range(format!("no mean-field checkpoint at t = {t} (step {})", snap.step))),
        };
        let other = if ps.has_tracers() {
            ps.tracer_block(arch.widths())?
        } else {
            ps.weights().clone()
        };
        snap.weights.check_shape(arch)?;
        other.check_shape(arch)?;
        let dist = snap.weights.mean_abs_diff(&other).into_iter().fold(0.0f64, |m, v| m.max(v.as_f64()));
        worst = worst.max(dist);
        times.push(t);
        distances.push(dist);
        running_max.push(worst);
    }
    Ok(CouplingSeries { times, distances, running_max })
}

/// Worst disagreement between the scaled backward pass and central
/// differences of the sample loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(layer, row, col)` of the worst entry.
    pub location: (usize, usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Magnitude below which gradient entries are compared absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-4;

/// Compares `Δ_i^w / (n_i n_{i−1})` (layer 1: `Δ₁^w / n₁`) with central
/// differences of `𝓛(y, ŷ(x; ·))` at perturbation `h`.
///
/// The relative error of an entry is `|a − b| / max(|a|, |b|, floor)` with
/// `floor =` [`GRAD_CHECK_FLOOR`].
pub fn grad_check<T: Scalar>(
    arch: &NetworkArch,
    weights: &Weights<T>,
    sample: &Sample<T>,
    loss: &LossSpec,
    h: f64,
) -> Result<GradCheckReport> {
    if !(h > 0.0) {
        return Err(Error::domain("perturbation must be positive"));
    }
    let pass = crate::net::backward_finite(arch, weights, sample, loss)?;
    let value = |w: &Weights<T>| -> Result<f64> {
        let (yhat, _) = forward_finite(arch, w, &sample.x)?;
        Ok(loss.eval_unchecked(sample.y.as_f64(), yhat.as_f64()).0)
    };
    let mut report =
        GradCheckReport { max_rel_error: 0.0, location: (1, 0, 0), analytic: 0.0, numeric: 0.0, checked: 0 };
    let mut w = weights.clone();
    for i in 1..=arch.depth() {
        let scale = if i == 1 { arch.width(1) } else { arch.width(i) * arch.width(i - 1) } as f64;
        let (rows, cols) = weights.layer(i).shape();
        for r in 0..rows {
            for c in 0..cols {
                let w0 = weights.layer(i)[(r, c)];
                w.layer_mut(i)[(r, c)] = w0 + T::of(h);
                let plus = value(&w)?;
                w.layer_mut(i)[(r, c)] = w0 - T::of(h);
                let minus = value(&w)?;
                w.layer_mut(i)[(r, c)] = w0;
                // Recover the realised step, which may differ from h in rounding.
                let step = ((w0 + T::of(h)) - (w0 - T::of(h))).as_f64();
                let numeric = (plus - minus) / step;
                let analytic = pass.delta_w.layer(i)[(r, c)].as_f64() / scale;
                let denom = analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
                let err = (analytic - numeric).abs() / denom;
                report.checked += 1;
                if err > report.max_rel_error || report.checked == 1 {
                    report = GradCheckReport { max_rel_error: err, location: (i, r, c), analytic, numeric, ..report };
                }
            }
        }
    }
    Ok(report)
}

/// `‖forward(reverse(u⁺)) − u⁺‖_∞` for every probe.
pub fn diversity_roundtrip<T: Scalar>(
    traj: &MfTrajectory<T>,
    problem: &MfProblem<T>,
    probes: &[AuxPairState<T>],
    horizon: Option<f64>,
) -> Result<Vec<T>> {
    let back = aux_flow_batch(traj, problem, probes, Direction::Reverse, horizon)?;
    let there = aux_flow_batch(traj, problem, &back, Direction::Forward, horizon)?;
    Ok(there.iter().zip(probes).map(|(a, u)| a.max_abs_diff(u)).collect())
}

/// `𝔼_Z |H_L(X; a) − H_L(X; b)|`, the output-layer gap that the
/// weighted distances control.
pub fn output_preactivation_gap<T: Scalar>(a: &NetView<'_, T>, b: &NetView<'_, T>, panel: &[Sample<T>]) -> Result<T> {
    a.check()?;
    b.check()?;
    if panel.is_empty() {
        return Err(Error::config("data panel is empty"));
    }
    let depth = a.arch.depth();
    let leaf = |range: std::ops::Range<usize>| {
        panel[range].iter().fold(T::zero(), |s, z| {
            let ha = kernel::forward(a, &z.x).pre[depth - 1][0];
            let hb = kernel::forward(b, &z.x).pre[depth - 1][0];
            s + (ha - hb).abs()
        })
    };
    let total = tree_reduce(panel.len(), Reduction::Tree, &leaf, &|x, y| x + y);
    Ok(total / T::of_usize(panel.len()))
}

#[cfg(test)]
mod tests;
