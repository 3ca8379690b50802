//! Forward and backward recursions shared by the finite network and the
//! particle system.
//!
//! Layer `i ≥ 2`: `H_i(j) = (1/p_{i−1}) Σ_{r < p_{i−1}} w_i(r, j) φ_{i−1}(H_{i−1}(r))`
//! and `Δ_{i−1}(r) = (1/p_i) Σ_{j < p_i} Δ_i(j) w_i(r, j) · φ'_{i−1}(H_{i−1}(r))`,
//! where `p` are the layer populations of the [`NetView`].

use crate::error::{Error, Result};
use crate::model::{LossSpec, Sample};
use crate::net::{NetView, Weights};
use crate::reduce::{pairwise_dot, tree_reduce, tree_rows, tree_rows_scratch, Reduction};
use crate::scalar::Scalar;

/// Per-layer forward quantities at one input. Index `k` holds layer `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace<T> {
    pub pre: Vec<Vec<T>>,
    pub act: Vec<Vec<T>>,
    pub dact: Vec<Vec<T>>,
    pub yhat: T,
}

pub fn forward<T: Scalar>(view: &NetView<'_, T>, x: &[T]) -> Trace<T> {
    let arch = view.arch;
    let depth = arch.depth();
    let mut pre = Vec::with_capacity(depth);
    let mut act = Vec::with_capacity(depth);
    let mut dact = Vec::with_capacity(depth);

    let w1 = view.weights.layer(1);
    let h1: Vec<T> = (0..w1.rows()).map(|j| pairwise_dot(w1.row(j), x)).collect();
    push_activation(arch.activation(1), h1, &mut pre, &mut act, &mut dact);

    for i in 2..=depth {
        let w = view.weights.layer(i);
        let rows = view.population(i - 1);
        let prev: &[T] = &act[i - 2];
        let mut h = vec![T::zero(); w.cols()];
        let mut scratch = vec![T::zero(); tree_rows_scratch(rows, w.cols())];
        tree_rows(rows, &mut h, &mut scratch, &|r, acc: &mut [T]| {
            let a = prev[r];
            for (o, &wv) in acc.iter_mut().zip(w.row(r)) {
                *o += wv * a;
            }
        });
        let denom = T::of_usize(rows);
        for v in h.iter_mut() {
            *v = *v / denom;
        }
        push_activation(arch.activation(i), h, &mut pre, &mut act, &mut dact);
    }
    let yhat = act[depth - 1][0];
    Trace { pre, act, dact, yhat }
}

fn push_activation<T: Scalar>(
    spec: &crate::model::ActivationSpec,
    h: Vec<T>,
    pre: &mut Vec<Vec<T>>,
    act: &mut Vec<Vec<T>>,
    dact: &mut Vec<Vec<T>>,
) {
    let (a, d): (Vec<T>, Vec<T>) = h.iter().map(|&v| spec.eval_unchecked(v)).unzip();
    pre.push(h);
    act.push(a);
    dact.push(d);
}

/// `Δ^H` for every layer, seeded with `∂₂𝓛(y, ŷ)`.
pub fn backward<T: Scalar>(view: &NetView<'_, T>, trace: &Trace<T>, d2: T) -> Vec<Vec<T>> {
    let depth = view.arch.depth();
    let mut delta: Vec<Vec<T>> = vec![Vec::new(); depth];
    delta[depth - 1] = vec![d2 * trace.dact[depth - 1][0]];
    for i in (2..=depth).rev() {
        let w = view.weights.layer(i);
        let p = view.population(i);
        let denom = T::of_usize(p);
        let upper = &delta[i - 1][..p];
        let lower: Vec<T> = (0..w.rows())
            .map(|r| pairwise_dot(&w.row(r)[..p], upper) / denom * trace.dact[i - 2][r])
            .collect();
        delta[i - 2] = lower;
    }
    delta
}

/// Adds `Δ^w` of one sample into `acc`.
pub fn accumulate_delta_w<T: Scalar>(acc: &mut Weights<T>, x: &[T], trace: &Trace<T>, delta: &[Vec<T>]) {
    let w1 = acc.layer_mut(1);
    for (j, &dj) in delta[0].iter().enumerate() {
        for (o, &xv) in w1.row_mut(j).iter_mut().zip(x) {
            *o += dj * xv;
        }
    }
    for i in 2..=delta.len() {
        let m = acc.layer_mut(i);
        let prev = &trace.act[i - 2];
        let d = &delta[i - 1];
        for (r, &a) in prev.iter().enumerate() {
            for (o, &dv) in m.row_mut(r).iter_mut().zip(d) {
                *o += a * dv;
            }
        }
    }
}

/// `Δ^w` of a single sample.
pub fn delta_w<T: Scalar>(view: &NetView<'_, T>, x: &[T], trace: &Trace<T>, delta: &[Vec<T>]) -> Weights<T> {
    let mut acc = Weights::zeros(view.arch);
    accumulate_delta_w(&mut acc, x, trace, delta);
    acc
}

/// Panel average of `Δ^w`.
pub struct BatchGradient<T> {
    pub mean_delta_w: Weights<T>,
}

/// `𝔼_Z[Δ^w(Z; ·)]` over the panel, with a fixed pairwise order over samples.
pub fn mean_delta_w<T: Scalar>(
    view: &NetView<'_, T>,
    panel: &[Sample<T>],
    loss: &LossSpec,
    mode: Reduction,
) -> Result<BatchGradient<T>> {
    if panel.is_empty() {
        return Err(Error::config("data panel is empty"));
    }
    let leaf = |range: std::ops::Range<usize>| {
        let mut acc = Weights::zeros(view.arch);
        for z in &panel[range] {
            let trace = forward(view, &z.x);
            let (_, d2) = loss.eval_unchecked(z.y, trace.yhat);
            let delta = backward(view, &trace, d2);
            accumulate_delta_w(&mut acc, &z.x, &trace, &delta);
        }
        acc
    };
    let combine = |mut a: Weights<T>, b: Weights<T>| {
        a.add_assign(&b);
        a
    };
    let sum = tree_reduce(panel.len(), mode, &leaf, &combine);
    let n = T::of_usize(panel.len());
    Ok(BatchGradient { mean_delta_w: sum.map(|v| v / n) })
}

/// `𝔼_Z[𝓛(Y, ŷ(X))]` over the panel.
pub fn mean_loss<T: Scalar>(view: &NetView<'_, T>, panel: &[Sample<T>], loss: &LossSpec, mode: Reduction) -> Result<T> {
    if panel.is_empty() {
        return Err(Error::config("data panel is empty"));
    }
    let leaf = |range: std::ops::Range<usize>| {
        panel[range].iter().fold(T::zero(), |s, z| s + loss.eval_unchecked(z.y, forward(view, &z.x).yhat).0)
    };
    let total = tree_reduce(panel.len(), mode, &leaf, &|a, b| a + b);
    Ok(total / T::of_usize(panel.len()))
}
