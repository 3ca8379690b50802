//! Auxiliary pair flows against a frozen mean-field trajectory.
//!
//! For layer `i`, a probe `(a_i, a_{i+1})` is a pair of functions on the
//! neighbouring layers (a vector in `ℝ^d` when `i = 1`) evolving as
//!
//! ```text
//! ∂_t a_i(c_{i−1})   = −ξ_i(t)     𝔼_Z[Δ_i^a(Z, a_i, a_{i+1}) φ_{i−1}(H_{i−1}(X, c_{i−1}))]
//! ∂_t a_{i+1}(c_{i+1}) = −ξ_{i+1}(t) 𝔼_Z[Δ_{i+1}^H(Z, c_{i+1}) φ_i(H_i^a(Z, a_i))]
//! H_i^a(z, f)        = 𝔼_{C_{i−1}}[f(C_{i−1}) φ_{i−1}(H_{i−1}(x, C_{i−1}))]
//! Δ_i^a(z, f, g)     = 𝔼_{C_{i+1}}[Δ_{i+1}^H(z, C_{i+1}) g(C_{i+1})] φ_i'(H_i^a(z, f))
//! ```
//!
//! with the background `H`, `Δ^H` taken from the trajectory. For `i = 1`,
//! `H_1^a = ⟨a_1, x⟩` and `φ_0(H_0)` is replaced by `x`.
//!
//! The reverse flow runs the same ODE backwards from `T`; both directions
//! use the trajectory's scheme and grid. Background stage states are rebuilt
//! from each stored grid checkpoint with the integrator's own stage routine,
//! so a probe started on an actual particle reproduces that particle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mf::integrate::{grid_steps, rk4_combine, stage_states, MfTrajectory, Scheme};
use crate::mf::particles::{drift_at, MfProblem, ParticleSystem};
use crate::net::{grid_time, kernel, NetView, Weights};
use crate::reduce::{pairwise_dot, tree_reduce, tree_rows, tree_rows_scratch};
use crate::scalar::Scalar;

/// State of one auxiliary pair flow at layer `i ∈ {1, …, L−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxPairState<T> {
    pub layer: usize,
    /// `a_i`: length `d` for `i = 1`, else one value per particle of layer `i − 1`.
    pub left: Vec<T>,
    /// `a_{i+1}`: one value per particle of layer `i + 1`.
    pub right: Vec<T>,
}

impl<T: Scalar> AuxPairState<T> {
    /// The pair `(w_i(·, c), w_{i+1}(c, ·))` of particle `index` in layer `layer`.
    pub fn from_particle(ps: &ParticleSystem<T>, layer: usize, index: usize) -> Result<Self> {
        check_layer(ps, layer)?;
        if index >= ps.arch().width(layer) {
            return Err(Error::shape(format!("layer {layer} has no particle {index}")));
        }
        let w = ps.weights();
        let left = if layer == 1 {
            w.layer(1).row(index).to_vec()
        } else {
            (0..ps.populations()[layer - 2]).map(|r| w.layer(layer)[(r, index)]).collect()
        };
        let right = w.layer(layer + 1).row(index)[..ps.populations()[layer]].to_vec();
        Ok(AuxPairState { layer, left, right })
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.left
            .iter()
            .zip(&other.left)
            .chain(self.right.iter().zip(&other.right))
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    fn check(&self, ps: &ParticleSystem<T>) -> Result<()> {
        check_layer(ps, self.layer)?;
        let (left, right) = probe_shape(ps, self.layer);
        if self.left.len() != left || self.right.len() != right {
            return Err(Error::shape(format!(
                "probe at layer {} has shape ({}, {}), expected ({left}, {right})",
                self.layer,
                self.left.len(),
                self.right.len()
            )));
        }
        Ok(())
    }
}

fn check_layer<T: Scalar>(ps: &ParticleSystem<T>, layer: usize) -> Result<()> {
    if layer == 0 || layer >= ps.arch().depth() {
        return Err(Error::shape(format!("aux flow layer {layer} outside 1..{}", ps.arch().depth())));
    }
    Ok(())
}

/// `(len(a_i), len(a_{i+1}))` for layer `i`.
pub fn probe_shape<T: Scalar>(ps: &ParticleSystem<T>, layer: usize) -> (usize, usize) {
    let left = if layer == 1 { ps.arch().input_dim() } else { ps.populations()[layer - 2] };
    (left, ps.populations()[layer])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// From `t = 0` to `T` against `W(t)`.
    Forward,
    /// From `T` back to `0`, i.e. forward in `s = T − t` against `W(T − s)`.
    Reverse,
}

/// Flows one probe over `[0, horizon]` (default: the whole trajectory).
pub fn aux_flow<T: Scalar>(
    traj: &MfTrajectory<T>,
    problem: &MfProblem<T>,
    probe: &AuxPairState<T>,
    direction: Direction,
    horizon: Option<f64>,
) -> Result<AuxPairState<T>> {
    let mut out = aux_flow_batch(traj, problem, std::slice::from_ref(probe), direction, horizon)?;
    Ok(out.pop().expect("one probe in, one probe out"))
}

/// Per-sample background quantities for one stage state.
struct Background<T> {
    /// `φ_{i−1}(H_{i−1}(x, ·))` over the population of layer `i − 1` (or `x`).
    lower: Vec<Vec<T>>,
    /// `Δ_{i+1}^H(z, ·)` over the population of layer `i + 1`.
    upper: Vec<Vec<T>>,
    xi_left: T,
    xi_right: T,
}

fn background<T: Scalar>(
    view: &NetView<'_, T>,
    t: T,
    layer: usize,
    problem: &MfProblem<T>,
) -> Result<Background<T>> {
    let p_lower = if layer == 1 { 0 } else { view.population(layer - 1) };
    let p_upper = view.population(layer + 1);
    let mut lower = Vec::with_capacity(problem.panel.len());
    let mut upper = Vec::with_capacity(problem.panel.len());
    for z in &problem.panel {
        let trace = kernel::forward(view, &z.x);
        let (_, d2) = problem.loss.eval_unchecked(z.y, trace.yhat);
        let delta = kernel::backward(view, &trace, d2);
        lower.push(if layer == 1 { z.x.clone() } else { trace.act[layer - 2][..p_lower].to_vec() });
        upper.push(delta[layer][..p_upper].to_vec());
    }
    Ok(Background {
        lower,
        upper,
        xi_left: problem.schedules.eval(layer, t)?,
        xi_right: problem.schedules.eval(layer + 1, t)?,
    })
}

/// Right-hand side of the forward pair flow.
fn pair_rhs<T: Scalar>(
    probe: &AuxPairState<T>,
    bg: &Background<T>,
    arch: &crate::net::NetworkArch,
    problem: &MfProblem<T>,
) -> AuxPairState<T> {
    let layer = probe.layer;
    let act = arch.activation(layer);
    let n_left = probe.left.len();
    let n_right = probe.right.len();
    let right_denom = T::of_usize(n_right);
    let leaf = |range: std::ops::Range<usize>| {
        let mut left = vec![T::zero(); n_left];
        let mut right = vec![T::zero(); n_right];
        let mut h = [T::zero()];
        let mut scratch = vec![T::zero(); tree_rows_scratch(n_left, 1)];
        for k in range {
            let lower = &bg.lower[k];
            let upper = &bg.upper[k];
            let pre = if layer == 1 {
                pairwise_dot(&probe.left, lower)
            } else {
                tree_rows(n_left, &mut h, &mut scratch, &|r, acc: &mut [T]| acc[0] += probe.left[r] * lower[r]);
                h[0] / T::of_usize(n_left)
            };
            let (phi, dphi) = act.eval_unchecked(pre);
            let delta = pairwise_dot(&probe.right, upper) / right_denom * dphi;
            for (o, &l) in left.iter_mut().zip(lower) {
                *o += l * delta;
            }
            for (o, &u) in right.iter_mut().zip(upper) {
                *o += phi * u;
            }
        }
        (left, right)
    };
    let combine = |mut a: (Vec<T>, Vec<T>), b: (Vec<T>, Vec<T>)| {
        a.0.iter_mut().zip(&b.0).for_each(|(x, y)| *x += *y);
        a.1.iter_mut().zip(&b.1).for_each(|(x, y)| *x += *y);
        a
    };
    let (left, right) = tree_reduce(bg.lower.len(), problem.reduction, &leaf, &combine);
    let n = T::of_usize(bg.lower.len());
    let (nl, nr) = (-bg.xi_left, -bg.xi_right);
    AuxPairState {
        layer,
        left: left.into_iter().map(|v| nl * (v / n)).collect(),
        right: right.into_iter().map(|v| nr * (v / n)).collect(),
    }
}

fn axpy_probe<T: Scalar>(x: &AuxPairState<T>, a: T, k: &AuxPairState<T>) -> AuxPairState<T> {
    AuxPairState {
        layer: x.layer,
        left: x.left.iter().zip(&k.left).map(|(&u, &v)| u + a * v).collect(),
        right: x.right.iter().zip(&k.right).map(|(&u, &v)| u + a * v).collect(),
    }
}

/// Flows every probe over `[0, horizon]` in the given direction.
pub fn aux_flow_batch<T: Scalar>(
    traj: &MfTrajectory<T>,
    problem: &MfProblem<T>,
    probes: &[AuxPairState<T>],
    direction: Direction,
    horizon: Option<f64>,
) -> Result<Vec<AuxPairState<T>>> {
    if traj.checkpoint_every != 1 {
        return Err(Error::Range("aux flows need a checkpoint at every grid step".into()));
    }
    let base = traj.first();
    problem.check(base.arch())?;
    let horizon = horizon.unwrap_or_else(|| traj.horizon());
    let n_steps = grid_steps(traj.h, horizon)?;
    if n_steps > traj.steps() || traj.checkpoints.len() as u64 != traj.steps() + 1 {
        return Err(Error::Range(format!(
            "requested horizon {horizon} beyond trajectory horizon {}",
            traj.horizon()
        )));
    }
    for p in probes {
        p.check(base)?;
    }
    if probes.is_empty() {
        return Ok(Vec::new());
    }
    let layer = probes[0].layer;
    if probes.iter().any(|p| p.layer != layer) {
        return Err(Error::shape("all probes in a batch must share a layer"));
    }

    let h = T::of(traj.h);
    let (signed_h, arch, pops) = match direction {
        Direction::Forward => (h, base.arch(), base.populations()),
        Direction::Reverse => (-h, base.arch(), base.populations()),
    };
    let f = |w: &Weights<T>, t: T| drift_at(&NetView { arch, weights: w, populations: pops }, t, problem);

    let mut state = probes.to_vec();
    for m in 0..n_steps {
        let n = match direction {
            Direction::Forward => m,
            Direction::Reverse => n_steps - 1 - m,
        };
        let (ckpt, t0) = match direction {
            Direction::Forward => (&traj.checkpoints[n as usize], grid_time(n, h)),
            Direction::Reverse => (&traj.checkpoints[n as usize + 1], grid_time(n + 1, h)),
        };
        let stages = stage_states(traj.scheme, ckpt.weights(), t0, signed_h, &f)?;
        let backgrounds = stages
            .states
            .iter()
            .zip(&stages.times)
            .map(|(w, &t)| background(&NetView { arch, weights: w, populations: pops }, t, layer, problem))
            .collect::<Result<Vec<_>>>()?;
        for a in state.iter_mut() {
            *a = match traj.scheme {
                Scheme::Euler => {
                    let k1 = pair_rhs(a, &backgrounds[0], arch, problem);
                    axpy_probe(a, signed_h, &k1)
                }
                Scheme::Rk4 => {
                    let half = signed_h * T::of(0.5);
                    let k1 = pair_rhs(a, &backgrounds[0], arch, problem);
                    let a2 = axpy_probe(a, half, &k1);
                    let k2 = pair_rhs(&a2, &backgrounds[1], arch, problem);
                    let a3 = axpy_probe(a, half, &k2);
                    let k3 = pair_rhs(&a3, &backgrounds[2], arch, problem);
                    let a4 = axpy_probe(a, signed_h, &k3);
                    let k4 = pair_rhs(&a4, &backgrounds[3], arch, problem);
                    let h6 = signed_h / T::of(6.0);
                    let comb = |x: &[T], k1: &[T], k2: &[T], k3: &[T], k4: &[T]| -> Vec<T> {
                        (0..x.len()).map(|e| rk4_combine(x[e], k1[e], k2[e], k3[e], k4[e], h6)).collect()
                    };
                    AuxPairState {
                        layer,
                        left: comb(&a.left, &k1.left, &k2.left, &k3.left, &k4.left),
                        right: comb(&a.right, &k1.right, &k2.right, &k3.right, &k4.right),
                    }
                }
            };
            if a.left.iter().chain(&a.right).any(|v| !v.is_finite()) {
                return Err(Error::OverflowAtTime { time: stages.times[stages.times.len() - 1].as_f64() });
            }
        }
    }
    Ok(state)
}
