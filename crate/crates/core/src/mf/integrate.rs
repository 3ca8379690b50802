use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mf::particles::{drift_at, MfProblem, ParticleSystem};
use crate::net::{grid_time, Interrupted, NetView, Weights};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Euler,
    #[default]
    Rk4,
}

impl Scheme {
    pub fn order(self) -> u32 {
        match self {
            Scheme::Euler => 1,
            Scheme::Rk4 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::Rk4 => "rk4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub h: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    /// Checkpoint period in steps (`≥ 1`).
    pub checkpoint_every: u64,
}

/// Checkpoints `(t_m, W(t_m))` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MfTrajectory<T> {
    pub h: f64,
    pub scheme: Scheme,
    pub checkpoint_every: u64,
    pub checkpoints: Vec<ParticleSystem<T>>,
}

impl<T: Scalar> MfTrajectory<T> {
    pub fn first(&self) -> &ParticleSystem<T> {
        &self.checkpoints[0]
    }

    pub fn last(&self) -> &ParticleSystem<T> {
        self.checkpoints.last().expect("trajectory holds the initial state")
    }

    /// Number of integrator steps covered.
    pub fn steps(&self) -> u64 {
        steps_from_times(self.last().t().as_f64(), self.h)
    }

    pub fn horizon(&self) -> f64 {
        self.last().t().as_f64()
    }

    pub fn times(&self) -> Vec<f64> {
        self.checkpoints.iter().map(|c| c.t().as_f64()).collect()
    }
}

fn steps_from_times(t: f64, h: f64) -> u64 {
    (t / h).round() as u64
}

/// Number of grid steps of size `h` in `[0, horizon]`, rejecting horizons
/// that are not multiples of `h`.
pub(crate) fn grid_steps(h: f64, horizon: f64) -> Result<u64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::domain(format!("step size {h} must be positive")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::domain(format!("horizon {horizon} must be nonnegative")));
    }
    let n = (horizon / h).round();
    if (n * h - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::config(format!("horizon {horizon} is not a multiple of the step {h}")));
    }
    Ok(n as u64)
}

/// Stage states of one step from `x` at `t` with signed step `h`:
/// `[x]` for Euler, `[x, x + h/2·k₁, x + h/2·k₂, x + h·k₃]` for RK4.
pub(crate) struct Stages<T> {
    pub times: Vec<T>,
    pub states: Vec<Weights<T>>,
    pub slopes: Vec<Weights<T>>,
}

pub(crate) fn stage_states<T: Scalar>(
    scheme: Scheme,
    x: &Weights<T>,
    t: T,
    h: T,
    f: &impl Fn(&Weights<T>, T) -> Result<Weights<T>>,
) -> Result<Stages<T>> {
    let k1 = f(x, t)?;
    match scheme {
        Scheme::Euler => Ok(Stages { times: vec![t], states: vec![x.clone()], slopes: vec![k1] }),
        Scheme::Rk4 => {
            let half = h * T::of(0.5);
            let t_mid = t + half;
            let x2 = x.axpy(half, &k1);
            let k2 = f(&x2, t_mid)?;
            let x3 = x.axpy(half, &k2);
            let k3 = f(&x3, t_mid)?;
            let x4 = x.axpy(h, &k3);
            Ok(Stages {
                times: vec![t, t_mid, t_mid, t + h],
                states: vec![x.clone(), x2, x3, x4],
                slopes: vec![k1, k2, k3],
            })
        }
    }
}

/// `x + h/6·(k₁ + 2k₂ + 2k₃ + k₄)` entrywise.
#[inline]
pub(crate) fn rk4_combine<T: Scalar>(x: T, k1: T, k2: T, k3: T, k4: T, h6: T) -> T {
    let two = T::of(2.0);
    x + h6 * (((k1 + two * k2) + two * k3) + k4)
}

fn step<T: Scalar>(
    scheme: Scheme,
    x: &Weights<T>,
    t: T,
    h: T,
    f: &impl Fn(&Weights<T>, T) -> Result<Weights<T>>,
) -> Result<Weights<T>> {
    let stages = stage_states(scheme, x, t, h, f)?;
    match scheme {
        Scheme::Euler => Ok(x.axpy(h, &stages.slopes[0])),
        Scheme::Rk4 => {
            let k4 = f(&stages.states[3], stages.times[3])?;
            let h6 = h / T::of(6.0);
            let [k1, k2, k3] = [&stages.slopes[0], &stages.slopes[1], &stages.slopes[2]];
            let mut next = x.clone();
            for i in 1..=x.depth() {
                let out = next.layer_mut(i).as_mut_slice();
                let (a, b, c, d) = (
                    k1.layer(i).as_slice(),
                    k2.layer(i).as_slice(),
                    k3.layer(i).as_slice(),
                    k4.layer(i).as_slice(),
                );
                for (e, o) in out.iter_mut().enumerate() {
                    *o = rk4_combine(*o, a[e], b[e], c[e], d[e], h6);
                }
            }
            Ok(next)
        }
    }
}

/// Integrates the mean-field ODEs from `ps` with a fixed-step scheme.
pub fn integrate_mf<T: Scalar>(
    ps: &ParticleSystem<T>,
    problem: &MfProblem<T>,
    opts: &IntegrateOptions,
) -> Result<MfTrajectory<T>, Interrupted<MfTrajectory<T>>> {
    let mut traj = MfTrajectory {
        h: opts.h,
        scheme: opts.scheme,
        checkpoint_every: opts.checkpoint_every,
        checkpoints: vec![ps.clone()],
    };
    let setup = problem.check(ps.arch()).and_then(|_| grid_steps(opts.h, opts.horizon)).and_then(|n| {
        if opts.checkpoint_every == 0 {
            Err(Error::config("checkpoint period must be at least one step"))
        } else if ps.t() != T::zero() {
            Err(Error::config("integration starts at t = 0"))
        } else {
            Ok(n)
        }
    });
    let n_steps = match setup {
        Ok(n) => n,
        Err(error) => return Err(Interrupted { error, partial: traj }),
    };
    let h = T::of(opts.h);
    let f = |w: &Weights<T>, t: T| {
        let view = NetView { arch: ps.arch(), weights: w, populations: ps.populations() };
        drift_at(&view, t, problem)
    };
    let mut x = ps.weights().clone();
    for n in 0..n_steps {
        let t = grid_time(n, h);
        let next = step(opts.scheme, &x, t, h, &f);
        let t_next = grid_time(n + 1, h);
        x = match next {
            Ok(w) if w.all_finite() => w,
            Ok(_) => {
                let error = Error::OverflowAtTime { time: t_next.as_f64() };
                return Err(Interrupted { error, partial: traj });
            }
            Err(error) => return Err(Interrupted { error, partial: traj }),
        };
        if (n + 1) % opts.checkpoint_every == 0 || n + 1 == n_steps {
            traj.checkpoints.push(ps.with_state(x.clone(), t_next));
        }
    }
    Ok(traj)
}
