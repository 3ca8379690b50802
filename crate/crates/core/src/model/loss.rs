use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LossKind {
    /// Quadratic within `delta` of the target, linear outside.
    Huber { delta: f64 },
    /// `log(1 + exp(-y ŷ))` for labels in `[-1, 1]`.
    Logistic,
    /// `½(y − ŷ)²`. Unbounded `∂₂`, so outside the regularity class.
    HalfSquared,
}

/// A loss `𝓛(y, ŷ) ≥ 0` with its stored bound on `∂₂𝓛`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub d2_bound: f64,
}

impl LossSpec {
    pub fn huber(delta: f64) -> Self {
        LossSpec { kind: LossKind::Huber { delta }, d2_bound: delta.max(1.0) }
    }

    pub fn logistic() -> Self {
        LossSpec { kind: LossKind::Logistic, d2_bound: 1.0 }
    }

    pub fn half_squared() -> Self {
        LossSpec { kind: LossKind::HalfSquared, d2_bound: f64::INFINITY }
    }

    pub fn validate(&self) -> Result<()> {
        if let LossKind::Huber { delta } = self.kind {
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(Error::config(format!("huber delta must be positive, got {delta}")));
            }
        }
        if !(self.d2_bound > 0.0) {
            return Err(Error::config("loss d2_bound must be positive"));
        }
        Ok(())
    }

    /// Whether the kind belongs to the bounded-Lipschitz `∂₂𝓛` class.
    pub fn is_conforming(&self) -> bool {
        !matches!(self.kind, LossKind::HalfSquared)
    }

    /// `(𝓛(y, ŷ), ∂₂𝓛(y, ŷ))`, rejecting non-finite input.
    pub fn eval<T: Scalar>(&self, y: T, yhat: T) -> Result<(T, T)> {
        if !(y.is_finite() && yhat.is_finite()) {
            return Err(Error::domain(format!("loss inputs ({y}, {yhat}) are not finite")));
        }
        Ok(self.eval_unchecked(y, yhat))
    }

    #[inline]
    pub fn eval_unchecked<T: Scalar>(&self, y: T, yhat: T) -> (T, T) {
        match self.kind {
            LossKind::Huber { delta } => {
                let delta = T::of(delta);
                let r = yhat - y;
                if r.abs() <= delta {
                    (T::of(0.5) * r * r, r)
                } else {
                    (delta * (r.abs() - T::of(0.5) * delta), delta * r.signum())
                }
            }
            LossKind::Logistic => {
                let z = -(y * yhat);
                // softplus(z), stable for large |z|
                let value = z.max(T::zero()) + (-z.abs()).exp().ln_1p();
                let sig = if z >= T::zero() {
                    T::one() / (T::one() + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (T::one() + e)
                };
                (value, -y * sig)
            }
            LossKind::HalfSquared => {
                let r = yhat - y;
                (T::of(0.5) * r * r, r)
            }
        }
    }

    /// Grid check of nonnegativity, the `∂₂` bound, and the Lipschitz
    /// property in the second argument over adjacent grid points.
    pub fn conformance(&self, ys: &[f64], yhat_lo: f64, yhat_hi: f64, step: f64) -> LossConformance {
        let n = ((yhat_hi - yhat_lo) / step).round() as usize;
        let mut min_value = f64::INFINITY;
        let mut max_abs_d2 = 0.0f64;
        let mut max_slope_ratio = 0.0f64;
        for &y in ys {
            let mut prev: Option<(f64, f64)> = None;
            for k in 0..=n {
                let yh = yhat_lo + k as f64 * step;
                let (v, d) = self.eval_unchecked(y, yh);
                min_value = min_value.min(v);
                max_abs_d2 = max_abs_d2.max(d.abs());
                if let Some((yp, dp)) = prev {
                    max_slope_ratio = max_slope_ratio.max((d - dp).abs() / (yh - yp));
                }
                prev = Some((yh, d));
            }
        }
        let conforming = min_value >= 0.0
            && max_abs_d2 <= self.d2_bound
            && max_slope_ratio <= self.d2_bound * (1.0 + 1e-9);
        LossConformance { min_value, max_abs_d2, max_slope_ratio, conforming }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConformance {
    pub min_value: f64,
    pub max_abs_d2: f64,
    pub max_slope_ratio: f64,
    pub conforming: bool,
}
