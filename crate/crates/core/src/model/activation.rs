use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationKind {
    Tanh,
    Logistic,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerRole {
    Hidden,
    Output,
}

/// An activation together with its regularity bound `K`.
///
/// The bound is metadata: it is never enforced on construction, only
/// checked by [`ActivationSpec::conformance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationSpec {
    pub kind: ActivationKind,
    pub bound: f64,
    pub role: LayerRole,
}

impl ActivationSpec {
    pub fn new(kind: ActivationKind, role: LayerRole) -> Self {
        ActivationSpec { kind, bound: 1.0, role }
    }

    pub fn tanh_hidden() -> Self {
        Self::new(ActivationKind::Tanh, LayerRole::Hidden)
    }

    pub fn identity_output() -> Self {
        Self::new(ActivationKind::Identity, LayerRole::Output)
    }

    /// `(φ(h), φ'(h))`, rejecting non-finite input.
    pub fn eval<T: Scalar>(&self, h: T) -> Result<(T, T)> {
        if !h.is_finite() {
            return Err(Error::domain(format!("activation input {h} is not finite")));
        }
        Ok(self.eval_unchecked(h))
    }

    /// Hot-path evaluation used by the network kernels.
    #[inline]
    pub fn eval_unchecked<T: Scalar>(&self, h: T) -> (T, T) {
        match self.kind {
            ActivationKind::Tanh => {
                let v = h.tanh();
                (v, T::one() - v * v)
            }
            ActivationKind::Logistic => {
                let v = if h >= T::zero() {
                    T::one() / (T::one() + (-h).exp())
                } else {
                    let e = h.exp();
                    e / (T::one() + e)
                };
                (v, v * (T::one() - v))
            }
            ActivationKind::Identity => (h, T::one()),
        }
    }

    /// Grid scan of the regularity conditions on `[-50, 50]` with step `1e-3`.
    pub fn conformance(&self) -> ActivationConformance {
        self.conformance_on(-50.0, 50.0, 1e-3)
    }

    pub fn conformance_on(&self, lo: f64, hi: f64, step: f64) -> ActivationConformance {
        let n = ((hi - lo) / step).round() as usize;
        let mut max_value = 0.0f64;
        let mut max_derivative = 0.0f64;
        let mut max_slope_ratio = 0.0f64;
        let mut min_abs_derivative = f64::INFINITY;
        let mut prev: Option<(f64, f64)> = None;
        for k in 0..=n {
            let h = lo + k as f64 * step;
            let (v, d) = self.eval_unchecked(h);
            max_value = max_value.max(v.abs());
            max_derivative = max_derivative.max(d.abs());
            min_abs_derivative = min_abs_derivative.min(d.abs());
            if let Some((hp, dp)) = prev {
                max_slope_ratio = max_slope_ratio.max((d - dp).abs() / (h - hp));
            }
            prev = Some((h, d));
        }
        let k = self.bound;
        let conforming = match self.role {
            LayerRole::Hidden => max_value <= k && max_derivative <= k && max_slope_ratio <= k,
            LayerRole::Output => {
                max_derivative <= k && max_slope_ratio <= k && min_abs_derivative > 0.0
            }
        };
        ActivationConformance {
            max_value,
            max_derivative,
            max_slope_ratio,
            min_abs_derivative,
            conforming,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationConformance {
    pub max_value: f64,
    pub max_derivative: f64,
    /// Largest `|φ'(h₁) − φ'(h₂)| / |h₁ − h₂|` over adjacent grid points.
    pub max_slope_ratio: f64,
    pub min_abs_derivative: f64,
    pub conforming: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_at_origin() {
        assert_eq!(ActivationSpec::tanh_hidden().eval(0.0f64).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn identity_passthrough() {
        assert_eq!(ActivationSpec::identity_output().eval(3.5f64).unwrap(), (3.5, 1.0));
    }

    #[test]
    fn tanh_at_one_matches_series_oracle() {
        let (v, d) = ActivationSpec::tanh_hidden().eval(1.0f64).unwrap();
        assert!((v - 0.761_594_155_955_764_9).abs() < 1e-15);
        assert!((d - 0.419_974_341_614_026_1).abs() < 1e-15);
    }

    #[test]
    fn non_finite_input_rejected() {
        let spec = ActivationSpec::tanh_hidden();
        assert!(matches!(spec.eval(f64::NAN), Err(Error::Domain(_))));
        assert!(spec.eval(f64::INFINITY).is_err());
    }

    #[test]
    fn default_kinds_conform() {
        for spec in [
            ActivationSpec::tanh_hidden(),
            ActivationSpec::new(ActivationKind::Logistic, LayerRole::Hidden),
            ActivationSpec::identity_output(),
        ] {
            let rep = spec.conformance();
            assert!(rep.conforming, "{spec:?}: {rep:?}");
        }
    }

    #[test]
    fn identity_is_not_a_bounded_hidden_activation() {
        let spec = ActivationSpec::new(ActivationKind::Identity, LayerRole::Hidden);
        assert!(!spec.conformance().conforming);
    }

    #[test]
    fn logistic_saturation_is_stable() {
        let spec = ActivationSpec::new(ActivationKind::Logistic, LayerRole::Hidden);
        let (v, d) = spec.eval(-800.0f64).unwrap();
        assert!(v >= 0.0 && v.is_finite() && d.is_finite());
        let (v, _) = spec.eval(800.0f64).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn derivative_matches_central_difference() {
        let h = 1e-5;
        for spec in [
            ActivationSpec::tanh_hidden(),
            ActivationSpec::new(ActivationKind::Logistic, LayerRole::Hidden),
        ] {
            for k in -40..=40 {
                let x = k as f64 * 0.1;
                let fd = (spec.eval_unchecked(x + h).0 - spec.eval_unchecked(x - h).0) / (2.0 * h);
                let (_, d) = spec.eval_unchecked(x);
                assert!((fd - d).abs() < 1e-6, "{spec:?} at {x}: {fd} vs {d}");
            }
        }
    }
}
