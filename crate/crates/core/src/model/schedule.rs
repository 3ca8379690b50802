use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One learning-rate schedule `ξ: [0, ∞) → [0, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScheduleForm {
    Constant { value: f64 },
    ExponentialDecay { amplitude: f64, rate: f64 },
    /// Linear interpolation between `(time, value)` knots, constant outside.
    PiecewiseLinear { knots: Vec<(f64, f64)> },
}

impl ScheduleForm {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ScheduleForm::Constant { value } => *value,
            ScheduleForm::ExponentialDecay { amplitude, rate } => amplitude * (-rate * t).exp(),
            ScheduleForm::PiecewiseLinear { knots } => {
                let first = knots[0];
                if t <= first.0 {
                    return first.1;
                }
                for pair in knots.windows(2) {
                    let ((t0, v0), (t1, v1)) = (pair[0], pair[1]);
                    if t <= t1 {
                        return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
                    }
                }
                knots[knots.len() - 1].1
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            ScheduleForm::Constant { value } => value.is_finite() && *value >= 0.0,
            ScheduleForm::ExponentialDecay { amplitude, rate } => {
                amplitude.is_finite() && *amplitude >= 0.0 && rate.is_finite() && *rate >= 0.0
            }
            ScheduleForm::PiecewiseLinear { knots } => {
                !knots.is_empty()
                    && knots.iter().all(|(t, v)| t.is_finite() && v.is_finite() && *v >= 0.0)
                    && knots.windows(2).all(|p| p[1].0 > p[0].0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid schedule {self:?}")))
        }
    }

    /// Exactly one at every `t ≥ 0`.
    pub fn is_identically_one(&self) -> bool {
        match self {
            ScheduleForm::Constant { value } => *value == 1.0,
            ScheduleForm::ExponentialDecay { amplitude, rate } => *amplitude == 1.0 && *rate == 0.0,
            ScheduleForm::PiecewiseLinear { knots } => knots.iter().all(|(_, v)| *v == 1.0),
        }
    }

    /// Bound on `|ξ|` over `[0, ∞)`.
    pub fn sup(&self) -> f64 {
        match self {
            ScheduleForm::Constant { value } => *value,
            ScheduleForm::ExponentialDecay { amplitude, .. } => *amplitude,
            ScheduleForm::PiecewiseLinear { knots } => knots.iter().map(|k| k.1).fold(0.0, f64::max),
        }
    }

    /// Lipschitz constant over `[0, ∞)`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            ScheduleForm::Constant { .. } => 0.0,
            ScheduleForm::ExponentialDecay { amplitude, rate } => amplitude * rate,
            ScheduleForm::PiecewiseLinear { knots } => knots
                .windows(2)
                .map(|p| ((p[1].1 - p[0].1) / (p[1].0 - p[0].0)).abs())
                .fold(0.0, f64::max),
        }
    }
}

/// Per-layer schedules `ξ₁, …, ξ_L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedules {
    layers: Vec<ScheduleForm>,
}

impl Schedules {
    pub fn new(layers: Vec<ScheduleForm>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("at least one layer schedule required"));
        }
        for s in &layers {
            s.validate()?;
        }
        Ok(Schedules { layers })
    }

    /// The same constant `value` for all `depth` layers.
    pub fn constant(depth: usize, value: f64) -> Self {
        Schedules { layers: vec![ScheduleForm::Constant { value }; depth] }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, i: usize) -> &ScheduleForm {
        &self.layers[i - 1]
    }

    pub fn layers(&self) -> &[ScheduleForm] {
        &self.layers
    }

    /// `ξ_i(t)` for 1-based layer `i`.
    pub fn eval<T: Scalar>(&self, i: usize, t: T) -> Result<T> {
        if !(t >= T::zero()) {
            return Err(Error::domain(format!("schedule time {t} must be nonnegative")));
        }
        if i == 0 || i > self.layers.len() {
            return Err(Error::domain(format!("layer index {i} outside 1..={}", self.layers.len())));
        }
        Ok(T::of(self.layers[i - 1].eval(t.as_f64())))
    }

    /// All `ξ_i(t)`, index 0 holding layer 1.
    pub fn eval_all<T: Scalar>(&self, t: T) -> Result<Vec<T>> {
        (1..=self.layers.len()).map(|i| self.eval(i, t)).collect()
    }
}
