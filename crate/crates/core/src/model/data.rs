use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub x: Vec<T>,
    pub y: T,
}

impl<T: Scalar> Sample<T> {
    pub fn new(x: Vec<T>, y: T) -> Self {
        Sample { x, y }
    }

    pub fn norm(&self) -> T {
        self.x.iter().fold(T::zero(), |a, &v| a + v * v).sqrt()
    }
}

/// Target function of a synthetic teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Teacher {
    /// `y = tanh(⟨a, x⟩)`
    TanhLinear { weights: Vec<f64> },
    /// `y = ⟨a, x⟩`
    Linear { weights: Vec<f64> },
}

impl Teacher {
    fn weights(&self) -> &[f64] {
        match self {
            Teacher::TanhLinear { weights } | Teacher::Linear { weights } => weights,
        }
    }

    pub fn eval<T: Scalar>(&self, x: &[T]) -> T {
        let s = self.weights().iter().zip(x).fold(T::zero(), |acc, (&a, &v)| acc + T::of(a) * v);
        match self {
            Teacher::TanhLinear { .. } => s.tanh(),
            Teacher::Linear { .. } => s,
        }
    }
}

/// Law of the teacher's inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InputLaw {
    /// Uniform on `[-half_width, half_width]^d`.
    UniformCube { half_width: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource<T> {
    FiniteDataset(Vec<Sample<T>>),
    SyntheticTeacher { teacher: Teacher, inputs: InputLaw, noise_std: f64 },
}

/// The training distribution `𝒫` over `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataModel<T> {
    source: DataSource<T>,
    input_dim: usize,
    input_bound: f64,
}

impl<T: Scalar> DataModel<T> {
    /// Uniform distribution over a finite list of samples.
    pub fn finite(samples: Vec<Sample<T>>, input_bound: f64) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::config("finite dataset is empty"));
        };
        let input_dim = first.x.len();
        for (k, s) in samples.iter().enumerate() {
            if s.x.len() != input_dim {
                return Err(Error::shape(format!("sample {k} has dimension {}, expected {input_dim}", s.x.len())));
            }
            if !(s.norm().as_f64() <= input_bound) || !s.y.is_finite() {
                return Err(Error::config(format!("sample {k} violates the input bound {input_bound}")));
            }
        }
        Ok(DataModel { source: DataSource::FiniteDataset(samples), input_dim, input_bound })
    }

    pub fn synthetic(teacher: Teacher, inputs: InputLaw, noise_std: f64, input_dim: usize) -> Result<Self> {
        if teacher.weights().len() != input_dim {
            return Err(Error::shape("teacher weight length differs from input dimension"));
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::config("label noise must be a finite nonnegative std"));
        }
        let InputLaw::UniformCube { half_width } = inputs;
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::config("input cube half-width must be positive"));
        }
        let input_bound = half_width * (input_dim as f64).sqrt();
        Ok(DataModel {
            source: DataSource::SyntheticTeacher { teacher, inputs, noise_std },
            input_dim,
            input_bound,
        })
    }

    pub fn source(&self) -> &DataSource<T> {
        &self.source
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn input_bound(&self) -> f64 {
        self.input_bound
    }

    /// Draws one sample from `𝒫`.
    pub fn draw_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Sample<T> {
        match &self.source {
            DataSource::FiniteDataset(samples) => samples[rng.random_range(0..samples.len())].clone(),
            DataSource::SyntheticTeacher { teacher, inputs, noise_std } => {
                let InputLaw::UniformCube { half_width } = *inputs;
                let x: Vec<T> = (0..self.input_dim)
                    .map(|_| T::of(rng.random_range(-half_width..=half_width)))
                    .collect();
                let mut y = teacher.eval(&x);
                if *noise_std > 0.0 {
                    let n: f64 = StandardNormal.sample(rng);
                    y += T::of(noise_std * n);
                }
                Sample { x, y }
            }
        }
    }

    /// Fixed evaluation panel for `𝔼_Z`.
    ///
    /// A finite dataset is returned whole, so panel averages are exact.
    /// A synthetic teacher is sampled on the first `size` points of a
    /// Halton sequence; `rng` only feeds the label noise.
    pub fn panel(&self, size: usize, rng: RngState) -> Result<Vec<Sample<T>>> {
        match &self.source {
            DataSource::FiniteDataset(samples) => Ok(samples.clone()),
            DataSource::SyntheticTeacher { teacher, inputs, noise_std } => {
                if size == 0 {
                    return Err(Error::config("panel size must be positive"));
                }
                let InputLaw::UniformCube { half_width } = *inputs;
                let mut gen = rng.generator();
                let panel = (1..=size)
                    .map(|k| {
                        let x: Vec<T> = (0..self.input_dim)
                            .map(|j| T::of(half_width * (2.0 * radical_inverse(k as u64, PRIMES[j % PRIMES.len()]) - 1.0)))
                            .collect();
                        let mut y = teacher.eval(&x);
                        if *noise_std > 0.0 {
                            let n: f64 = StandardNormal.sample(&mut gen);
                            y += T::of(noise_std * n);
                        }
                        Sample { x, y }
                    })
                    .collect();
                Ok(panel)
            }
        }
    }
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Van der Corput radical inverse of `k` in `base`.
fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while k > 0 {
        r += (k % base) as f64 * f;
        k /= base;
        f *= inv;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn teacher_model() -> DataModel<f64> {
        DataModel::synthetic(
            Teacher::TanhLinear { weights: vec![3.0, -2.0] },
            InputLaw::UniformCube { half_width: 1.0 },
            0.0,
            2,
        )
        .unwrap()
    }

    #[test]
    fn single_element_dataset() {
        let s = Sample::new(vec![0.5, -0.25], 1.25);
        let model = DataModel::finite(vec![s.clone()], 1.0).unwrap();
        let mut rng = RngState::new(1).generator();
        for _ in 0..5 {
            assert_eq!(model.draw_sample(&mut rng), s);
        }
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(matches!(DataModel::<f64>::finite(vec![], 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn bound_violation_rejected() {
        assert!(DataModel::finite(vec![Sample::new(vec![3.0], 0.0)], 1.0).is_err());
    }

    #[test]
    fn same_seed_same_samples() {
        let model = teacher_model();
        let draw = |seed| {
            let mut rng = RngState::new(seed).generator();
            (0..20).map(|_| model.draw_sample(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn noiseless_teacher_labels_reproduce() {
        let model = teacher_model();
        let mut rng = RngState::new(4).generator();
        for _ in 0..200 {
            let s = model.draw_sample(&mut rng);
            assert!(s.norm() <= model.input_bound());
            let expected = (3.0 * s.x[0] - 2.0 * s.x[1]).tanh();
            assert!((s.y - expected).abs() <= 1e-15);
        }
    }

    #[test]
    fn halton_panel_is_deterministic_and_bounded() {
        let model = teacher_model();
        let a = model.panel(256, RngState::new(0)).unwrap();
        let b = model.panel(256, RngState::new(99)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|s| s.norm() <= model.input_bound()));
        let mean0: f64 = a.iter().map(|s| s.x[0]).sum::<f64>() / 256.0;
        assert!(mean0.abs() < 0.02);
    }

    #[test]
    fn radical_inverse_base_two() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
    }
}
