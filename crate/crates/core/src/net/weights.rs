use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::net::NetworkArch;
use crate::scalar::Scalar;

/// Layered weights: `w₁` is `n₁ × d`, `w_i` is `n_{i−1} × n_i` for `i ≥ 2`.
///
/// Shared by finite networks and particle systems; the two differ only in
/// how the layer sums are normalised (see [`NetView`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T> {
    layers: Vec<Matrix<T>>,
}

/// The finite network parameter `𝐖(k)`.
pub type FiniteWeights<T> = Weights<T>;

impl<T: Scalar> Weights<T> {
    pub fn zeros(arch: &NetworkArch) -> Self {
        let mut layers = vec![Matrix::zeros(arch.width(1), arch.input_dim())];
        for i in 2..=arch.depth() {
            layers.push(Matrix::zeros(arch.width(i - 1), arch.width(i)));
        }
        Weights { layers }
    }

    /// Builds from `[w₁, w₂, …, w_L]`, checking shapes against `arch`.
    pub fn from_layers(arch: &NetworkArch, layers: Vec<Matrix<T>>) -> Result<Self> {
        let w = Weights { layers };
        w.check_shape(arch)?;
        Ok(w)
    }

    pub fn from_fn(arch: &NetworkArch, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut w = Self::zeros(arch);
        for (idx, m) in w.layers.iter_mut().enumerate() {
            let (rows, cols) = m.shape();
            for r in 0..rows {
                for c in 0..cols {
                    m[(r, c)] = f(idx + 1, r, c);
                }
            }
        }
        w
    }

    pub fn check_shape(&self, arch: &NetworkArch) -> Result<()> {
        if self.layers.len() != arch.depth() {
            return Err(Error::shape(format!(
                "weights have {} layers, architecture has {}",
                self.layers.len(),
                arch.depth()
            )));
        }
        for i in 1..=arch.depth() {
            let expected = if i == 1 {
                (arch.width(1), arch.input_dim())
            } else {
                (arch.width(i - 1), arch.width(i))
            };
            if self.layers[i - 1].shape() != expected {
                return Err(Error::shape(format!(
                    "layer {i} has shape {:?}, expected {expected:?}",
                    self.layers[i - 1].shape()
                )));
            }
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// `w_i` for 1-based `i`.
    pub fn layer(&self, i: usize) -> &Matrix<T> {
        &self.layers[i - 1]
    }

    pub fn layer_mut(&mut self, i: usize) -> &mut Matrix<T> {
        &mut self.layers[i - 1]
    }

    pub fn layers(&self) -> &[Matrix<T>] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<Matrix<T>> {
        self.layers
    }

    /// `self + a * other`, entrywise.
    pub fn axpy(&self, a: T, other: &Self) -> Self {
        Weights { layers: self.layers.iter().zip(&other.layers).map(|(x, y)| x.axpy(a, y)).collect() }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (x, y) in self.layers.iter_mut().zip(&other.layers) {
            x.add_assign(y);
        }
    }

    /// Multiplies layer `i` by `factors[i − 1]`.
    pub fn scale_layers(&self, factors: &[T]) -> Self {
        Weights {
            layers: self.layers.iter().zip(factors).map(|(m, &f)| m.map(|v| f * v)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Weights { layers: self.layers.iter().map(|m| m.map(&f)).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(Matrix::all_finite)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.layers
            .iter()
            .zip(&other.layers)
            .fold(T::zero(), |m, (a, b)| m.max(a.max_abs_diff(b)))
    }

    /// Per-layer mean absolute entrywise difference.
    pub fn mean_abs_diff(&self, other: &Self) -> Vec<T> {
        self.layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| {
                let n = a.as_slice().len().max(1);
                let s = a.as_slice().iter().zip(b.as_slice()).fold(T::zero(), |s, (&x, &y)| s + (x - y).abs());
                s / T::of_usize(n)
            })
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> Weights<U> {
        Weights { layers: self.layers.iter().map(Matrix::cast).collect() }
    }

    /// Applies a relabelling of neurons: `perms[i − 1][j]` is the old index
    /// of new neuron `j` in layer `i` (layer `L` is ignored).
    pub fn permute_neurons(&self, perms: &[Vec<usize>]) -> Self {
        let depth = self.layers.len();
        let ident = |n: usize| (0..n).collect::<Vec<_>>();
        let mut layers = Vec::with_capacity(depth);
        let w1 = &self.layers[0];
        layers.push(w1.permuted(&perms[0], &ident(w1.cols())));
        for i in 2..=depth {
            let m = &self.layers[i - 1];
            let cols = if i == depth { ident(1) } else { perms[i - 1].clone() };
            layers.push(m.permuted(&perms[i - 2], &cols));
        }
        Weights { layers }
    }
}

/// A network evaluated with layer sums normalised by per-layer
/// populations.
///
/// For a finite network the population of layer `i` is `n_i`. A particle
/// system may carry additional tracer particles after the first
/// `population[i]` entries of each layer; tracers evolve under the dynamics
/// but are excluded from every average.
#[derive(Debug, Clone, Copy)]
pub struct NetView<'a, T> {
    pub arch: &'a NetworkArch,
    pub weights: &'a Weights<T>,
    pub populations: &'a [usize],
}

impl<'a, T: Scalar> NetView<'a, T> {
    /// Finite network: every neuron is averaged over.
    pub fn finite(arch: &'a NetworkArch, weights: &'a Weights<T>) -> Self {
        NetView { arch, weights, populations: arch.widths() }
    }

    pub fn population(&self, i: usize) -> usize {
        self.populations[i - 1]
    }

    pub fn check(&self) -> Result<()> {
        self.weights.check_shape(self.arch)?;
        if self.populations.len() != self.arch.depth() {
            return Err(Error::shape("population list length differs from depth"));
        }
        for (i, (&p, &n)) in self.populations.iter().zip(self.arch.widths()).enumerate() {
            if p == 0 || p > n {
                return Err(Error::shape(format!("layer {} population {p} outside 1..={n}", i + 1)));
            }
        }
        Ok(())
    }
}
