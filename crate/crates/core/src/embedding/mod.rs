//! Neuronal embeddings `(Ω, P, {w_i⁰})`, latent code sampling, and the
//! shared-code coupling between a finite network and a particle system.
//!
//! `Ω_i = ℝ^{m_i}` for `i < L`; `Ω_L` is a singleton, represented by a code
//! of dimension zero. A finite network of widths `n_i` and a particle system
//! with `M_i = n_i` particles read their initial weights from the same
//! `w_i⁰` on the same codes, so they agree exactly at `t = 0`.

mod proxy;

pub use proxy::{gram_proxy, moment_proxy, GramDirection, GramProxy, MomentProxy};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::mf::ParticleSystem;
use crate::net::{NetworkArch, Weights};
use crate::rng::{mix64, unit_open, RngState};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatentLaw {
    #[default]
    StandardGaussian,
    /// Uniform on `[-1, 1]^m`.
    UniformCube,
}

impl LatentLaw {
    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            LatentLaw::StandardGaussian => StandardNormal.sample(rng),
            LatentLaw::UniformCube => rng.random_range(-1.0..=1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LatentLaw::StandardGaussian => "standard-gaussian",
            LatentLaw::UniformCube => "uniform-cube",
        }
    }
}

/// Per-layer latent dimensions `m_1, …, m_{L−1}` (and `m_L = 0`) with a law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSpace {
    dims: Vec<usize>,
    law: LatentLaw,
}

impl LatentSpace {
    /// `dims` lists `m_1, …, m_{L−1}`; the output layer is appended as the singleton.
    pub fn new(dims: Vec<usize>, law: LatentLaw) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::config("latent space needs at least one hidden layer"));
        }
        if let Some(i) = dims.iter().position(|&m| m == 0) {
            return Err(Error::config(format!("latent dimension of layer {} must be at least 1", i + 1)));
        }
        let mut dims = dims;
        dims.push(0);
        Ok(LatentSpace { dims, law })
    }

    /// `m_i = m` for every hidden layer of a depth-`depth` network.
    pub fn uniform(depth: usize, m: usize, law: LatentLaw) -> Result<Self> {
        Self::new(vec![m; depth.saturating_sub(1)], law)
    }

    pub fn depth(&self) -> usize {
        self.dims.len()
    }

    /// `m_i`, 1-based; `0` for the output layer.
    pub fn dim(&self, i: usize) -> usize {
        self.dims[i - 1]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn law(&self) -> LatentLaw {
        self.law
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// Random tanh series, jointly continuous in both codes.
    #[default]
    Bidiverse,
    /// Hash-based values that behave like i.i.d. gaussians over distinct code pairs.
    PseudoIid,
}

impl InitScheme {
    pub fn name(self) -> &'static str {
        match self {
            InitScheme::Bidiverse => "bidiverse",
            InitScheme::PseudoIid => "pseudo-iid",
        }
    }
}

/// Everything `build_embedding` needs; the embedding is a deterministic
/// function of these fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingParams {
    pub scheme: InitScheme,
    pub seed: u64,
    /// Latent dimension of every hidden layer.
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    #[serde(default)]
    pub law: LatentLaw,
    /// Number of series terms `R`.
    #[serde(default = "default_terms")]
    pub terms: usize,
    /// Standard deviation of `⟨u_r, c⟩` and `⟨v_r, c′⟩` for unit-variance codes.
    #[serde(default = "default_feature_scale")]
    pub feature_scale: f64,
    /// Multiplier `γ_i` applied to the layer-`i` initialization, `i ≥ 2`
    /// (defaults to 1 everywhere).
    #[serde(default)]
    pub gains: Option<Vec<f64>>,
    /// Explicit `d × d` input map `A` for `w₁⁰(c) = A·c[..d]`; drawn as a
    /// random orthogonal matrix when absent.
    #[serde(default)]
    pub input_map: Option<Vec<Vec<f64>>>,
}

fn default_latent_dim() -> usize {
    8
}

fn default_terms() -> usize {
    64
}

fn default_feature_scale() -> f64 {
    2.0
}

impl EmbeddingParams {
    pub fn new(scheme: InitScheme, seed: u64) -> Self {
        EmbeddingParams {
            scheme,
            seed,
            latent_dim: default_latent_dim(),
            law: LatentLaw::default(),
            terms: default_terms(),
            feature_scale: default_feature_scale(),
            gains: None,
            input_map: None,
        }
    }
}

/// `w_i⁰(c, c′) = R^{−1/2} Σ_r a_r tanh(⟨u_r, c⟩ + ⟨v_r, c′⟩ + b_r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomSeries {
    pub coef: Vec<f64>,
    /// `R × m_{i−1}`
    pub left: Matrix<f64>,
    /// `R × m_i` (zero columns for the output layer)
    pub right: Matrix<f64>,
    pub offset: Vec<f64>,
}

impl RandomSeries {
    /// Draws the series, then rescales `a` so that `𝔼[w²] = 1` under `law`,
    /// estimated on [`NORM_QUADRATURE`] independent code pairs.
    fn draw(terms: usize, m_left: usize, m_right: usize, scale: f64, law: LatentLaw, rng: RngState) -> Self {
        let mut gen = rng.generator();
        let mut gauss = || -> f64 { StandardNormal.sample(&mut gen) };
        let coef: Vec<f64> = (0..terms).map(|_| gauss()).collect();
        let sl = scale / (m_left as f64).sqrt();
        let left = Matrix::from_fn(terms, m_left, |_, _| sl * gauss());
        let sr = if m_right == 0 { 0.0 } else { scale / (m_right as f64).sqrt() };
        let right = Matrix::from_fn(terms, m_right, |_, _| sr * gauss());
        let offset = (0..terms).map(|_| gauss()).collect();
        let mut series = RandomSeries { coef, left, right, offset };

        let mut quad = rng.split(NORM_STREAM).generator();
        let mut code = |m: usize| -> Vec<f64> { (0..m).map(|_| law.draw(&mut quad)).collect() };
        let ms = (0..NORM_QUADRATURE)
            .map(|_| {
                let (c, c2) = (code(m_left), code(m_right));
                series.eval(&c, &c2).powi(2)
            })
            .sum::<f64>()
            / NORM_QUADRATURE as f64;
        let k = ms.sqrt().recip();
        series.coef.iter_mut().for_each(|a| *a *= k);
        series
    }

    fn eval(&self, c: &[f64], c2: &[f64]) -> f64 {
        let terms = self.coef.len();
        let mut s = 0.0;
        for r in 0..terms {
            let arg = dot(self.left.row(r), c) + dot(self.right.row(r), c2) + self.offset[r];
            s += self.coef[r] * arg.tanh();
        }
        s / (terms as f64).sqrt()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
enum LayerMap {
    Series(RandomSeries),
    Hash,
}

/// Evaluable initialization functions over a latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronalEmbedding {
    params: EmbeddingParams,
    arch: NetworkArch,
    latent: LatentSpace,
    input_map: Matrix<f64>,
    gains: Vec<f64>,
    maps: Vec<LayerMap>,
}

const QUANTUM: f64 = 1e-9;

/// Code pairs used to normalize each series to unit second moment.
pub const NORM_QUADRATURE: usize = 8192;
const NORM_STREAM: u64 = 0x6e6f726d;

/// Builds the embedding for `arch`.
pub fn build_embedding(arch: &NetworkArch, params: &EmbeddingParams) -> Result<NeuronalEmbedding> {
    let depth = arch.depth();
    let d = arch.input_dim();
    if params.terms == 0 {
        return Err(Error::config("series needs at least one term"));
    }
    if params.latent_dim < d {
        return Err(Error::config(format!(
            "latent dimension {} is smaller than the input dimension {d}",
            params.latent_dim
        )));
    }
    if !(params.feature_scale > 0.0 && params.feature_scale.is_finite()) {
        return Err(Error::config("feature scale must be positive"));
    }
    let latent = LatentSpace::uniform(depth, params.latent_dim, params.law)?;
    let root = RngState::new(params.seed);

    let input_map = match &params.input_map {
        Some(rows) => {
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err(Error::config(format!("input map must be {d} × {d}")));
            }
            Matrix::from_fn(d, d, |r, c| rows[r][c])
        }
        None => random_orthogonal(d, root.split(1)),
    };
    let m = nalgebra::DMatrix::from_fn(d, d, |r, c| input_map[(r, c)]);
    let sv = m.singular_values();
    let (smin, smax) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if !(smax > 0.0 && smin > 1e-10 * smax) || !input_map.all_finite() {
        return Err(Error::config("input map is degenerate (not full rank)"));
    }

    let gains = match &params.gains {
        Some(g) if g.len() != depth - 1 => {
            return Err(Error::config(format!("expected {} gains for layers 2..{depth}", depth - 1)))
        }
        Some(g) => g.clone(),
        None => vec![1.0; depth - 1],
    };
    if gains.iter().any(|g| !g.is_finite()) {
        return Err(Error::config("gains must be finite"));
    }
    let maps = (2..=depth)
        .map(|i| match params.scheme {
            InitScheme::Bidiverse => LayerMap::Series(RandomSeries::draw(
                params.terms,
                latent.dim(i - 1),
                latent.dim(i),
                params.feature_scale,
                params.law,
                root.split(i as u64 + 1),
            )),
            InitScheme::PseudoIid => LayerMap::Hash,
        })
        .collect();
    Ok(NeuronalEmbedding { params: params.clone(), arch: arch.clone(), latent, input_map, gains, maps })
}

fn random_orthogonal(d: usize, rng: RngState) -> Matrix<f64> {
    let mut gen = rng.generator();
    let g = nalgebra::DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut gen));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    // Sign fix makes the law Haar.
    Matrix::from_fn(d, d, |i, j| q[(i, j)] * r[(j, j)].signum())
}

impl NeuronalEmbedding {
    pub fn params(&self) -> &EmbeddingParams {
        &self.params
    }

    pub fn arch(&self) -> &NetworkArch {
        &self.arch
    }

    pub fn latent(&self) -> &LatentSpace {
        &self.latent
    }

    pub fn scheme(&self) -> InitScheme {
        self.params.scheme
    }

    pub fn input_map(&self) -> &Matrix<f64> {
        &self.input_map
    }

    /// Series of layer `i ≥ 2` (bidiverse only).
    pub fn series(&self, i: usize) -> Option<&RandomSeries> {
        match &self.maps[i - 2] {
            LayerMap::Series(s) => Some(s),
            LayerMap::Hash => None,
        }
    }

    /// Forces every series coefficient of layer `i` to `value`.
    #[doc(hidden)]
    pub fn set_series_coefficients(&mut self, i: usize, value: f64) {
        if let LayerMap::Series(s) = &mut self.maps[i - 2] {
            s.coef.iter_mut().for_each(|a| *a = value);
        }
    }

    /// `w₁⁰(c) = A·c[..d]`.
    pub fn eval_first(&self, c: &[f64]) -> Vec<f64> {
        let d = self.arch.input_dim();
        (0..d).map(|r| dot(self.input_map.row(r), &c[..d])).collect()
    }

    /// `w_i⁰(c, c′)` for `i ≥ 2`.
    pub fn eval_layer(&self, i: usize, c: &[f64], c2: &[f64]) -> f64 {
        let g = self.gains[i - 2];
        match &self.maps[i - 2] {
            LayerMap::Series(s) => g * s.eval(c, c2),
            LayerMap::Hash => g * pseudo_gaussian(self.params.seed, i, c, c2),
        }
    }

    /// Draws `widths[i]` codes i.i.d. from `P_i`, independently across layers.
    pub fn sample_codes(&self, widths: &[usize], rng: RngState) -> Result<LatentCodes> {
        let depth = self.latent.depth();
        if widths.len() != depth || widths[depth - 1] != 1 {
            return Err(Error::shape("code widths must match depth and end in 1"));
        }
        let layers = (1..=depth)
            .map(|i| {
                let mut gen = rng.split(i as u64).generator();
                let m = self.latent.dim(i);
                Matrix::from_fn(widths[i - 1], m, |_, _| self.latent.law().draw(&mut gen))
            })
            .collect();
        Ok(LatentCodes { layers })
    }

    /// Evaluates every `w_i⁰` on the given codes.
    pub fn weights_on<T: Scalar>(&self, codes: &LatentCodes) -> Result<(NetworkArch, Weights<T>)> {
        codes.check(&self.latent)?;
        let arch = self.arch.with_widths(codes.widths())?;
        let mut layers = Vec::with_capacity(arch.depth());
        let c1 = codes.layer(1);
        let mut w1 = Matrix::zeros(c1.rows(), arch.input_dim());
        for j in 0..c1.rows() {
            for (o, v) in w1.row_mut(j).iter_mut().zip(self.eval_first(c1.row(j))) {
                *o = T::of(v);
            }
        }
        layers.push(w1);
        for i in 2..=arch.depth() {
            let (lo, hi) = (codes.layer(i - 1), codes.layer(i));
            layers.push(Matrix::from_fn(lo.rows(), hi.rows(), |r, c| {
                T::of(self.eval_layer(i, lo.row(r), hi.row(c)))
            }));
        }
        Ok((arch.clone(), Weights::from_layers(&arch, layers)?))
    }

    /// Finite network and particle system on the same codes.
    pub fn instantiate_coupled<T: Scalar>(&self, codes: &LatentCodes) -> Result<CoupledPair<T>> {
        let (arch, weights) = self.weights_on::<T>(codes)?;
        let particles = ParticleSystem::new(arch.clone(), weights.clone(), T::zero())?;
        Ok(CoupledPair { arch, finite: weights, particles, codes: codes.clone() })
    }

    /// Particle system on `population` codes followed by `tracers` codes,
    /// where only the population enters the averages.
    pub fn instantiate_with_tracers<T: Scalar>(
        &self,
        population: &LatentCodes,
        tracers: &LatentCodes,
    ) -> Result<ParticleSystem<T>> {
        let all = population.concat(tracers)?;
        let (arch, weights) = self.weights_on::<T>(&all)?;
        ParticleSystem::with_tracers(arch, weights, population.widths(), T::zero())
    }
}

/// `Φ⁻¹` of a hash of the quantized codes, layer and seed.
fn pseudo_gaussian(seed: u64, layer: usize, c: &[f64], c2: &[f64]) -> f64 {
    let mut h = mix64(seed ^ mix64(layer as u64));
    for &v in c.iter().chain(std::iter::once(&f64::NAN)).chain(c2) {
        let q = if v.is_nan() { i64::MIN } else { (v / QUANTUM).round() as i64 };
        h = mix64(h ^ q as u64);
    }
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    std.inverse_cdf(unit_open(h))
}

/// Codes `C_i(j_i)`; layer `i` is an `n_i × m_i` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCodes {
    layers: Vec<Matrix<f64>>,
}

impl LatentCodes {
    pub fn from_layers(layers: Vec<Matrix<f64>>) -> Result<Self> {
        if layers.len() < 2 || layers.last().map(|m| m.shape()) != Some((1, 0)) {
            return Err(Error::shape("codes need at least two layers and a single trivial output code"));
        }
        Ok(LatentCodes { layers })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, i: usize) -> &Matrix<f64> {
        &self.layers[i - 1]
    }

    pub fn layers(&self) -> &[Matrix<f64>] {
        &self.layers
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(|m| m.rows()).collect()
    }

    /// The first `widths[i]` codes of each layer.
    pub fn prefix(&self, widths: &[usize]) -> Result<Self> {
        if widths.len() != self.depth() || widths.iter().zip(self.widths()).any(|(&w, n)| w > n || w == 0) {
            return Err(Error::shape("prefix widths exceed the available codes"));
        }
        let layers = self.layers.iter().zip(widths).map(|(m, &w)| m.block(0, 0, w, m.cols())).collect();
        Self::from_layers(layers)
    }

    /// Hidden layers stacked (`self` first); the output code is shared.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.depth() != other.depth() {
            return Err(Error::shape("code sets differ in depth"));
        }
        let depth = self.depth();
        let mut layers = Vec::with_capacity(depth);
        for i in 1..depth {
            let (a, b) = (self.layer(i), other.layer(i));
            if a.cols() != b.cols() {
                return Err(Error::shape(format!("layer {i} codes differ in dimension")));
            }
            let mut data = a.as_slice().to_vec();
            data.extend_from_slice(b.as_slice());
            layers.push(Matrix::from_vec(a.rows() + b.rows(), a.cols(), data)?);
        }
        layers.push(self.layer(depth).clone());
        Self::from_layers(layers)
    }

    fn check(&self, latent: &LatentSpace) -> Result<()> {
        if self.depth() != latent.depth() {
            return Err(Error::shape("codes and latent space differ in depth"));
        }
        for i in 1..=self.depth() {
            if self.layer(i).cols() != latent.dim(i) {
                return Err(Error::shape(format!(
                    "layer {i} codes have dimension {}, expected {}",
                    self.layer(i).cols(),
                    latent.dim(i)
                )));
            }
            if self.layer(i).rows() == 0 {
                return Err(Error::shape(format!("layer {i} has no codes")));
            }
        }
        Ok(())
    }
}

/// A finite network and a particle system instantiated on shared codes.
#[derive(Debug, Clone)]
pub struct CoupledPair<T> {
    pub arch: NetworkArch,
    pub finite: Weights<T>,
    pub particles: ParticleSystem<T>,
    pub codes: LatentCodes,
}
