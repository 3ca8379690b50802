//! Finite-sample proxies for the regularity and diversity of an embedding.

use serde::{Deserialize, Serialize};

use crate::embedding::NeuronalEmbedding;
use crate::error::{Error, Result};
use crate::rng::RngState;

/// Moment growth of `|w_i⁰|` over independent code pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentProxy {
    pub layer: usize,
    pub samples: usize,
    /// `mean |w|^k` for `k = 1..=8`.
    pub moments: Vec<f64>,
    /// `sup_{k ≤ 8} k^{−1/2} (mean |w|^k)^{1/k}`.
    pub k_fit: f64,
}

pub const MAX_MOMENT: usize = 8;

/// Moment proxy of layer `i` from `samples` independent evaluations.
///
/// Layer 1 uses every coordinate of `w₁⁰(C₁)`; layer `i ≥ 2` draws fresh
/// independent `(C_{i−1}, C_i)` pairs.
pub fn moment_proxy(emb: &NeuronalEmbedding, layer: usize, samples: usize, rng: RngState) -> Result<MomentProxy> {
    let depth = emb.arch().depth();
    if layer == 0 || layer > depth {
        return Err(Error::shape(format!("layer {layer} outside 1..={depth}")));
    }
    if samples == 0 {
        return Err(Error::config("moment proxy needs at least one sample"));
    }
    let values: Vec<f64> = if layer == 1 {
        let mut widths = vec![1; depth];
        widths[0] = samples;
        let codes = emb.sample_codes(&widths, rng)?;
        let c = codes.layer(1);
        (0..c.rows()).flat_map(|j| emb.eval_first(c.row(j))).collect()
    } else {
        let mut widths = vec![1; depth];
        widths[layer - 2] = samples;
        if layer < depth {
            widths[layer - 1] = samples;
        }
        let codes = emb.sample_codes(&widths, rng)?;
        let (lo, hi) = (codes.layer(layer - 1), codes.layer(layer));
        (0..samples).map(|s| emb.eval_layer(layer, lo.row(s), hi.row(s.min(hi.rows() - 1)))).collect()
    };
    let n = values.len() as f64;
    let moments: Vec<f64> =
        (1..=MAX_MOMENT).map(|k| values.iter().map(|v| v.abs().powi(k as i32)).sum::<f64>() / n).collect();
    let k_fit = moments
        .iter()
        .enumerate()
        .map(|(idx, &m)| {
            let k = (idx + 1) as f64;
            m.powf(1.0 / k) / k.sqrt()
        })
        .fold(0.0, f64::max);
    Ok(MomentProxy { layer, samples: values.len(), moments, k_fit })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GramDirection {
    /// Functions `c_{i−1} ↦ w_i⁰(c_{i−1}, C_i(j))`.
    Forward,
    /// Functions `c_i ↦ w_i⁰(C_{i−1}(j), c_i)`.
    Backward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramProxy {
    pub layer: usize,
    pub direction: GramDirection,
    pub min_eig: f64,
    pub max_eig: f64,
}

impl GramProxy {
    pub fn ratio(&self) -> f64 {
        self.min_eig / self.max_eig
    }
}

/// Gram matrix `G_{jk} = mean_q f_j(q) f_k(q)` of `functions` sections of
/// `w_i⁰`, estimated on `quadrature` codes drawn from the free side's law.
pub fn gram_proxy(
    emb: &NeuronalEmbedding,
    layer: usize,
    direction: GramDirection,
    functions: usize,
    quadrature: usize,
    rng: RngState,
) -> Result<GramProxy> {
    let depth = emb.arch().depth();
    if layer < 2 || layer >= depth {
        return Err(Error::shape(format!("Gram proxy needs a layer in 2..{depth}")));
    }
    if functions == 0 || quadrature == 0 {
        return Err(Error::config("Gram proxy needs functions and quadrature codes"));
    }
    let mut widths = vec![1; depth];
    let (n_lo, n_hi) = match direction {
        GramDirection::Forward => (quadrature, functions),
        GramDirection::Backward => (functions, quadrature),
    };
    widths[layer - 2] = n_lo;
    widths[layer - 1] = n_hi;
    let codes = emb.sample_codes(&widths, rng)?;
    let (lo, hi) = (codes.layer(layer - 1), codes.layer(layer));
    let f = nalgebra::DMatrix::from_fn(quadrature, functions, |q, j| match direction {
        GramDirection::Forward => emb.eval_layer(layer, lo.row(q), hi.row(j)),
        GramDirection::Backward => emb.eval_layer(layer, lo.row(j), hi.row(q)),
    });
    let gram = (f.transpose() * &f) / quadrature as f64;
    let eig = nalgebra::SymmetricEigen::new(gram).eigenvalues;
    let min_eig = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_eig = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(GramProxy { layer, direction, min_eig, max_eig })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{build_embedding, EmbeddingParams, InitScheme};
    use crate::net::NetworkArch;

    #[test]
    fn gram_is_nondegenerate_both_ways() {
        let arch = NetworkArch::standard(2, vec![8, 8, 1]).unwrap();
        for scheme in [InitScheme::Bidiverse, InitScheme::PseudoIid] {
            let e = build_embedding(&arch, &EmbeddingParams::new(scheme, 1)).unwrap();
            for dir in [GramDirection::Forward, GramDirection::Backward] {
                let g = gram_proxy(&e, 2, dir, 64, 512, RngState::new(3)).unwrap();
                assert!(g.ratio() >= 1e-6, "{scheme:?} {dir:?}: {}", g.ratio());
            }
        }
    }

    #[test]
    fn moment_proxy_is_finite() {
        let arch = NetworkArch::standard(2, vec![8, 8, 1]).unwrap();
        let e = build_embedding(&arch, &EmbeddingParams::new(InitScheme::PseudoIid, 1)).unwrap();
        for layer in 1..=3 {
            let m = moment_proxy(&e, layer, 5000, RngState::new(2)).unwrap();
            assert!(m.k_fit.is_finite() && m.k_fit > 0.0);
        }
    }
}
