use crate::embedding::{build_embedding, EmbeddingParams, InitScheme, LatentCodes, LatentLaw, NeuronalEmbedding};
use crate::error::{Error, Result};
use crate::io::{parse_err, Container};
use crate::matrix::Matrix;
use crate::mf::{MfTrajectory, ParticleSystem, Scheme};
use crate::net::{FiniteSnapshot, FiniteTrajectory, NetworkArch, Weights};
use crate::scalar::Scalar;

fn join<D: ToString>(xs: &[D]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn split<F: std::str::FromStr>(raw: &str) -> Result<Vec<F>> {
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',').map(|t| t.parse().map_err(|_| parse_err(0, format!("bad list item `{t}`")))).collect()
}

fn arch_headers(c: &mut Container, arch: &NetworkArch) {
    c.set_header("input_dim", arch.input_dim());
    c.set_header("widths", join(arch.widths()));
}

fn check_arch(c: &Container, arch: &NetworkArch) -> Result<()> {
    let d: usize = c.parse_header("input_dim")?;
    let widths: Vec<usize> = split(c.header("widths").unwrap_or(""))?;
    if d != arch.input_dim() || widths != arch.widths() {
        return Err(Error::shape(format!(
            "container holds d = {d}, widths {widths:?}; expected d = {}, widths {:?}",
            arch.input_dim(),
            arch.widths()
        )));
    }
    Ok(())
}

fn push_weights<T: Scalar>(c: &mut Container, prefix: &str, w: &Weights<T>) {
    for (i, m) in w.layers().iter().enumerate() {
        c.push_record(&format!("{prefix}w{}", i + 1), m);
    }
}

fn read_weights<T: Scalar>(c: &Container, prefix: &str, arch: &NetworkArch) -> Result<Weights<T>> {
    let layers = (1..=arch.depth()).map(|i| c.require(&format!("{prefix}w{i}")).map(Matrix::cast)).collect::<Result<_>>()?;
    Weights::from_layers(arch, layers)
}

/// Records `w1..wL` of a single weight set.
pub fn weights_to_container<T: Scalar>(arch: &NetworkArch, w: &Weights<T>) -> Container {
    let mut c = Container::new();
    c.set_header("kind", "weights");
    arch_headers(&mut c, arch);
    push_weights(&mut c, "", w);
    c
}

pub fn weights_from_container<T: Scalar>(c: &Container, arch: &NetworkArch) -> Result<Weights<T>> {
    check_arch(c, arch)?;
    read_weights(c, "", arch)
}

/// Snapshot `k` is stored as records `s{k}.w1..wL`; header `steps` lists the step indices.
pub fn finite_trajectory_to_container<T: Scalar>(arch: &NetworkArch, traj: &FiniteTrajectory<T>) -> Container {
    let mut c = Container::new();
    c.set_header("kind", "finite-trajectory");
    arch_headers(&mut c, arch);
    c.set_header("eps", traj.eps);
    let steps: Vec<u64> = traj.snapshots.iter().map(|s| s.step).collect();
    c.set_header("steps", join(&steps));
    for (k, s) in traj.snapshots.iter().enumerate() {
        push_weights(&mut c, &format!("s{k}."), &s.weights);
    }
    c
}

pub fn finite_trajectory_from_container<T: Scalar>(c: &Container, arch: &NetworkArch) -> Result<FiniteTrajectory<T>> {
    check_arch(c, arch)?;
    let steps: Vec<u64> = split(c.header("steps").unwrap_or(""))?;
    let snapshots = steps
        .iter()
        .enumerate()
        .map(|(k, &step)| Ok(FiniteSnapshot { step, weights: read_weights(c, &format!("s{k}."), arch)? }))
        .collect::<Result<_>>()?;
    Ok(FiniteTrajectory { eps: c.parse_header("eps")?, snapshots })
}

/// Checkpoint `m` is stored as records `c{m}.w1..wL`; the grid lives in the headers.
pub fn mf_trajectory_to_container<T: Scalar>(traj: &MfTrajectory<T>) -> Container {
    let first = traj.first();
    let mut c = Container::new();
    c.set_header("kind", "mf-trajectory");
    arch_headers(&mut c, first.arch());
    c.set_header("populations", join(first.populations()));
    c.set_header("scheme", traj.scheme.name());
    c.set_header("h", traj.h);
    c.set_header("checkpoint_every", traj.checkpoint_every);
    let times: Vec<f64> = traj.times();
    c.set_header("times", join(&times));
    for (m, ps) in traj.checkpoints.iter().enumerate() {
        push_weights(&mut c, &format!("c{m}."), ps.weights());
    }
    c
}

pub fn mf_trajectory_from_container<T: Scalar>(c: &Container, arch: &NetworkArch) -> Result<MfTrajectory<T>> {
    check_arch(c, arch)?;
    let scheme = match c.header("scheme") {
        Some("euler") => Scheme::Euler,
        Some("rk4") => Scheme::Rk4,
        other => return Err(parse_err(0, format!("unknown scheme {other:?}"))),
    };
    let populations: Vec<usize> = split(c.header("populations").unwrap_or(""))?;
    let times: Vec<f64> = split(c.header("times").unwrap_or(""))?;
    let checkpoints = times
        .iter()
        .enumerate()
        .map(|(m, &t)| {
            let w = read_weights(c, &format!("c{m}."), arch)?;
            ParticleSystem::with_tracers(arch.clone(), w, populations.clone(), T::of(t))
        })
        .collect::<Result<Vec<_>>>()?;
    if checkpoints.is_empty() {
        return Err(parse_err(0, "trajectory has no checkpoints"));
    }
    Ok(MfTrajectory { h: c.parse_header("h")?, scheme, checkpoint_every: c.parse_header("checkpoint_every")?, checkpoints })
}

/// Records `codes1..codesL`.
pub fn codes_to_container(codes: &LatentCodes) -> Container {
    let mut c = Container::new();
    c.set_header("kind", "latent-codes");
    c.set_header("widths", join(&codes.widths()));
    for (i, m) in codes.layers().iter().enumerate() {
        c.push_record(&format!("codes{}", i + 1), m);
    }
    c
}

pub fn codes_from_container(c: &Container) -> Result<LatentCodes> {
    let widths: Vec<usize> = split(c.header("widths").unwrap_or(""))?;
    let layers = (1..=widths.len()).map(|i| c.require(&format!("codes{i}")).cloned()).collect::<Result<_>>()?;
    LatentCodes::from_layers(layers)
}

/// Header keys record every parameter; the drawn series and input map are
/// stored as records for inspection and checked on reload.
pub fn embedding_to_container(emb: &NeuronalEmbedding) -> Container {
    let p = emb.params();
    let mut c = Container::new();
    c.set_header("kind", "embedding");
    arch_headers(&mut c, emb.arch());
    c.set_header("scheme", p.scheme.name());
    c.set_header("seed", p.seed);
    c.set_header("latent_dim", p.latent_dim);
    c.set_header("law", p.law.name());
    c.set_header("terms", p.terms);
    c.set_header("feature_scale", p.feature_scale);
    c.set_header("gains", p.gains.as_deref().map(join).unwrap_or_else(|| "default".into()));
    c.set_header("input_map", if p.input_map.is_some() { "explicit" } else { "random" });
    c.push_record("input_map", emb.input_map());
    for i in 2..=emb.arch().depth() {
        if let Some(s) = emb.series(i) {
            c.push_record(&format!("series{i}.coef"), &Matrix::from_vec(1, s.coef.len(), s.coef.clone()).expect("row"));
            c.push_record(&format!("series{i}.left"), &s.left);
            c.push_record(&format!("series{i}.right"), &s.right);
            c.push_record(&format!("series{i}.offset"), &Matrix::from_vec(1, s.offset.len(), s.offset.clone()).expect("row"));
        }
    }
    c
}

pub fn embedding_from_container(c: &Container, arch: &NetworkArch) -> Result<NeuronalEmbedding> {
    check_arch(c, arch)?;
    let scheme = match c.header("scheme") {
        Some("bidiverse") => InitScheme::Bidiverse,
        Some("pseudo-iid") => InitScheme::PseudoIid,
        other => return Err(parse_err(0, format!("unknown scheme {other:?}"))),
    };
    let law = match c.header("law") {
        Some("standard-gaussian") => LatentLaw::StandardGaussian,
        Some("uniform-cube") => LatentLaw::UniformCube,
        other => return Err(parse_err(0, format!("unknown law {other:?}"))),
    };
    let gains = match c.header("gains") {
        Some("default") | None => None,
        Some(raw) => Some(split(raw)?),
    };
    let input_map = match c.header("input_map") {
        Some("explicit") => {
            let m = c.require("input_map")?;
            Some((0..m.rows()).map(|r| m.row(r).to_vec()).collect())
        }
        _ => None,
    };
    let params = EmbeddingParams {
        scheme,
        seed: c.parse_header("seed")?,
        latent_dim: c.parse_header("latent_dim")?,
        law,
        terms: c.parse_header("terms")?,
        feature_scale: c.parse_header("feature_scale")?,
        gains,
        input_map,
    };
    let emb = build_embedding(arch, &params)?;
    if embedding_to_container(&emb) != *c {
        return Err(parse_err(0, "stored embedding records disagree with the rebuilt embedding"));
    }
    Ok(emb)
}
