//! Experiment configuration, read from a JSON document.
//!
//! Unknown keys are rejected at every level. See the README for the full
//! schema and an example per kind.

use std::path::{Path, PathBuf};

use mflab_core::embedding::{build_embedding, EmbeddingParams};
use mflab_core::mf::Scheme;
use mflab_core::model::{
    ActivationKind, ActivationSpec, InputLaw, LayerRole, LossSpec, ScheduleForm, Schedules, Teacher,
};
use mflab_core::net::{BatchMode, NetworkArch};
use mflab_core::reduce::Reduction;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    TrainFinite,
    TrainMf,
    Couple,
    Diversity,
    GradCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::TrainFinite,
        ExperimentKind::TrainMf,
        ExperimentKind::Couple,
        ExperimentKind::Diversity,
        ExperimentKind::GradCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::TrainFinite => "train-finite",
            ExperimentKind::TrainMf => "train-mf",
            ExperimentKind::Couple => "couple",
            ExperimentKind::Diversity => "diversity",
            ExperimentKind::GradCheck => "grad-check",
        }
    }

    fn needs_sgd(self) -> bool {
        matches!(self, ExperimentKind::TrainFinite | ExperimentKind::Couple)
    }

    fn needs_integration(self) -> bool {
        matches!(self, ExperimentKind::TrainMf | ExperimentKind::Couple | ExperimentKind::Diversity)
    }

    /// Kinds whose metrics speak to convergence to a global minimizer,
    /// which presumes `ξ_L ≡ 1`.
    fn targets_convergence(self) -> bool {
        matches!(self, ExperimentKind::TrainMf)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub input_dim: usize,
    /// `n_1, …, n_L`; the last must be 1.
    pub widths: Vec<usize>,
    #[serde(default = "default_hidden")]
    pub hidden_activation: ActivationKind,
    #[serde(default = "default_output")]
    pub output_activation: ActivationKind,
}

fn default_hidden() -> ActivationKind {
    ActivationKind::Tanh
}

fn default_output() -> ActivationKind {
    ActivationKind::Identity
}

impl ArchConfig {
    pub fn build(&self) -> mflab_core::Result<NetworkArch> {
        self.build_with(self.widths.clone())
    }

    pub fn build_with(&self, widths: Vec<usize>) -> mflab_core::Result<NetworkArch> {
        let depth = widths.len();
        let mut acts = vec![ActivationSpec::new(self.hidden_activation, LayerRole::Hidden); depth.saturating_sub(1)];
        acts.push(ActivationSpec::new(self.output_activation, LayerRole::Output));
        NetworkArch::new(self.input_dim, widths, acts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LossConfig {
    Huber { delta: f64 },
    Logistic,
    HalfSquared,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig::Huber { delta: 1.0 }
    }
}

impl LossConfig {
    pub fn spec(self) -> LossSpec {
        match self {
            LossConfig::Huber { delta } => LossSpec::huber(delta),
            LossConfig::Logistic => LossSpec::logistic(),
            LossConfig::HalfSquared => LossSpec::half_squared(),
        }
    }
}

/// One schedule for every layer, or a list with one entry per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleConfig {
    PerLayer(Vec<ScheduleForm>),
    Shared(ScheduleForm),
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig::Shared(ScheduleForm::Constant { value: 1.0 })
    }
}

impl ScheduleConfig {
    pub fn build(&self, depth: usize) -> mflab_core::Result<Schedules> {
        match self {
            ScheduleConfig::Shared(form) => Schedules::new(vec![form.clone(); depth]),
            ScheduleConfig::PerLayer(forms) => Schedules::new(forms.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub teacher: Teacher,
    #[serde(default = "default_inputs")]
    pub inputs: InputLaw,
    #[serde(default)]
    pub noise_std: f64,
    /// Size of the evaluation panel standing in for `𝔼_Z`.
    pub panel_size: usize,
    /// Train on the panel itself (uniform over its samples) instead of
    /// fresh teacher draws. Required for full-batch SGD.
    #[serde(default)]
    pub finite: bool,
}

fn default_inputs() -> InputLaw {
    InputLaw::UniformCube { half_width: 1.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub eps: f64,
    pub steps: u64,
    #[serde(default = "one")]
    pub log_every: u64,
    #[serde(default)]
    pub batch: BatchMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    pub h: f64,
    pub horizon: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "one")]
    pub checkpoint_every: u64,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiversityConfig {
    /// Gaussian probes per layer.
    #[serde(default = "default_probes")]
    pub probes: usize,
    /// Layers to probe; defaults to `1..L−1`.
    #[serde(default)]
    pub layers: Option<Vec<usize>>,
    /// Particles per layer checked for consistency with their stored path.
    #[serde(default = "default_consistency")]
    pub consistency_particles: usize,
}

fn default_probes() -> usize {
    16
}

fn default_consistency() -> usize {
    4
}

impl Default for DiversityConfig {
    fn default() -> Self {
        DiversityConfig { probes: default_probes(), layers: None, consistency_particles: default_consistency() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradCheckConfig {
    /// Panel samples checked, each at the instantiated initialization.
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_fd_step")]
    pub h: f64,
}

fn default_instances() -> usize {
    20
}

fn default_fd_step() -> f64 {
    1e-5
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { instances: default_instances(), h: default_fd_step() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Master seed; every random stream of the run is split from it.
    #[serde(default)]
    pub seed: u64,
    pub arch: ArchConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub schedules: ScheduleConfig,
    pub data: DataConfig,
    pub embedding: EmbeddingParams,
    /// Particle counts `M_i` of the mean-field system. For `couple`, any
    /// value other than the architecture widths makes the finite network's
    /// neurons tracers of a separate population.
    #[serde(default)]
    pub population: Option<Vec<usize>>,
    #[serde(default)]
    pub sgd: Option<SgdConfig>,
    #[serde(default)]
    pub integration: Option<IntegrationConfig>,
    #[serde(default)]
    pub diversity: Option<DiversityConfig>,
    #[serde(default)]
    pub grad_check: Option<GradCheckConfig>,
    /// Worker threads for the drift and diagnostic reductions.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Fixed-order reductions; required for bitwise replay.
    #[serde(default = "yes")]
    pub deterministic: bool,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(vec![format!("config: {e}")]))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn reduction(&self) -> Reduction {
        if self.deterministic {
            Reduction::Tree
        } else {
            Reduction::Unordered
        }
    }

    pub fn population_widths(&self) -> Vec<usize> {
        self.population.clone().unwrap_or_else(|| self.arch.widths.clone())
    }

    /// Every violated invariant, or `Ok` if there are none.
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        let w = &self.arch.widths;
        let depth = w.len();
        if depth < 2 {
            v.push(format!("arch.widths: need at least 2 layers, got {depth}"));
        }
        if w.last().is_some_and(|&n| n != 1) {
            v.push(format!("arch.widths: output width n_L must be 1, got {}", w[depth - 1]));
        }
        if w.iter().take(depth.saturating_sub(1)).any(|&n| n == 0) {
            v.push("arch.widths: hidden widths must be positive".into());
        }
        if self.arch.input_dim == 0 {
            v.push("arch.input_dim: must be positive".into());
        }
        let arch = if v.is_empty() {
            match self.arch.build() {
                Ok(a) => Some(a),
                Err(e) => {
                    v.push(format!("arch: {e}"));
                    None
                }
            }
        } else {
            None
        };

        if let Err(e) = self.loss.spec().validate() {
            v.push(format!("loss: {e}"));
        }
        let schedules = match self.schedules.build(depth.max(1)) {
            Ok(s) => Some(s),
            Err(e) => {
                v.push(format!("schedules: {e}"));
                None
            }
        };
        if let Some(s) = &schedules {
            if s.depth() != depth {
                v.push(format!("schedules: {} given for {depth} layers", s.depth()));
            } else if self.kind.targets_convergence() && !s.layer(depth).is_identically_one() {
                v.push(format!("schedules: {} runs need xi_L identically 1", self.kind.name()));
            }
        }

        let teacher_dim = match &self.data.teacher {
            Teacher::TanhLinear { weights } | Teacher::Linear { weights } => weights.len(),
        };
        if teacher_dim != self.arch.input_dim {
            v.push(format!("data.teacher: {teacher_dim} weights for input dimension {}", self.arch.input_dim));
        }
        let InputLaw::UniformCube { half_width } = self.data.inputs;
        if !(half_width > 0.0 && half_width.is_finite()) {
            v.push("data.inputs: half_width must be positive".into());
        }
        if !(self.data.noise_std >= 0.0 && self.data.noise_std.is_finite()) {
            v.push("data.noise_std: must be finite and nonnegative".into());
        }
        if self.data.panel_size == 0 {
            v.push("data.panel_size: must be positive".into());
        }

        if let Some(arch) = &arch {
            if let Err(e) = build_embedding(arch, &self.embedding) {
                v.push(format!("embedding: {e}"));
            }
        }

        let pop = self.population_widths();
        if pop.len() != depth || pop.last() != Some(&1) || pop.iter().any(|&n| n == 0) {
            v.push(format!("population: {pop:?} must have {depth} positive entries ending in 1"));
        }

        if self.kind.needs_sgd() && self.sgd.is_none() {
            v.push(format!("sgd: required for {}", self.kind.name()));
        }
        if let Some(s) = &self.sgd {
            if !(s.eps > 0.0 && s.eps.is_finite()) {
                v.push(format!("sgd.eps: must be positive, got {}", s.eps));
            }
            if s.batch == BatchMode::Full && !self.data.finite {
                v.push("sgd.batch: full-batch training needs data.finite = true".into());
            }
        }
        if self.kind.needs_integration() && self.integration.is_none() {
            v.push(format!("integration: required for {}", self.kind.name()));
        }
        let mut n_steps = None;
        if let Some(i) = &self.integration {
            if !(i.h > 0.0 && i.h.is_finite()) {
                v.push(format!("integration.h: must be positive, got {}", i.h));
            }
            if !(i.horizon >= 0.0 && i.horizon.is_finite()) {
                v.push(format!("integration.horizon: must be nonnegative, got {}", i.horizon));
            }
            if i.checkpoint_every == 0 {
                v.push("integration.checkpoint_every: must be at least 1".into());
            }
            if i.h > 0.0 && i.horizon >= 0.0 {
                let n = (i.horizon / i.h).round();
                if (n * i.h - i.horizon).abs() > 1e-9 * i.horizon.max(1.0) {
                    v.push(format!("integration.horizon: {} is not a multiple of h = {}", i.horizon, i.h));
                } else {
                    n_steps = Some(n as u64);
                }
            }
            if self.kind == ExperimentKind::Diversity && i.checkpoint_every != 1 {
                v.push("integration.checkpoint_every: diversity runs need a checkpoint at every step".into());
            }
        }

        if self.kind == ExperimentKind::Couple {
            if let (Some(s), Some(i), Some(n)) = (&self.sgd, &self.integration, n_steps) {
                if s.eps > 0.0 && i.checkpoint_every > 0 {
                    check_alignment(s, i, n, &mut v);
                }
            }
        }
        if self.kind == ExperimentKind::Diversity {
            let d = self.diversity.clone().unwrap_or_default();
            if d.probes == 0 {
                v.push("diversity.probes: must be positive".into());
            }
            if let Some(layers) = &d.layers {
                if layers.is_empty() || layers.iter().any(|&l| l == 0 || l >= depth) {
                    v.push(format!("diversity.layers: each layer must lie in 1..{}", depth.saturating_sub(1)));
                }
            }
        }
        if self.kind == ExperimentKind::GradCheck {
            let g = self.grad_check.clone().unwrap_or_default();
            if g.instances == 0 {
                v.push("grad_check.instances: must be positive".into());
            }
            if !(g.h > 0.0 && g.h.is_finite()) {
                v.push("grad_check.h: must be positive".into());
            }
        }
        if self.threads == Some(0) {
            v.push("threads: must be at least 1".into());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(v))
        }
    }
}

/// Every logged SGD step `k` must land on a checkpoint at `t = kε`.
fn check_alignment(s: &SgdConfig, i: &IntegrationConfig, n_steps: u64, v: &mut Vec<String>) {
    let stride = i.h * i.checkpoint_every as f64;
    let mut logged: Vec<u64> = if s.log_every == 0 { vec![] } else { (0..=s.steps).step_by(s.log_every as usize).collect() };
    if logged.last() != Some(&s.steps) {
        logged.push(s.steps);
    }
    for k in logged {
        let t = k as f64 * s.eps;
        let m = (t / stride).round();
        let tol = 1e-9 * t.max(1.0);
        let on_grid = (m * stride - t).abs() <= tol;
        let step = m as u64 * i.checkpoint_every;
        let is_final = (t - n_steps as f64 * i.h).abs() <= tol;
        if !((on_grid && step <= n_steps) || is_final) {
            v.push(format!(
                "sgd/integration: logged step {k} at t = {t} has no mean-field checkpoint (h = {}, checkpoint_every = {}, horizon = {})",
                i.h, i.checkpoint_every, i.horizon
            ));
            return;
        }
    }
}
