use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActivationSpec, LayerRole};

/// Layer count, input dimension, widths and per-layer activations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkArch {
    input_dim: usize,
    widths: Vec<usize>,
    activations: Vec<ActivationSpec>,
}

impl NetworkArch {
    pub fn new(input_dim: usize, widths: Vec<usize>, activations: Vec<ActivationSpec>) -> Result<Self> {
        let arch = NetworkArch { input_dim, widths, activations };
        arch.validate()?;
        Ok(arch)
    }

    /// Hyperbolic-tangent hidden layers and an identity output.
    pub fn standard(input_dim: usize, widths: Vec<usize>) -> Result<Self> {
        let depth = widths.len();
        let mut activations = vec![ActivationSpec::tanh_hidden(); depth.saturating_sub(1)];
        activations.push(ActivationSpec::identity_output());
        Self::new(input_dim, widths, activations)
    }

    fn validate(&self) -> Result<()> {
        let depth = self.widths.len();
        if depth < 2 {
            return Err(Error::config(format!("need at least 2 layers, got {depth}")));
        }
        if self.input_dim == 0 {
            return Err(Error::config("input dimension must be positive"));
        }
        if self.widths[..depth - 1].iter().any(|&n| n == 0) {
            return Err(Error::config("hidden widths must be positive"));
        }
        if self.widths[depth - 1] != 1 {
            return Err(Error::config(format!("output width must be 1, got {}", self.widths[depth - 1])));
        }
        if self.activations.len() != depth {
            return Err(Error::config(format!(
                "{} activations given for {depth} layers",
                self.activations.len()
            )));
        }
        if self.activations[depth - 1].role != LayerRole::Output
            || self.activations[..depth - 1].iter().any(|a| a.role != LayerRole::Hidden)
        {
            return Err(Error::config("activation roles must be hidden..hidden, output"));
        }
        Ok(())
    }

    /// Number of layers `L`.
    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// `n_i` for 1-based `i`.
    pub fn width(&self, i: usize) -> usize {
        self.widths[i - 1]
    }

    /// `φ_i` for 1-based `i`.
    pub fn activation(&self, i: usize) -> &ActivationSpec {
        &self.activations[i - 1]
    }

    pub fn activations(&self) -> &[ActivationSpec] {
        &self.activations
    }

    /// Same activations, different widths.
    pub fn with_widths(&self, widths: Vec<usize>) -> Result<Self> {
        Self::new(self.input_dim, widths, self.activations.clone())
    }
}
