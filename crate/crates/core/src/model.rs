//! The online-learner interface and the closed set of model variants.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::attention::AttentionModel;
use crate::autoencoder::ModelDims;
use crate::baseline::LinearOgd;
use crate::denoise::CorruptionPolicy;
use crate::error::{Error, Result};
use crate::hedge::HedgeModel;
use crate::numerics::Vector;
use crate::params::ParamSet;
use crate::settings::ModelSettings;

/// A learner driven test-then-train: `predict` sees only the features, and
/// `learn` receives the label of the example last passed to `predict`.
pub trait OnlineClassifier {
    fn input_dim(&self) -> usize;
    fn num_classes(&self) -> usize;

    /// Class probabilities for `x` under the current parameters. Caches the
    /// forward pass for the following [`learn`](Self::learn).
    fn predict(&mut self, x: &[f64]) -> Result<Vector>;

    /// Updates on the cached example with its true label `y`.
    fn learn(&mut self, y: usize) -> Result<StepRecord>;

    fn step(&mut self, x: &[f64], y: usize) -> Result<StepRecord> {
        self.predict(x)?;
        self.learn(y)
    }
}

/// Per-step diagnostics. Optional fields are only set by the variants that
/// have the corresponding state.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StepRecord {
    /// 1-based step counter of the model after this update.
    pub t: u64,
    /// `ŷ`, computed before the update.
    pub prediction: Vector,
    pub predicted_class: usize,
    pub true_class: usize,
    pub reconstruction_loss: f64,
    pub prediction_loss: f64,
    pub total_loss: f64,
    /// Trade-off coefficients used in `total_loss` (after this step's update).
    pub a_re: f64,
    pub a_pre: f64,
    /// Cross-entropy of each per-layer classifier (hedge variants).
    pub layer_losses: Option<Vec<f64>>,
    /// Ensemble weights after this step's hedge update (hedge variants).
    pub beta: Option<Vec<f64>>,
    /// Attention over hidden layers used for `prediction` (attention variants).
    pub attention: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Hedge-weighted per-layer classifiers.
    Odlae1,
    /// Self-attention fusion of hidden layers.
    Odlae2,
    /// `Odlae1` trained on corrupted inputs.
    Odldae1,
    /// `Odlae2` trained on corrupted inputs.
    Odldae2,
    LinearOgdBaseline,
}

impl Variant {
    pub fn tag(self) -> u8 {
        match self {
            Variant::Odlae1 => 1,
            Variant::Odlae2 => 2,
            Variant::Odldae1 => 3,
            Variant::Odldae2 => 4,
            Variant::LinearOgdBaseline => 5,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            1 => Variant::Odlae1,
            2 => Variant::Odlae2,
            3 => Variant::Odldae1,
            4 => Variant::Odldae2,
            5 => Variant::LinearOgdBaseline,
            _ => return None,
        })
    }

    pub fn is_denoising(self) -> bool {
        matches!(self, Variant::Odldae1 | Variant::Odldae2)
    }

    pub fn uses_hedge(self) -> bool {
        matches!(self, Variant::Odlae1 | Variant::Odldae1)
    }

    pub fn uses_attention(self) -> bool {
        matches!(self, Variant::Odlae2 | Variant::Odldae2)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Odlae1 => "odlae1",
            Variant::Odlae2 => "odlae2",
            Variant::Odldae1 => "odldae1",
            Variant::Odldae2 => "odldae2",
            Variant::LinearOgdBaseline => "linear_ogd_baseline",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "odlae1" | "odlae_1" => Ok(Variant::Odlae1),
            "odlae2" | "odlae_2" => Ok(Variant::Odlae2),
            "odldae1" | "odldae_1" => Ok(Variant::Odldae1),
            "odldae2" | "odldae_2" => Ok(Variant::Odldae2),
            "linear_ogd_baseline" | "linear_ogd" | "linear" | "ogd" => {
                Ok(Variant::LinearOgdBaseline)
            }
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

/// Any of the supported learners.
#[derive(Clone, Debug)]
pub enum Model {
    Hedge(HedgeModel),
    Attention(AttentionModel),
    Linear(LinearOgd),
}

impl Model {
    pub fn steps(&self) -> u64 {
        match self {
            Model::Hedge(m) => m.steps,
            Model::Attention(m) => m.steps,
            Model::Linear(m) => m.steps,
        }
    }

    fn inner(&self) -> &dyn OnlineClassifier {
        match self {
            Model::Hedge(m) => m,
            Model::Attention(m) => m,
            Model::Linear(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn OnlineClassifier {
        match self {
            Model::Hedge(m) => m,
            Model::Attention(m) => m,
            Model::Linear(m) => m,
        }
    }
}

impl OnlineClassifier for Model {
    fn input_dim(&self) -> usize {
        self.inner().input_dim()
    }

    fn num_classes(&self) -> usize {
        self.inner().num_classes()
    }

    fn predict(&mut self, x: &[f64]) -> Result<Vector> {
        self.inner_mut().predict(x)
    }

    fn learn(&mut self, y: usize) -> Result<StepRecord> {
        self.inner_mut().learn(y)
    }
}

pub(crate) fn check_label(y: usize, classes: usize) -> Result<()> {
    if y >= classes {
        return Err(Error::InvalidInput(format!(
            "label {y} out of range for {classes} classes"
        )));
    }
    Ok(())
}

pub(crate) fn check_input(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(Error::shape("model input", dim, x.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature value".into()));
    }
    Ok(())
}

pub(crate) fn no_pending() -> Error {
    Error::InvalidInput("learn called without a preceding predict".into())
}

/// Builds a fresh model. Corruption is only honoured by the denoising
/// variants; the linear baseline runs SGD at the configured rate.
pub fn build_model(
    variant: Variant,
    dims: ModelDims,
    settings: &ModelSettings,
    seed: u64,
) -> Result<Model> {
    let mut settings = *settings;
    if !variant.is_denoising() {
        settings.corruption = CorruptionPolicy::None;
    }
    Ok(match variant {
        Variant::Odlae1 | Variant::Odldae1 => Model::Hedge(HedgeModel::new(dims, &settings, seed)?),
        Variant::Odlae2 | Variant::Odldae2 => {
            Model::Attention(AttentionModel::new(dims, &settings, seed)?)
        }
        Variant::LinearOgdBaseline => {
            settings.validate()?;
            Model::Linear(LinearOgd::new(
                dims.input_dim,
                dims.output_dim,
                settings.optimizer.lr(),
            )?)
        }
    })
}

impl ParamSet for Model {
    fn shapes(&self) -> Vec<(usize, usize)> {
        match self {
            Model::Hedge(m) => m.shapes(),
            Model::Attention(m) => m.shapes(),
            Model::Linear(m) => m.shapes(),
        }
    }

    fn tensors(&self) -> Vec<&[f64]> {
        match self {
            Model::Hedge(m) => m.tensors(),
            Model::Attention(m) => m.tensors(),
            Model::Linear(m) => m.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Model::Hedge(m) => m.tensors_mut(),
            Model::Attention(m) => m.tensors_mut(),
            Model::Linear(m) => m.tensors_mut(),
        }
    }
}
