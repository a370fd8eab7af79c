//! K-level binary predictors over binary images.

mod linear;
mod neural;
mod rule;

pub use linear::{linear_update, train_linear, LinearModel, LinearTraining};
pub use neural::{train_neural, Activation, DenseLayer, LayerGradient, NeuralModel, NeuralTraining};
pub use rule::{rule_update, rule_update_over, PixelSet, RuleLevel, RuleModel};

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::imagespace::BinaryImage;
use crate::scalar::Scalar;

/// Per-level labels, lowest abstraction level first. The last entry is the
/// diagnosis label.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PredictionVector(pub Vec<bool>);

impl PredictionVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn top(&self) -> bool {
        *self.0.last().expect("prediction vectors have at least one level")
    }
}

impl Serialize for PredictionVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.0.iter().map(|&b| u8::from(b)))
    }
}

/// A training example.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledImage {
    pub image: BinaryImage,
    pub label: bool,
}

impl Serialize for LabeledImage {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        RawLabeledImage {
            image: self.image.to_bitstring(),
            label: u8::from(self.label),
        }
        .serialize(serializer)
    }
}

/// Wire form of [`LabeledImage`]; dimensions come from the enclosing document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RawLabeledImage {
    pub image: String,
    pub label: u8,
}

impl RawLabeledImage {
    pub fn resolve(&self, width: usize, height: usize) -> Result<LabeledImage> {
        let label = match self.label {
            0 => false,
            1 => true,
            other => {
                return Err(Error::InvalidConfig(format!("labels must be 0 or 1, got {other}")))
            }
        };
        Ok(LabeledImage {
            image: BinaryImage::from_bitstring(width, height, &self.image)?,
            label,
        })
    }
}

/// Checks a dataset is non-empty with uniform dimensions; returns them.
pub(crate) fn check_dataset(dataset: &[LabeledImage]) -> Result<(usize, usize)> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::InvalidConfig("training dataset is empty".into()))?;
    let dims = first.image.dims();
    if let Some(i) = dataset.iter().position(|s| s.image.dims() != dims) {
        return Err(Error::InvalidConfig(format!(
            "training image {i} does not match the {}x{} grid of the first",
            dims.0, dims.1
        )));
    }
    Ok(dims)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model<T> {
    Rule(RuleModel),
    Linear(LinearModel<T>),
    Neural(NeuralModel<T>),
}

impl<T: Scalar> Model<T> {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Model::Rule(m) => (m.width, m.height),
            Model::Linear(m) => (m.width, m.height),
            Model::Neural(m) => (m.width, m.height),
        }
    }

    /// Number of abstraction levels K.
    pub fn levels(&self) -> usize {
        match self {
            Model::Rule(m) => m.levels.len(),
            Model::Linear(_) | Model::Neural(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Rule(_) => "rule",
            Model::Linear(_) => "linear",
            Model::Neural(_) => "neural",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Model::Rule(m) => m.validate(),
            Model::Linear(m) => m.validate(),
            Model::Neural(m) => m.validate(),
        }
    }

    fn check_image(&self, image: &BinaryImage) -> Result<()> {
        let (w, h) = self.dims();
        if image.dims() != (w, h) {
            return Err(Error::InvalidInput(format!(
                "image is {}x{}, model expects {w}x{h}",
                image.width(),
                image.height()
            )));
        }
        Ok(())
    }

    pub fn predict(&self, image: &BinaryImage) -> Result<PredictionVector> {
        self.check_image(image)?;
        Ok(match self {
            Model::Rule(m) => m.predict_levels(image),
            Model::Linear(m) => PredictionVector(vec![m.label(image)]),
            Model::Neural(m) => PredictionVector(vec![m.label(image)]),
        })
    }

    /// The last-level label.
    pub fn top_label(&self, image: &BinaryImage) -> Result<bool> {
        self.check_image(image)?;
        Ok(match self {
            Model::Rule(m) => m
                .levels
                .last()
                .expect("rule models have at least one level")
                .matches(image),
            Model::Linear(m) => m.label(image),
            Model::Neural(m) => m.label(image),
        })
    }
}

impl<T> From<RuleModel> for Model<T> {
    fn from(m: RuleModel) -> Self {
        Model::Rule(m)
    }
}

impl<T> From<LinearModel<T>> for Model<T> {
    fn from(m: LinearModel<T>) -> Self {
        Model::Linear(m)
    }
}

impl<T> From<NeuralModel<T>> for Model<T> {
    fn from(m: NeuralModel<T>) -> Self {
        Model::Neural(m)
    }
}
