//! Linear threshold unit trained with the perceptron rule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagespace::BinaryImage;
use crate::models::{check_dataset, LabeledImage};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel<T> {
    pub width: usize,
    pub height: usize,
    pub weights: Vec<T>,
    pub bias: T,
}

/// Perceptron training schedule. With a positive `margin` an example also
/// triggers an update when its signed score is correct but within `margin`
/// of the threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearTraining {
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub margin: f64,
}

impl Default for LinearTraining {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 1.0,
            margin: 0.0,
        }
    }
}

impl<T: Scalar> LinearModel<T> {
    pub fn new(width: usize, height: usize, weights: Vec<T>, bias: T) -> Result<Self> {
        let model = Self {
            width,
            height,
            weights,
            bias,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            weights: vec![T::zero(); width * height],
            bias: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidConfig("linear model has a zero dimension".into()));
        }
        if self.weights.len() != self.width * self.height {
            return Err(Error::InvalidConfig(format!(
                "linear model has {} weights for a {}x{} grid",
                self.weights.len(),
                self.width,
                self.height
            )));
        }
        if !self.bias.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidConfig("linear model has non-finite parameters".into()));
        }
        Ok(())
    }

    pub fn score(&self, image: &BinaryImage) -> T {
        self.weights
            .iter()
            .zip(image.bits())
            .filter(|(_, bit)| *bit)
            .fold(self.bias, |acc, (w, _)| acc + *w)
    }

    /// 1 iff the score is strictly positive.
    pub fn label(&self, image: &BinaryImage) -> bool {
        self.score(image) > T::zero()
    }

    fn perceptron_step(&mut self, sample: &LabeledImage, rate: T, margin: T) -> bool {
        let score = self.score(&sample.image);
        let needs_update = if sample.label { score <= margin } else { score > -margin };
        if !needs_update {
            return false;
        }
        let step = if sample.label { rate } else { -rate };
        for (w, bit) in self.weights.iter_mut().zip(sample.image.bits()) {
            if bit {
                *w = *w + step;
            }
        }
        self.bias = self.bias + step;
        true
    }
}

/// Perceptron training from zero weights. Each epoch visits the dataset in a
/// seeded shuffle; training stops early after an epoch without mistakes.
pub fn train_linear<T: Scalar>(
    dataset: &[LabeledImage],
    schedule: &LinearTraining,
    seed: u64,
) -> Result<LinearModel<T>> {
    let (width, height) = check_dataset(dataset)?;
    if !schedule.learning_rate.is_finite() || schedule.learning_rate <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "learning rate must be positive and finite, got {}",
            schedule.learning_rate
        )));
    }
    if !schedule.margin.is_finite() || schedule.margin < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "margin must be non-negative and finite, got {}",
            schedule.margin
        )));
    }
    let rate = T::of(schedule.learning_rate);
    let margin = T::of(schedule.margin);
    let mut model = LinearModel::zeros(width, height);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for _ in 0..schedule.epochs {
        order.shuffle(&mut rng);
        let mut mistakes = 0;
        for &i in &order {
            if model.perceptron_step(&dataset[i], rate, margin) {
                mistakes += 1;
            }
        }
        if mistakes == 0 {
            break;
        }
    }
    Ok(model)
}

/// Retrains from scratch on `base` followed by `queries`.
pub fn linear_update<T: Scalar>(
    model: &LinearModel<T>,
    base: &[LabeledImage],
    queries: &[LabeledImage],
    schedule: &LinearTraining,
    seed: u64,
) -> Result<LinearModel<T>> {
    let combined: Vec<LabeledImage> = base.iter().chain(queries).cloned().collect();
    let (width, height) = check_dataset(&combined)?;
    if (width, height) != (model.width, model.height) {
        return Err(Error::InvalidConfig(format!(
            "training images are {width}x{height}, model expects {}x{}",
            model.width, model.height
        )));
    }
    train_linear(&combined, schedule, seed)
}
