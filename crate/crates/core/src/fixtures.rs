//! Named, seeded experiment fixtures.
//!
//! * `fig1b`: two single-level 4x4 rules; A's rule family can express B.
//! * `fig1c`: B also requires the last pixel, which A may never constrain,
//!   so A can only approximate B.
//! * `fig2-diagonal`: the two 4x4 diagonals and their single-pixel flips
//!   (34 images); A and B disagree on exactly 4 of them.
//! * `eval-squares`: 8x8 images holding one filled square in each half,
//!   labelled 1 iff the left square is strictly larger. B is a trained
//!   neural network, A a perceptron; evaluation runs on every such image
//!   plus its single-pixel flips.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::engine::{EngineConfig, Mode, Updater};
use crate::error::{Error, Result};
use crate::imagespace::{BinaryImage, ImageSpaceSpec};
use crate::models::{
    train_linear, train_neural, LabeledImage, LinearTraining, Model, NeuralTraining, PixelSet, RuleLevel,
    RuleModel,
};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Fixture {
    #[serde(rename = "fig1b")]
    Fig1b,
    #[serde(rename = "fig1c")]
    Fig1c,
    #[serde(rename = "fig2-diagonal")]
    Fig2Diagonal,
    #[serde(rename = "eval-squares")]
    EvalSquares,
}

impl Fixture {
    pub const ALL: [Fixture; 4] = [Fixture::Fig1b, Fixture::Fig1c, Fixture::Fig2Diagonal, Fixture::EvalSquares];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Fig1b => "fig1b",
            Fixture::Fig1c => "fig1c",
            Fixture::Fig2Diagonal => "fig2-diagonal",
            Fixture::EvalSquares => "eval-squares",
        }
    }

    /// Whether the fixture is meant for exhaustive interpretation.
    pub fn is_complete(self) -> bool {
        matches!(self, Fixture::Fig1b | Fixture::Fig1c)
    }

    pub fn build<T: Scalar>(self, seed: u64) -> Result<EngineConfig<T>> {
        match self {
            Fixture::Fig1b => fig1b(seed),
            Fixture::Fig1c => fig1c(seed),
            Fixture::Fig2Diagonal => fig2_diagonal(seed),
            Fixture::EvalSquares => SquaresTask::default().build(seed),
        }
    }
}

impl fmt::Display for Fixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fixture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Fixture::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Fixture::ALL.iter().map(|f| f.name()).collect();
            Error::InvalidConfig(format!("unknown fixture {s:?}; valid fixtures: {}", names.join(", ")))
        })
    }
}

fn single_level<T: Scalar>(
    side: usize,
    ones: impl IntoIterator<Item = usize>,
    zeros: impl IntoIterator<Item = usize>,
) -> Result<Model<T>> {
    Ok(RuleModel::new(side, side, vec![RuleLevel::new(ones, zeros)])?.into())
}

fn fig1b<T: Scalar>(seed: u64) -> Result<EngineConfig<T>> {
    let a = single_level(4, [0, 15], [3])?;
    let b = single_level(4, [5, 6], [9, 10])?;
    let mut config = EngineConfig::new(ImageSpaceSpec::full(4, 4)?, a, b, Updater::RuleMinimalEdit);
    config.rng_seed = seed;
    config.max_queries = 64;
    Ok(config)
}

fn fig1c<T: Scalar>(seed: u64) -> Result<EngineConfig<T>> {
    let support: PixelSet = (0..15).collect();
    let a = RuleModel::new(4, 4, vec![RuleLevel::new([0, 5, 10], [2, 3, 4, 7, 8, 11, 12])])?.with_support(support)?;
    let b = single_level(4, [0, 5, 10, 15], [1, 2, 3, 4, 7, 8, 11, 12])?;
    let mut config = EngineConfig::new(ImageSpaceSpec::full(4, 4)?, a.into(), b, Updater::RuleMinimalEdit);
    config.rng_seed = seed;
    config.max_queries = 64;
    Ok(config)
}

pub fn diagonal_image(side: usize, anti: bool) -> BinaryImage {
    let mut img = BinaryImage::zeros(side, side).expect("side is positive");
    for r in 0..side {
        let c = if anti { side - 1 - r } else { r };
        img.set(r * side + c, true);
    }
    img
}

fn fig2_diagonal<T: Scalar>(seed: u64) -> Result<EngineConfig<T>> {
    let space = ImageSpaceSpec::envelope(4, 4, vec![diagonal_image(4, false), diagonal_image(4, true)], 1)?;
    // B recognises the full main diagonal; A only checks its first pixel.
    let a = single_level(4, [0], [])?;
    let b = single_level(4, [0, 5, 10, 15], [])?;
    let mut config = EngineConfig::new(space, a, b, Updater::RuleMinimalEdit);
    config.rng_seed = seed;
    config.max_queries = 4;
    Ok(config)
}

/// Generator and training schedule of the `eval-squares` fixture.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SquaresTask {
    pub side: usize,
    pub square_sizes: Vec<usize>,
    pub train_per_class: usize,
    pub neural: NeuralTraining,
    pub linear: LinearTraining,
    pub max_queries: usize,
}

impl Default for SquaresTask {
    fn default() -> Self {
        let side = 8;
        Self {
            side,
            square_sizes: vec![1, 2, 3, 4],
            train_per_class: 300,
            neural: NeuralTraining {
                architecture: vec![side * side, 16, 1],
                epochs: 300,
                learning_rate: 0.5,
                batch_size: Some(20),
            },
            linear: LinearTraining {
                epochs: 500,
                learning_rate: 1.0,
                margin: 4.0,
            },
            max_queries: 10,
        }
    }
}

/// A fixture whose models were trained, with the data they were trained on.
#[derive(Clone, Debug)]
pub struct TrainedSquares<T> {
    pub config: EngineConfig<T>,
    pub training: Vec<LabeledImage>,
    pub normal_images: Vec<LabeledImage>,
}

impl SquaresTask {
    /// Every image with one square in each half and unequal sizes, labelled
    /// 1 iff the left square is larger. Order: left size, left row, left
    /// column, right size, right row, right column.
    pub fn normal_images(&self) -> Vec<LabeledImage> {
        let side = self.side;
        let half = side / 2;
        let placements = |offset: usize| {
            let mut out = Vec::new();
            for &s in &self.square_sizes {
                if s > half || s > side {
                    continue;
                }
                for r in 0..=side - s {
                    for c in 0..=half - s {
                        out.push((s, r, c + offset));
                    }
                }
            }
            out
        };
        let left = placements(0);
        let right = placements(half);
        let mut images = Vec::new();
        for &(ls, lr, lc) in &left {
            for &(rs, rr, rc) in &right {
                if ls == rs {
                    continue;
                }
                let mut img = BinaryImage::zeros(side, side).expect("side is positive");
                for (s, r0, c0) in [(ls, lr, lc), (rs, rr, rc)] {
                    for r in r0..r0 + s {
                        for c in c0..c0 + s {
                            img.set(r * side + c, true);
                        }
                    }
                }
                images.push(LabeledImage { image: img, label: ls > rs });
            }
        }
        images
    }

    /// Trains both models for `seed` and assembles the ε-interpretation run.
    pub fn train<T: Scalar>(&self, seed: u64) -> Result<TrainedSquares<T>> {
        let normal = self.normal_images();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut training = Vec::with_capacity(2 * self.train_per_class);
        for label in [false, true] {
            let class: Vec<&LabeledImage> = normal.iter().filter(|s| s.label == label).collect();
            if class.is_empty() {
                return Err(Error::InvalidConfig(format!("no base images with label {label}")));
            }
            for _ in 0..self.train_per_class {
                training.push((*class.choose(&mut rng).expect("non-empty")).clone());
            }
        }
        training.shuffle(&mut rng);
        let b = train_neural::<T>(&training, &self.neural, rng.gen())?;
        let linear_seed: u64 = rng.gen();
        let a = train_linear::<T>(&training, &self.linear, linear_seed)?;
        let space = ImageSpaceSpec::envelope(
            self.side,
            self.side,
            normal.iter().map(|s| s.image.clone()).collect(),
            1,
        )?;
        let mut config = EngineConfig::new(space, a.into(), b.into(), Updater::RetrainWithQueries);
        config.mode = Mode::Epsilon;
        config.rng_seed = seed;
        config.max_queries = self.max_queries;
        config.base_dataset = Some(training.clone());
        config.retrain = self.linear.clone();
        config.retrain_seed = Some(linear_seed);
        Ok(TrainedSquares {
            config,
            training,
            normal_images: normal,
        })
    }

    pub fn build<T: Scalar>(&self, seed: u64) -> Result<EngineConfig<T>> {
        Ok(self.train(seed)?.config)
    }
}
