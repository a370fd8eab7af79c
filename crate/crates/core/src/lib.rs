//! Diagnostic interpretability between a known model A and a black-box
//! model B over binary images.
//!
//! A and B are compared as a binary channel: the fraction of images on which
//! they disagree sets the channel entropy. Interpretation lets A query B on
//! disagreeing images and update itself; interpretability is the fraction of
//! the initial entropy removed.
//!
//! Models, metrics and the engine are generic over the real scalar (`f32` or
//! `f64`); the aliases below fix it to `f64`.

pub mod engine;
pub mod error;
pub mod fixtures;
pub mod harness;
pub mod imagespace;
pub mod metrics;
pub mod models;
pub mod oracle;
pub mod scalar;

pub use engine::{run_complete_interpretation, run_interpretation, Mode, Termination, Updater};
pub use error::{Error, Result};
pub use fixtures::Fixture;
pub use imagespace::{BinaryImage, ImageSpaceSpec, SpaceCardinality, SpaceMode};
pub use models::{LabeledImage, PredictionVector, RuleLevel, RuleModel};
pub use scalar::Scalar;

pub type Model = models::Model<f64>;
pub type LinearModel = models::LinearModel<f64>;
pub type NeuralModel = models::NeuralModel<f64>;
pub type EngineConfig = engine::EngineConfig<f64>;
pub type Report = engine::Report<f64>;
pub type StepRecord = engine::StepRecord<f64>;
pub type EntropyBreakdown = metrics::EntropyBreakdown<f64>;

pub type ModelF32 = models::Model<f32>;
pub type EngineConfigF32 = engine::EngineConfig<f32>;
pub type ReportF32 = engine::Report<f32>;
