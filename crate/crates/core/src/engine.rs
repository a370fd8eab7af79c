//! The query-update-measure interpretation loop.
//!
//! Model A starts as given, repeatedly queries an image on which it disagrees
//! with model B, updates itself towards B's answer, and the disagreement
//! entropy over the whole evaluation space is re-measured after each update.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagespace::{choose_uniform, enumerate_space, BinaryImage, ImageSpaceSpec, SpaceCardinality};
use crate::metrics::{
    breakdown_against, confidence_epsilon, interpretability, objective, reference_labels, Confidence,
    EntropyBreakdown, LevelAlignment,
};
use crate::models::{
    linear_update, rule_update_over, LabeledImage, LinearTraining, Model, PredictionVector, RawLabeledImage,
};
use crate::scalar::Scalar;

pub const DEFAULT_STALL_PATIENCE: usize = 3;
pub const DEFAULT_MAX_QUERIES: usize = 10;
/// Pass limit for exhaustive interpretation; a run that has not settled by
/// then ends as `budget_exhausted`.
pub const MAX_EXHAUSTIVE_PASSES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Updater {
    /// Minimal constraint edit of a rule model.
    RuleMinimalEdit,
    /// Retrain a linear model on its base dataset plus every query so far.
    RetrainWithQueries,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Levels of A and B are aligned one to one.
    #[default]
    Diagnostic,
    /// Diagnosis labels only, with the confidence ε attached.
    Epsilon,
}

impl Mode {
    pub fn alignment(self) -> LevelAlignment {
        match self {
            Mode::Diagnostic => LevelAlignment::Matched,
            Mode::Epsilon => LevelAlignment::TopOnly,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEngineConfig<T>", bound(deserialize = "T: Scalar"))]
pub struct EngineConfig<T> {
    pub space: ImageSpaceSpec,
    pub model_a: Model<T>,
    pub model_b: Model<T>,
    pub updater: Updater,
    pub max_queries: usize,
    pub lambda: T,
    pub rng_seed: u64,
    pub mode: Mode,
    pub base_dataset: Option<Vec<LabeledImage>>,
    pub retrain: LinearTraining,
    /// Seed for retraining; defaults to `rng_seed`.
    pub retrain_seed: Option<u64>,
    pub stall_patience: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Scalar"))]
struct RawEngineConfig<T> {
    space: ImageSpaceSpec,
    model_a: Model<T>,
    model_b: Model<T>,
    #[serde(default)]
    updater: Option<Updater>,
    #[serde(default = "default_max_queries")]
    max_queries: usize,
    #[serde(default = "zero_lambda")]
    lambda: T,
    #[serde(default)]
    rng_seed: u64,
    #[serde(default)]
    mode: Mode,
    #[serde(default)]
    base_dataset: Option<Vec<RawLabeledImage>>,
    #[serde(default)]
    retrain: LinearTraining,
    #[serde(default)]
    retrain_seed: Option<u64>,
    #[serde(default = "default_patience")]
    stall_patience: usize,
}

fn zero_lambda<T: Scalar>() -> T {
    T::zero()
}

fn default_max_queries() -> usize {
    DEFAULT_MAX_QUERIES
}

fn default_patience() -> usize {
    DEFAULT_STALL_PATIENCE
}

impl<T: Scalar> TryFrom<RawEngineConfig<T>> for EngineConfig<T> {
    type Error = Error;

    fn try_from(raw: RawEngineConfig<T>) -> Result<Self> {
        let (w, h) = (raw.space.width, raw.space.height);
        let base_dataset = raw
            .base_dataset
            .map(|items| items.iter().map(|s| s.resolve(w, h)).collect::<Result<Vec<_>>>())
            .transpose()?;
        // rule models are edited, anything else is retrained
        let updater = raw.updater.unwrap_or(match raw.model_a {
            Model::Rule(_) => Updater::RuleMinimalEdit,
            _ => Updater::RetrainWithQueries,
        });
        let config = EngineConfig {
            space: raw.space,
            model_a: raw.model_a,
            model_b: raw.model_b,
            updater,
            max_queries: raw.max_queries,
            lambda: raw.lambda,
            rng_seed: raw.rng_seed,
            mode: raw.mode,
            base_dataset,
            retrain: raw.retrain,
            retrain_seed: raw.retrain_seed,
            stall_patience: raw.stall_patience,
        };
        config.validate()?;
        Ok(config)
    }
}

impl<T: Scalar> EngineConfig<T> {
    /// Defaults for everything but the space, the models and the updater.
    pub fn new(space: ImageSpaceSpec, model_a: Model<T>, model_b: Model<T>, updater: Updater) -> Self {
        Self {
            space,
            model_a,
            model_b,
            updater,
            max_queries: DEFAULT_MAX_QUERIES,
            lambda: T::zero(),
            rng_seed: 0,
            mode: Mode::Diagnostic,
            base_dataset: None,
            retrain: LinearTraining::default(),
            retrain_seed: None,
            stall_patience: DEFAULT_STALL_PATIENCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        for (name, model) in [("model_a", &self.model_a), ("model_b", &self.model_b)] {
            model.validate()?;
            if model.dims() != (self.space.width, self.space.height) {
                let (w, h) = model.dims();
                return Err(Error::InvalidConfig(format!(
                    "{name} expects {w}x{h} images, space is {}x{}",
                    self.space.width, self.space.height
                )));
            }
        }
        if self.mode == Mode::Diagnostic && self.model_a.levels() != self.model_b.levels() {
            return Err(Error::AbstractionMismatch {
                a: self.model_a.levels(),
                b: self.model_b.levels(),
            });
        }
        match (self.updater, &self.model_a) {
            (Updater::RuleMinimalEdit, Model::Rule(_)) => {}
            (Updater::RetrainWithQueries, Model::Linear(_)) => match &self.base_dataset {
                Some(data) if !data.is_empty() => {
                    if let Some(s) = data.iter().find(|s| s.image.dims() != self.model_a.dims()) {
                        return Err(Error::InvalidConfig(format!(
                            "base dataset image {} has the wrong dimensions",
                            s.image
                        )));
                    }
                }
                _ => {
                    return Err(Error::InvalidConfig(
                        "retrain_with_queries needs a non-empty base_dataset".into(),
                    ))
                }
            },
            (updater, model) => {
                return Err(Error::InvalidConfig(format!(
                    "updater {updater:?} cannot update a {} model",
                    model.kind()
                )))
            }
        }
        if !self.lambda.is_finite() || self.lambda < T::zero() {
            return Err(Error::InvalidConfig(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord<T> {
    pub t: usize,
    pub query: BinaryImage,
    pub entropy_after: EntropyBreakdown<T>,
    #[serde(rename = "I_t")]
    pub i_t: T,
    /// `(H0 - Ht) / H0` before clamping.
    #[serde(rename = "I_t_raw")]
    pub i_t_raw: T,
    #[serde(rename = "delta_I_t")]
    pub delta_i_t: T,
    /// False when no admissible update existed for the query.
    pub updated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    EntropyZero,
    NoDisagreement,
    Stalled,
    BudgetExhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report<T> {
    pub initial_entropy: EntropyBreakdown<T>,
    pub steps: Vec<StepRecord<T>>,
    pub final_interpretability: T,
    #[serde(rename = "objective_J")]
    pub objective_j: T,
    pub epsilon: Option<Confidence>,
    pub termination: Termination,
    pub raw_unclamped_final: T,
    /// Set when some step measured more entropy than the start.
    pub clamped_warning: bool,
    pub final_model_a: Model<T>,
    pub seed: u64,
    pub config: EngineConfig<T>,
}

impl<T: Scalar> Report<T> {
    pub fn final_entropy(&self) -> &EntropyBreakdown<T> {
        self.steps
            .last()
            .map_or(&self.initial_entropy, |s| &s.entropy_after)
    }

    /// `t,I_t,delta_I_t,H_total`, one row per step.
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("t,I_t,delta_I_t,H_total\n");
        for s in &self.steps {
            out.push_str(&format!("{},{},{},{}\n", s.t, s.i_t, s.delta_i_t, s.entropy_after.total));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// Mutable state of one interpretation run.
pub struct InterpretationSession<'c, T> {
    config: &'c EngineConfig<T>,
    alignment: LevelAlignment,
    images: Vec<BinaryImage>,
    reference: Vec<PredictionVector>,
    model_a: Model<T>,
    queries: Vec<LabeledImage>,
    initial: EntropyBreakdown<T>,
    current: EntropyBreakdown<T>,
    steps: Vec<StepRecord<T>>,
    rng: ChaCha8Rng,
}

impl<'c, T: Scalar> InterpretationSession<'c, T> {
    pub fn new(config: &'c EngineConfig<T>) -> Result<Self> {
        config.validate()?;
        let alignment = config.mode.alignment();
        let images = enumerate_space(&config.space)?;
        let reference = reference_labels(&config.model_b, &images, alignment)?;
        let initial = breakdown_against(&config.model_a, &images, &reference, alignment)?;
        Ok(Self {
            config,
            alignment,
            images,
            reference,
            model_a: config.model_a.clone(),
            queries: Vec::new(),
            current: initial.clone(),
            initial,
            steps: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
        })
    }

    pub fn model_a(&self) -> &Model<T> {
        &self.model_a
    }

    pub fn images(&self) -> &[BinaryImage] {
        &self.images
    }

    pub fn current_entropy(&self) -> &EntropyBreakdown<T> {
        &self.current
    }

    fn disagrees(&self, index: usize) -> Result<bool> {
        let image = &self.images[index];
        let want = &self.reference[index];
        Ok(match self.alignment {
            LevelAlignment::Matched => &self.model_a.predict(image)? != want,
            LevelAlignment::TopOnly => self.model_a.top_label(image)? != want.top(),
        })
    }

    /// Indices of every image the current model A gets wrong relative to B.
    pub fn disagreement_indices(&self) -> Result<Vec<usize>> {
        let flags = (0..self.images.len())
            .into_par_iter()
            .map(|i| self.disagrees(i))
            .collect::<Result<Vec<bool>>>()?;
        Ok(flags.iter().enumerate().filter(|(_, &d)| d).map(|(i, _)| i).collect())
    }

    /// Updates A towards B's answer on image `index`, re-measures the
    /// entropy and records the step.
    pub fn query(&mut self, index: usize) -> Result<&StepRecord<T>> {
        let image = self.images[index].clone();
        let updated = self.apply_update(index)?;
        let after = breakdown_against(&self.model_a, &self.images, &self.reference, self.alignment)?;
        let score = interpretability(self.initial.total, after.total)?;
        let previous = self.steps.last().map_or(T::zero(), |s| s.i_t);
        self.steps.push(StepRecord {
            t: self.steps.len() + 1,
            query: image,
            entropy_after: after.clone(),
            i_t: score.value,
            i_t_raw: score.raw,
            delta_i_t: score.value - previous,
            updated,
        });
        self.current = after;
        Ok(self.steps.last().expect("just pushed"))
    }

    fn apply_update(&mut self, index: usize) -> Result<bool> {
        let image = &self.images[index];
        match (&self.model_a, self.config.updater) {
            (Model::Rule(rule), Updater::RuleMinimalEdit) => {
                let target = match self.alignment {
                    LevelAlignment::Matched => self.reference[index].clone(),
                    LevelAlignment::TopOnly => {
                        let mut own = rule.predict_levels(image);
                        *own.0.last_mut().expect("non-empty") = self.reference[index].top();
                        own
                    }
                };
                match rule_update_over(rule, image, &target, &self.images, &self.reference) {
                    Ok(next) => {
                        self.model_a = Model::Rule(next);
                        Ok(true)
                    }
                    Err(Error::Unreachable { .. }) => Ok(false),
                    Err(e) => Err(e),
                }
            }
            (Model::Linear(linear), Updater::RetrainWithQueries) => {
                self.queries.push(LabeledImage {
                    image: image.clone(),
                    label: self.reference[index].top(),
                });
                let base = self.config.base_dataset.as_deref().unwrap_or_default();
                let seed = self.config.retrain_seed.unwrap_or(self.config.rng_seed);
                let next = linear_update(linear, base, &self.queries, &self.config.retrain, seed)?;
                self.model_a = Model::Linear(next);
                Ok(true)
            }
            _ => Err(Error::InvalidConfig("updater does not match model A".into())),
        }
    }

    pub fn finish(self, termination: Termination) -> Result<Report<T>> {
        let per_step: Vec<T> = self.steps.iter().map(|s| s.i_t).collect();
        let objective_j = objective(&per_step, self.config.lambda, self.steps.len())?;
        let (final_interpretability, raw_unclamped_final) = match self.steps.last() {
            Some(s) => (s.i_t, s.i_t_raw),
            None => {
                let score = interpretability(self.initial.total, self.initial.total)?;
                (score.value, score.raw)
            }
        };
        let epsilon = match self.config.mode {
            Mode::Epsilon => Some(confidence_epsilon(
                &SpaceCardinality::from_count(self.images.len() as u64),
                &self.config.space.ambient_cardinality()?,
            )?),
            Mode::Diagnostic => None,
        };
        Ok(Report {
            clamped_warning: self.steps.iter().any(|s| s.i_t_raw < T::zero()),
            initial_entropy: self.initial,
            steps: self.steps,
            final_interpretability,
            objective_j,
            epsilon,
            termination,
            raw_unclamped_final,
            final_model_a: self.model_a,
            seed: self.config.rng_seed,
            config: self.config.clone(),
        })
    }
}

/// Randomly sampled interpretation, up to `max_queries` steps.
pub fn run_interpretation<T: Scalar>(config: &EngineConfig<T>) -> Result<Report<T>> {
    let mut session = InterpretationSession::new(config)?;
    if session.initial.total.is_zero() {
        let termination = if session.disagreement_indices()?.is_empty() {
            Termination::NoDisagreement
        } else {
            Termination::EntropyZero
        };
        return session.finish(termination);
    }
    let mut stalled_for = 0;
    let mut termination = Termination::BudgetExhausted;
    for _ in 0..config.max_queries {
        let candidates = session.disagreement_indices()?;
        let Some(index) = choose_uniform(candidates, &mut session.rng) else {
            termination = Termination::NoDisagreement;
            break;
        };
        let before = session.current.total;
        let step = session.query(index)?;
        if step.entropy_after.total.is_zero() {
            termination = Termination::EntropyZero;
            break;
        }
        if step.entropy_after.total == before {
            stalled_for += 1;
            if stalled_for >= config.stall_patience {
                termination = Termination::Stalled;
                break;
            }
        } else {
            stalled_for = 0;
        }
    }
    session.finish(termination)
}

/// Exhaustive interpretation: sweeps the evaluation space in enumeration
/// order, querying every image A currently gets wrong, until a full sweep
/// leaves the disagreement counts unchanged. Rule updater only.
pub fn run_complete_interpretation<T: Scalar>(config: &EngineConfig<T>) -> Result<Report<T>> {
    if config.updater != Updater::RuleMinimalEdit {
        return Err(Error::InvalidConfig(
            "complete interpretation needs the rule_minimal_edit updater".into(),
        ));
    }
    let mut session = InterpretationSession::new(config)?;
    if session.initial.total.is_zero() {
        let termination = if session.disagreement_indices()?.is_empty() {
            Termination::NoDisagreement
        } else {
            Termination::EntropyZero
        };
        return session.finish(termination);
    }
    for _ in 0..MAX_EXHAUSTIVE_PASSES {
        let counts_before = session.current.disagreement_counts.clone();
        for index in 0..session.images.len() {
            if !session.disagrees(index)? {
                continue;
            }
            if session.query(index)?.entropy_after.total.is_zero() {
                return session.finish(Termination::EntropyZero);
            }
        }
        if session.current.disagreement_counts == counts_before {
            return session.finish(Termination::Stalled);
        }
    }
    session.finish(Termination::BudgetExhausted)
}
