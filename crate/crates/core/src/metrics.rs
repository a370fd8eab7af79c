//! Disagreement-channel entropy, interpretability ratios, interpretation
//! confidence and the query-penalized objective. Entropies are in bits.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::imagespace::{enumerate_space, BinaryImage, ImageSpaceSpec, SpaceCardinality};
use crate::models::{Model, PredictionVector};
use crate::scalar::Scalar;

/// `h(f) = f log2(1/f) + (1-f) log2(1/(1-f))`, with `h(0) = h(1) = 0`.
pub fn binary_entropy<T: Scalar>(f: T) -> Result<T> {
    if !(f >= T::zero() && f <= T::one()) {
        return Err(Error::Domain(format!("binary entropy needs f in [0, 1], got {f}")));
    }
    if f.is_zero() || f == T::one() {
        return Ok(T::zero());
    }
    let g = T::one() - f;
    Ok(-(f * f.log2()) - g * g.log2())
}

/// Exact disagreement fraction `count / total`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DisagreementRate {
    pub count: u64,
    pub total: u64,
}

impl DisagreementRate {
    pub fn value<T: Scalar>(self) -> T {
        T::of_count(self.count) / T::of_count(self.total)
    }

    pub fn entropy<T: Scalar>(self) -> T {
        binary_entropy(self.value::<T>()).expect("count never exceeds total")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyBreakdown<T> {
    pub per_level: Vec<T>,
    pub total: T,
    pub disagreement_rates: Vec<T>,
    pub disagreement_counts: Vec<u64>,
    pub space_size: u64,
}

impl<T: Scalar> EntropyBreakdown<T> {
    pub fn from_counts(counts: Vec<u64>, space_size: u64) -> Self {
        let rates: Vec<DisagreementRate> = counts
            .iter()
            .map(|&count| DisagreementRate {
                count,
                total: space_size,
            })
            .collect();
        let per_level: Vec<T> = rates.iter().map(|r| r.entropy()).collect();
        let total = per_level.iter().fold(T::zero(), |acc, &h| acc + h);
        Self {
            per_level,
            total,
            disagreement_rates: rates.iter().map(|r| r.value()).collect(),
            disagreement_counts: counts,
            space_size,
        }
    }

    pub fn levels(&self) -> usize {
        self.per_level.len()
    }
}

/// Which levels of the two models are compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelAlignment {
    /// Level k of A against level k of B; K must match.
    Matched,
    /// Only the diagnosis labels, as a single level.
    TopOnly,
}

/// Per-level disagreement entropy of A against B over every image of `spec`.
pub fn disagreement_breakdown<T: Scalar>(
    model_a: &Model<T>,
    model_b: &Model<T>,
    spec: &ImageSpaceSpec,
) -> Result<EntropyBreakdown<T>> {
    let images = enumerate_space(spec)?;
    let reference = reference_labels(model_b, &images, LevelAlignment::Matched)?;
    breakdown_against(model_a, &images, &reference, LevelAlignment::Matched)
}

/// Labels of the reference model over `images`, shaped for `alignment`.
pub fn reference_labels<T: Scalar>(
    model: &Model<T>,
    images: &[BinaryImage],
    alignment: LevelAlignment,
) -> Result<Vec<PredictionVector>> {
    images
        .par_iter()
        .map(|img| match alignment {
            LevelAlignment::Matched => model.predict(img),
            LevelAlignment::TopOnly => model.top_label(img).map(|y| PredictionVector(vec![y])),
        })
        .collect()
}

/// Disagreement breakdown of `model` against precomputed reference labels.
pub fn breakdown_against<T: Scalar>(
    model: &Model<T>,
    images: &[BinaryImage],
    reference: &[PredictionVector],
    alignment: LevelAlignment,
) -> Result<EntropyBreakdown<T>> {
    if images.len() != reference.len() {
        return Err(Error::InvalidInput("reference labels do not cover the space".into()));
    }
    let levels = match alignment {
        LevelAlignment::Matched => model.levels(),
        LevelAlignment::TopOnly => 1,
    };
    if let Some(first) = reference.first() {
        if first.len() != levels {
            return Err(Error::AbstractionMismatch {
                a: levels,
                b: first.len(),
            });
        }
    }
    const CHUNK: usize = 4096;
    let counts = images
        .par_chunks(CHUNK)
        .zip(reference.par_chunks(CHUNK))
        .map(|(imgs, refs)| -> Result<Vec<u64>> {
            let mut counts = vec![0u64; levels];
            for (img, want) in imgs.iter().zip(refs) {
                match alignment {
                    LevelAlignment::Matched => {
                        let got = model.predict(img)?;
                        for (c, (g, w)) in counts.iter_mut().zip(got.0.iter().zip(&want.0)) {
                            *c += u64::from(g != w);
                        }
                    }
                    LevelAlignment::TopOnly => {
                        counts[0] += u64::from(model.top_label(img)? != want.0[0]);
                    }
                }
            }
            Ok(counts)
        })
        .try_reduce(
            || vec![0u64; levels],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;
    Ok(EntropyBreakdown::from_counts(counts, images.len() as u64))
}

/// Fractional entropy reduction, clamped to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interpretability<T> {
    pub value: T,
    /// `(h_initial - h_final) / h_initial` before clamping.
    pub raw: T,
    /// Set when the final entropy exceeds the initial one.
    pub clamped: bool,
}

pub fn interpretability<T: Scalar>(h_initial: T, h_final: T) -> Result<Interpretability<T>> {
    if h_initial.is_nan() || h_final.is_nan() || h_initial < T::zero() || h_final < T::zero() {
        return Err(Error::Domain(format!(
            "entropies must be non-negative, got {h_initial} and {h_final}"
        )));
    }
    if h_initial.is_zero() || h_final.is_zero() {
        return Ok(Interpretability {
            value: T::one(),
            raw: T::one(),
            clamped: false,
        });
    }
    let raw = (h_initial - h_final) / h_initial;
    Ok(Interpretability {
        value: raw.max(T::zero()).min(T::one()),
        raw,
        clamped: raw < T::zero(),
    })
}

/// Confidence on an interpretation: `|S| / |ħ|`, carried in log2 form.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Confidence {
    pub log2_epsilon: f64,
    pub display: String,
    /// Reduced fraction, when both cardinalities are exact.
    pub exact: Option<ExactRatio>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExactRatio {
    pub numerator: String,
    pub denominator: String,
}

impl Confidence {
    pub fn value(&self) -> f64 {
        self.log2_epsilon.exp2()
    }
}

/// Renders `2^log2` in scientific notation with three significant digits.
pub fn scientific_from_log2(log2: f64) -> String {
    let log10 = log2 * std::f64::consts::LOG10_2;
    let mut exponent = log10.floor();
    let mut mantissa = 10f64.powf(log10 - exponent);
    if (mantissa * 100.0).round() >= 1000.0 {
        mantissa /= 10.0;
        exponent += 1.0;
    }
    format!("{mantissa:.2}e{exponent}")
}

pub fn confidence_epsilon(sample: &SpaceCardinality, full: &SpaceCardinality) -> Result<Confidence> {
    let sample_empty = match &sample.exact_value {
        Some(v) => v.is_zero(),
        None => sample.log2_value == f64::NEG_INFINITY,
    };
    if sample_empty {
        return Err(Error::Domain("sample cardinality must be positive".into()));
    }
    let too_big = match (&sample.exact_value, &full.exact_value) {
        (Some(s), Some(f)) => s > f,
        _ => sample.log2_value > full.log2_value,
    };
    if too_big {
        return Err(Error::Domain("sample set is larger than the full space".into()));
    }
    let exact = match (&sample.exact_value, &full.exact_value) {
        (Some(s), Some(f)) => {
            let g: BigUint = s.gcd(f);
            Some(ExactRatio {
                numerator: (s / &g).to_string(),
                denominator: (f / &g).to_string(),
            })
        }
        _ => None,
    };
    let log2_epsilon = (sample.log2_value - full.log2_value).min(0.0);
    Ok(Confidence {
        log2_epsilon,
        display: scientific_from_log2(log2_epsilon),
        exact,
    })
}

/// `-Σ I^t + λ·|S|`.
pub fn objective<T: Scalar>(per_step: &[T], lambda: T, sample_count: usize) -> Result<T> {
    if lambda.is_nan() || lambda < T::zero() {
        return Err(Error::Domain(format!("lambda must be non-negative, got {lambda}")));
    }
    if let Some(bad) = per_step.iter().find(|&&i| !(i >= T::zero() && i <= T::one())) {
        return Err(Error::Domain(format!("per-step interpretability {bad} is outside [0, 1]")));
    }
    let sum = per_step.iter().fold(T::zero(), |acc, &i| acc + i);
    Ok(-sum + lambda * T::of_count(sample_count as u64))
}
