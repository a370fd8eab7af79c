//! Brute-force ground truth for small spaces.
//!
//! Everything here is deliberately written against its own enumeration and
//! counting loops so that it can referee the `imagespace` and `metrics`
//! code paths rather than repeat them.

use std::collections::HashSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::imagespace::{BinaryImage, ImageSpaceSpec, SpaceMode};
use crate::metrics::LevelAlignment;
use crate::models::{rule_update_over, Model, PredictionVector, RuleModel};
use crate::scalar::Scalar;

/// Largest space the oracle will walk.
pub const MAX_ORACLE_IMAGES: u64 = 1 << 20;
/// Disagreeing images listed in an [`OracleResult`].
pub const MAX_LISTED_DISAGREEMENTS: usize = 64;
/// Pass limit for [`exhaustive_fixed_point`].
pub const MAX_ORACLE_PASSES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleResult {
    pub level_counts: Vec<u64>,
    pub space_size: u64,
    pub per_level_entropy: Vec<f64>,
    pub total_entropy: f64,
    /// The first disagreeing images in enumeration order, as bitstrings.
    pub disagreement_images: Vec<String>,
}

/// Entropy in bits of `count` disagreements out of `size`, from the counts:
/// `(n log2 n - c log2 c - (n-c) log2 (n-c)) / n`.
pub fn entropy_from_counts(count: u64, size: u64) -> f64 {
    fn xlog2x(x: u64) -> f64 {
        if x == 0 {
            0.0
        } else {
            x as f64 * (x as f64).log2()
        }
    }
    if count == 0 || count == size {
        return 0.0;
    }
    (xlog2x(size) - xlog2x(count) - xlog2x(size - count)) / size as f64
}

fn guard_error(requested: u128) -> Error {
    Error::SpaceTooLarge {
        guard: "oracle space guard",
        limit: MAX_ORACLE_IMAGES as u128,
        requested,
    }
}

/// Walks every image of `spec` in enumeration order.
fn walk_space(spec: &ImageSpaceSpec) -> Result<Vec<BinaryImage>> {
    spec.validate()?;
    let n = spec.width * spec.height;
    match spec.mode {
        SpaceMode::Full => {
            if n > 20 {
                return Err(guard_error(1u128 << n.min(127)));
            }
            let mut out = Vec::with_capacity(1 << n);
            for code in 0u64..(1 << n) {
                let bits: Vec<bool> = (0..n).map(|p| code & (1 << (n - 1 - p)) != 0).collect();
                out.push(BinaryImage::from_bits(spec.width, spec.height, &bits)?);
            }
            Ok(out)
        }
        SpaceMode::Envelope => {
            let mut seen: HashSet<Vec<bool>> = HashSet::new();
            let mut order: Vec<Vec<bool>> = Vec::new();
            let mut add = |bits: Vec<bool>| -> Result<()> {
                if !seen.contains(&bits) {
                    if order.len() as u64 == MAX_ORACLE_IMAGES {
                        return Err(guard_error(MAX_ORACLE_IMAGES as u128 + 1));
                    }
                    seen.insert(bits.clone());
                    order.push(bits);
                }
                Ok(())
            };
            let bases: Vec<Vec<bool>> = spec.base_images.iter().map(|b| b.bits().collect()).collect();
            for base in &bases {
                add(base.clone())?;
            }
            for base in &bases {
                for size in 1..=spec.flip_radius.min(n) {
                    let mut subsets = Vec::new();
                    subsets_of_size(0, n, size, &mut Vec::new(), &mut subsets);
                    for subset in subsets {
                        let mut bits = base.clone();
                        for p in subset {
                            bits[p] = !bits[p];
                        }
                        add(bits)?;
                    }
                }
            }
            order
                .iter()
                .map(|bits| BinaryImage::from_bits(spec.width, spec.height, bits))
                .collect()
        }
    }
}

fn subsets_of_size(start: usize, n: usize, size: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if current.len() == size {
        out.push(current.clone());
        return;
    }
    for p in start..n {
        current.push(p);
        subsets_of_size(p + 1, n, size, current, out);
        current.pop();
    }
}

fn labels<T: Scalar>(model: &Model<T>, image: &BinaryImage, alignment: LevelAlignment) -> Result<Vec<bool>> {
    Ok(match alignment {
        LevelAlignment::Matched => model.predict(image)?.0,
        LevelAlignment::TopOnly => vec![model.top_label(image)?],
    })
}

fn count_over<T: Scalar>(
    model_a: &Model<T>,
    model_b: &Model<T>,
    images: &[BinaryImage],
    alignment: LevelAlignment,
) -> Result<OracleResult> {
    let levels = match alignment {
        LevelAlignment::Matched => {
            if model_a.levels() != model_b.levels() {
                return Err(Error::AbstractionMismatch {
                    a: model_a.levels(),
                    b: model_b.levels(),
                });
            }
            model_a.levels()
        }
        LevelAlignment::TopOnly => 1,
    };
    let mut level_counts = vec![0u64; levels];
    let mut disagreement_images = Vec::new();
    for image in images {
        let ya = labels(model_a, image, alignment)?;
        let yb = labels(model_b, image, alignment)?;
        let mut any = false;
        for k in 0..levels {
            if ya[k] != yb[k] {
                level_counts[k] += 1;
                any = true;
            }
        }
        if any && disagreement_images.len() < MAX_LISTED_DISAGREEMENTS {
            disagreement_images.push(image.to_bitstring());
        }
    }
    let space_size = images.len() as u64;
    let per_level_entropy: Vec<f64> = level_counts
        .iter()
        .map(|&c| entropy_from_counts(c, space_size))
        .collect();
    let mut total_entropy = 0.0;
    for h in &per_level_entropy {
        total_entropy += h;
    }
    Ok(OracleResult {
        level_counts,
        space_size,
        per_level_entropy,
        total_entropy,
        disagreement_images,
    })
}

/// Exact per-level disagreement counts and entropies of A against B over `spec`.
pub fn brute_force_breakdown<T: Scalar>(
    model_a: &Model<T>,
    model_b: &Model<T>,
    spec: &ImageSpaceSpec,
) -> Result<OracleResult> {
    brute_force_breakdown_with(model_a, model_b, spec, LevelAlignment::Matched)
}

pub fn brute_force_breakdown_with<T: Scalar>(
    model_a: &Model<T>,
    model_b: &Model<T>,
    spec: &ImageSpaceSpec,
    alignment: LevelAlignment,
) -> Result<OracleResult> {
    let images = walk_space(spec)?;
    count_over(model_a, model_b, &images, alignment)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixedPoint {
    pub model: RuleModel,
    pub result: OracleResult,
    /// Sweeps that changed the disagreement counts.
    pub passes: usize,
    pub converged: bool,
}

/// Sweeps the space in enumeration order applying the minimal rule edit to
/// every image A gets wrong, until a whole sweep leaves the disagreement
/// counts unchanged. Returns the model at the start of that sweep.
pub fn exhaustive_fixed_point<T: Scalar>(
    model_a: &RuleModel,
    model_b: &Model<T>,
    spec: &ImageSpaceSpec,
) -> Result<FixedPoint> {
    let images = walk_space(spec)?;
    if model_a.levels.len() != model_b.levels() {
        return Err(Error::AbstractionMismatch {
            a: model_a.levels.len(),
            b: model_b.levels(),
        });
    }
    let reference: Vec<PredictionVector> = images
        .iter()
        .map(|img| model_b.predict(img))
        .collect::<Result<_>>()?;
    let mut current = model_a.clone();
    let mut passes = 0;
    for _ in 0..MAX_ORACLE_PASSES {
        let start = current.clone();
        let before = count_over(&Model::<T>::Rule(start.clone()), model_b, &images, LevelAlignment::Matched)?;
        for (i, image) in images.iter().enumerate() {
            let target = &reference[i];
            if &current.predict_levels(image) == target {
                continue;
            }
            match rule_update_over(&current, image, target, &images, &reference) {
                Ok(next) => current = next,
                Err(Error::Unreachable { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        let after = count_over(&Model::<T>::Rule(current.clone()), model_b, &images, LevelAlignment::Matched)?;
        if after.level_counts == before.level_counts {
            return Ok(FixedPoint {
                model: start,
                result: before,
                passes,
                converged: true,
            });
        }
        passes += 1;
    }
    let result = count_over(&Model::<T>::Rule(current.clone()), model_b, &images, LevelAlignment::Matched)?;
    Ok(FixedPoint {
        model: current,
        result,
        passes,
        converged: false,
    })
}
