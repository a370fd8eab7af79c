//! Conjunctive pixel-rule models and their minimal-edit update.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::imagespace::{enumerate_space, BinaryImage, ImageSpaceSpec};
use crate::models::{Model, PredictionVector};
use crate::scalar::Scalar;

/// Set of pixel indices, stored as a bitset. Serializes as a sorted index array.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct PixelSet {
    words: Vec<u64>,
}

impl PixelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, pixel: usize) -> bool {
        self.words
            .get(pixel / 64)
            .is_some_and(|w| (w >> (pixel % 64)) & 1 == 1)
    }

    pub fn insert(&mut self, pixel: usize) -> bool {
        let word = pixel / 64;
        if self.words.len() <= word {
            self.words.resize(word + 1, 0);
        }
        let had = self.contains(pixel);
        self.words[word] |= 1 << (pixel % 64);
        !had
    }

    pub fn remove(&mut self, pixel: usize) -> bool {
        let had = self.contains(pixel);
        if had {
            self.words[pixel / 64] &= !(1 << (pixel % 64));
            while self.words.last() == Some(&0) {
                self.words.pop();
            }
        }
        had
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            (0..64).filter(move |b| (w >> b) & 1 == 1).map(move |b| wi * 64 + b)
        })
    }

    pub fn max(&self) -> Option<usize> {
        self.iter().last()
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }

    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }
}

impl FromIterator<usize> for PixelSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut set = PixelSet::new();
        for p in iter {
            set.insert(p);
        }
        set
    }
}

impl std::fmt::Debug for PixelSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl Serialize for PixelSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for PixelSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        Ok(Vec::<usize>::deserialize(deserializer)?.into_iter().collect())
    }
}

/// One abstraction level: predicts 1 iff every `ones_required` pixel is set
/// and every `zeros_required` pixel is clear.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleLevel {
    pub ones_required: PixelSet,
    pub zeros_required: PixelSet,
}

impl RuleLevel {
    pub fn new(ones: impl IntoIterator<Item = usize>, zeros: impl IntoIterator<Item = usize>) -> Self {
        Self {
            ones_required: ones.into_iter().collect(),
            zeros_required: zeros.into_iter().collect(),
        }
    }

    pub fn matches(&self, image: &BinaryImage) -> bool {
        let bits = image.words();
        let ones = self.ones_required.words().iter().enumerate();
        let zeros = self.zeros_required.words().iter().enumerate();
        ones.into_iter().all(|(i, m)| bits[i] & m == *m) && zeros.into_iter().all(|(i, m)| bits[i] & m == 0)
    }

    pub fn constraint_count(&self) -> usize {
        self.ones_required.len() + self.zeros_required.len()
    }

    pub fn is_constrained(&self, pixel: usize) -> bool {
        self.ones_required.contains(pixel) || self.zeros_required.contains(pixel)
    }

    /// Constraints the image violates, as pixel indices.
    fn violated_by(&self, image: &BinaryImage) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .ones_required
            .iter()
            .filter(|&p| !image.get(p))
            .chain(self.zeros_required.iter().filter(|&p| image.get(p)))
            .collect();
        out.sort_unstable();
        out
    }

    /// Adds the constraint on `pixel` that `image` violates.
    fn require_opposite_of(&mut self, image: &BinaryImage, pixel: usize) {
        self.ones_required.remove(pixel);
        self.zeros_required.remove(pixel);
        if image.get(pixel) {
            self.zeros_required.insert(pixel);
        } else {
            self.ones_required.insert(pixel);
        }
    }
}

/// A K-level conjunctive rule model.
///
/// `support`, when present, restricts which pixels updates may constrain; it
/// is how a rule family strictly less expressive than the target is built.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRuleModel")]
pub struct RuleModel {
    pub width: usize,
    pub height: usize,
    pub levels: Vec<RuleLevel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support: Option<PixelSet>,
}

#[derive(Deserialize)]
struct RawRuleModel {
    width: usize,
    height: usize,
    levels: Vec<RuleLevel>,
    #[serde(default)]
    support: Option<PixelSet>,
}

impl TryFrom<RawRuleModel> for RuleModel {
    type Error = Error;

    fn try_from(raw: RawRuleModel) -> Result<Self> {
        let model = RuleModel {
            width: raw.width,
            height: raw.height,
            levels: raw.levels,
            support: raw.support,
        };
        model.validate()?;
        Ok(model)
    }
}

impl RuleModel {
    pub fn new(width: usize, height: usize, levels: Vec<RuleLevel>) -> Result<Self> {
        let model = Self {
            width,
            height,
            levels,
            support: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_support(mut self, support: PixelSet) -> Result<Self> {
        self.support = Some(support);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidConfig("rule model has a zero dimension".into()));
        }
        if self.levels.is_empty() {
            return Err(Error::InvalidConfig("rule model needs at least one level".into()));
        }
        let pixels = self.width * self.height;
        for (k, level) in self.levels.iter().enumerate() {
            if !level.ones_required.is_disjoint(&level.zeros_required) {
                return Err(Error::InvalidConfig(format!(
                    "level {k} requires some pixel to be both 1 and 0"
                )));
            }
            let max = level.ones_required.max().max(level.zeros_required.max());
            if let Some(p) = max.filter(|&p| p >= pixels) {
                return Err(Error::InvalidConfig(format!(
                    "level {k} references pixel {p}, grid has {pixels}"
                )));
            }
            if let Some(support) = &self.support {
                let outside = level
                    .ones_required
                    .iter()
                    .chain(level.zeros_required.iter())
                    .find(|&p| !support.contains(p));
                if let Some(p) = outside {
                    return Err(Error::InvalidConfig(format!(
                        "level {k} constrains pixel {p} outside the model's support"
                    )));
                }
            }
        }
        if let Some(p) = self.support.as_ref().and_then(PixelSet::max).filter(|&p| p >= pixels) {
            return Err(Error::InvalidConfig(format!(
                "support references pixel {p}, grid has {pixels}"
            )));
        }
        Ok(())
    }

    pub fn predict_levels(&self, image: &BinaryImage) -> PredictionVector {
        PredictionVector(self.levels.iter().map(|l| l.matches(image)).collect())
    }

    fn may_constrain(&self, pixel: usize) -> bool {
        self.support.as_ref().is_none_or(|s| s.contains(pixel))
    }
}

/// Minimal constraint edit so that `model` labels `image` as `target` at
/// every level; ties go to the edit that disagrees least with
/// `reference_model` over `eval_spec`, then to the lowest pixel index.
pub fn rule_update<T: Scalar>(
    model: &RuleModel,
    image: &BinaryImage,
    target: &PredictionVector,
    eval_spec: &ImageSpaceSpec,
    reference_model: &Model<T>,
) -> Result<RuleModel> {
    let images = enumerate_space(eval_spec)?;
    let reference = images
        .iter()
        .map(|img| reference_model.predict(img))
        .collect::<Result<Vec<_>>>()?;
    rule_update_over(model, image, target, &images, &reference)
}

/// [`rule_update`] over an already materialized evaluation set, with the
/// reference model's predictions precomputed per image.
///
/// When the reference has a different number of levels, every level is
/// compared against the reference's top label.
pub fn rule_update_over(
    model: &RuleModel,
    image: &BinaryImage,
    target: &PredictionVector,
    eval_images: &[BinaryImage],
    reference: &[PredictionVector],
) -> Result<RuleModel> {
    if image.dims() != (model.width, model.height) {
        return Err(Error::InvalidInput(format!(
            "image is {}x{}, model expects {}x{}",
            image.width(),
            image.height(),
            model.width,
            model.height
        )));
    }
    if target.len() != model.levels.len() {
        return Err(Error::AbstractionMismatch {
            a: model.levels.len(),
            b: target.len(),
        });
    }
    if eval_images.len() != reference.len() {
        return Err(Error::InvalidInput(
            "reference labels do not cover the evaluation set".into(),
        ));
    }

    let mut updated = model.clone();
    for (k, level) in model.levels.iter().enumerate() {
        let want = target.0[k];
        if level.matches(image) == want {
            continue;
        }
        updated.levels[k] = if want {
            // Every violated constraint must go; nothing else needs to.
            let mut edited = level.clone();
            for p in level.violated_by(image) {
                edited.ones_required.remove(p);
                edited.zeros_required.remove(p);
            }
            edited
        } else {
            let reference_at = |i: usize| {
                let labels = &reference[i].0;
                if labels.len() == model.levels.len() {
                    labels[k]
                } else {
                    *labels.last().expect("prediction vectors are non-empty")
                }
            };
            let disagreement = |candidate: &RuleLevel| {
                eval_images
                    .iter()
                    .enumerate()
                    .filter(|(i, img)| candidate.matches(img) != reference_at(*i))
                    .count()
            };
            let pixels = model.width * model.height;
            // Single insertions on free pixels; if none remain, re-polarize an
            // existing constraint (one removal plus one insertion).
            let single: Vec<usize> = (0..pixels)
                .filter(|&p| model.may_constrain(p) && !level.is_constrained(p))
                .collect();
            let candidates = if single.is_empty() {
                (0..pixels)
                    .filter(|&p| model.may_constrain(p) && level.is_constrained(p))
                    .collect()
            } else {
                single
            };
            let mut best: Option<(usize, RuleLevel)> = None;
            for p in candidates {
                let mut edited = level.clone();
                edited.require_opposite_of(image, p);
                let score = disagreement(&edited);
                if best.as_ref().is_none_or(|(s, _)| score < *s) {
                    best = Some((score, edited));
                }
            }
            best.ok_or(Error::Unreachable { level: k })?.1
        };
    }
    debug_assert_eq!(&updated.predict_levels(image), target);
    Ok(updated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagespace::enumerate_space;

    fn diag(n: usize) -> BinaryImage {
        let mut img = BinaryImage::zeros(n, n).unwrap();
        for i in 0..n {
            img.set(i * n + i, true);
        }
        img
    }

    fn anti(n: usize) -> BinaryImage {
        let mut img = BinaryImage::zeros(n, n).unwrap();
        for i in 0..n {
            img.set(i * n + n - 1 - i, true);
        }
        img
    }

    #[test]
    fn diagonal_rule_predictions() {
        let m = RuleModel::new(4, 4, vec![RuleLevel::new([0, 5, 10, 15], [])]).unwrap();
        assert_eq!(m.predict_levels(&diag(4)).0, vec![true]);
        assert_eq!(m.predict_levels(&anti(4)).0, vec![false]);
    }

    #[test]
    fn empty_level_accepts_everything() {
        let m = RuleModel::new(2, 2, vec![RuleLevel::default()]).unwrap();
        let images = enumerate_space(&ImageSpaceSpec::full(2, 2).unwrap()).unwrap();
        assert!(images.iter().all(|img| m.predict_levels(img).0 == [true]));
    }

    #[test]
    fn validation_rejects_bad_rules() {
        assert!(RuleModel::new(2, 2, vec![]).is_err());
        assert!(RuleModel::new(2, 2, vec![RuleLevel::new([1], [1])]).is_err());
        assert!(RuleModel::new(2, 2, vec![RuleLevel::new([4], [])]).is_err());
        let m = RuleModel::new(2, 2, vec![RuleLevel::new([3], [])]).unwrap();
        assert!(m.with_support([0, 1].into_iter().collect()).is_err());
        assert!(serde_json::from_str::<RuleModel>(
            r#"{"width":2,"height":2,"levels":[{"ones_required":[0],"zeros_required":[0]}]}"#
        )
        .is_err());
    }

    #[test]
    fn zero_to_one_removes_exactly_the_violated_constraints() {
        let m = RuleModel::new(3, 3, vec![RuleLevel::new([0, 1, 2], [7, 8])]).unwrap();
        let img = BinaryImage::from_bitstring(3, 3, "101000001").unwrap();
        let spec = ImageSpaceSpec::full(3, 3).unwrap();
        let reference = Model::<f64>::Rule(m.clone());
        let out = rule_update(&m, &img, &PredictionVector(vec![true]), &spec, &reference).unwrap();
        assert_eq!(out.levels[0], RuleLevel::new([0, 2], [7]));
    }

    #[test]
    fn one_to_zero_adds_the_best_single_constraint() {
        // B accepts only the main diagonal; A currently accepts anything with pixel 0.
        let b = RuleModel::new(3, 3, vec![RuleLevel::new([0, 4, 8], [])]).unwrap();
        let a = RuleModel::new(3, 3, vec![RuleLevel::new([0], [])]).unwrap();
        let img = BinaryImage::from_bitstring(3, 3, "100000000").unwrap();
        let spec = ImageSpaceSpec::full(3, 3).unwrap();
        let out = rule_update(&a, &img, &PredictionVector(vec![false]), &spec, &Model::<f64>::Rule(b.clone()))
            .unwrap();

        // Brute force every single-constraint addition the image violates.
        let images = enumerate_space(&spec).unwrap();
        let mut best = (usize::MAX, 0);
        for p in 1..9 {
            let mut level = a.levels[0].clone();
            level.require_opposite_of(&img, p);
            let count = images.iter().filter(|i| level.matches(i) != b.levels[0].matches(i)).count();
            if count < best.0 {
                best = (count, p);
            }
        }
        assert_eq!(best.1, 4);
        assert_eq!(out.levels[0], RuleLevel::new([0, 4], []));
        assert_eq!(out.predict_levels(&img).0, vec![false]);
    }

    #[test]
    fn fully_constrained_level_repolarizes() {
        let a = RuleModel::new(1, 2, vec![RuleLevel::new([0, 1], [])]).unwrap();
        let b = RuleModel::new(1, 2, vec![RuleLevel::new([0], [1])]).unwrap();
        let img = BinaryImage::from_bitstring(1, 2, "11").unwrap();
        let spec = ImageSpaceSpec::full(1, 2).unwrap();
        let out = rule_update(&a, &img, &PredictionVector(vec![false]), &spec, &Model::<f64>::Rule(b.clone()))
            .unwrap();
        assert_eq!(out, b);
    }

    #[test]
    fn restricted_support_can_be_unreachable() {
        let a = RuleModel::new(1, 2, vec![RuleLevel::default()])
            .unwrap()
            .with_support(PixelSet::new())
            .unwrap();
        let img = BinaryImage::from_bitstring(1, 2, "10").unwrap();
        let spec = ImageSpaceSpec::full(1, 2).unwrap();
        let err = rule_update(&a, &img, &PredictionVector(vec![false]), &spec, &Model::<f64>::Rule(a.clone()));
        assert!(matches!(err, Err(Error::Unreachable { level: 0 })));
    }

    #[test]
    fn untouched_levels_stay_put() {
        let a = RuleModel::new(2, 2, vec![RuleLevel::new([0], []), RuleLevel::new([1], [])]).unwrap();
        let img = BinaryImage::from_bitstring(2, 2, "1000").unwrap();
        let spec = ImageSpaceSpec::full(2, 2).unwrap();
        let out = rule_update(
            &a,
            &img,
            &PredictionVector(vec![true, true]),
            &spec,
            &Model::<f64>::Rule(a.clone()),
        )
        .unwrap();
        assert_eq!(out.levels[0], a.levels[0]);
        assert_eq!(out.levels[1], RuleLevel::default());
    }

    #[test]
    fn pixel_set_basics() {
        let mut s: PixelSet = [3, 70, 1].into_iter().collect();
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![1, 3, 70]);
        assert!(s.remove(70));
        assert!(!s.remove(70));
        assert_eq!(s.len(), 2);
        assert_eq!(serde_json::to_string(&s).unwrap(), "[1,3]");
        assert_eq!(s, PixelSet::from_iter([1, 3]));
    }
}
