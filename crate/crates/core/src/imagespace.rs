//! Binary-image spaces: single images, the full space of a grid, and
//! pixel-flip envelopes around a set of base images.

use std::collections::HashSet;
use std::fmt;

use num_bigint::BigUint;
use num_traits::One;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::models::Model;
use crate::scalar::Scalar;

/// Largest pixel count for which the full space may be enumerated.
pub const DEFAULT_MAX_FULL_PIXELS: usize = 24;
/// Largest number of images an envelope may materialize.
pub const DEFAULT_MAX_ENVELOPE_IMAGES: usize = 10_000_000;
/// Decimal digit budget for exact cardinalities.
pub const DEFAULT_DIGIT_BUDGET: usize = 1000;

const WORD: usize = 64;

/// Fixed-size grid of bits, row-major.
///
/// Bits are packed into 64-bit words; bits past `width * height` are always
/// zero so that equality and hashing only see the image content.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    words: Vec<u64>,
}

impl BinaryImage {
    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        let len = width * height;
        Ok(Self {
            width,
            height,
            words: vec![0; len.div_ceil(WORD)],
        })
    }

    pub fn from_bits(width: usize, height: usize, bits: &[bool]) -> Result<Self> {
        let mut image = Self::zeros(width, height)?;
        if bits.len() != image.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} bits for a {width}x{height} image, got {}",
                image.len(),
                bits.len()
            )));
        }
        for (i, &bit) in bits.iter().enumerate() {
            image.set(i, bit);
        }
        Ok(image)
    }

    /// Parses a row-major string of `'0'`/`'1'` characters.
    pub fn from_bitstring(width: usize, height: usize, text: &str) -> Result<Self> {
        let bits = text
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidInput(format!(
                    "bitstring may only contain '0' and '1', found {other:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bits(width, height, &bits)
    }

    /// The `code`-th image of the full space in lexicographic bit order:
    /// pixel 0 is the most significant bit of `code`.
    pub fn from_code(width: usize, height: usize, code: u64) -> Result<Self> {
        let mut image = Self::zeros(width, height)?;
        let len = image.len();
        if len > 64 || (len < 64 && code >> len != 0) {
            return Err(Error::InvalidInput(format!(
                "code {code} does not index a {width}x{height} image"
            )));
        }
        for i in 0..len {
            image.set(i, (code >> (len - 1 - i)) & 1 == 1);
        }
        Ok(image)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, pixel: usize) -> bool {
        assert!(pixel < self.len(), "pixel {pixel} out of range");
        (self.words[pixel / WORD] >> (pixel % WORD)) & 1 == 1
    }

    pub fn set(&mut self, pixel: usize, value: bool) {
        assert!(pixel < self.len(), "pixel {pixel} out of range");
        let mask = 1u64 << (pixel % WORD);
        if value {
            self.words[pixel / WORD] |= mask;
        } else {
            self.words[pixel / WORD] &= !mask;
        }
    }

    pub fn flip(&mut self, pixel: usize) {
        assert!(pixel < self.len(), "pixel {pixel} out of range");
        self.words[pixel / WORD] ^= 1u64 << (pixel % WORD);
    }

    pub fn with_flipped(&self, pixels: &[usize]) -> Self {
        let mut out = self.clone();
        for &p in pixels {
            out.flip(p);
        }
        out
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn hamming_distance(&self, other: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn to_bitstring(&self) -> String {
        self.bits().map(|b| if b { '1' } else { '0' }).collect()
    }
}

impl fmt::Debug for BinaryImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryImage({}x{} {})", self.width, self.height, self.to_bitstring())
    }
}

impl fmt::Display for BinaryImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bitstring())
    }
}

impl Serialize for BinaryImage {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_bitstring())
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidSpec(format!(
            "image dimensions must be positive, got {width}x{height}"
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceMode {
    Full,
    Envelope,
}

/// Declarative description of an evaluation set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageSpaceSpec {
    pub width: usize,
    pub height: usize,
    pub mode: SpaceMode,
    pub base_images: Vec<BinaryImage>,
    pub flip_radius: usize,
}

impl ImageSpaceSpec {
    pub fn full(width: usize, height: usize) -> Result<Self> {
        let spec = Self {
            width,
            height,
            mode: SpaceMode::Full,
            base_images: Vec::new(),
            flip_radius: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn envelope(
        width: usize,
        height: usize,
        base_images: Vec<BinaryImage>,
        flip_radius: usize,
    ) -> Result<Self> {
        let spec = Self {
            width,
            height,
            mode: SpaceMode::Envelope,
            base_images,
            flip_radius,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_dims(self.width, self.height)?;
        if self.mode == SpaceMode::Envelope {
            if self.base_images.is_empty() {
                return Err(Error::InvalidSpec(
                    "envelope mode needs at least one base image".into(),
                ));
            }
            if let Some((i, img)) = self
                .base_images
                .iter()
                .enumerate()
                .find(|(_, img)| img.dims() != (self.width, self.height))
            {
                return Err(Error::InvalidSpec(format!(
                    "base image {i} is {}x{}, space is {}x{}",
                    img.width, img.height, self.width, self.height
                )));
            }
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// Cardinality of the whole image space this set lives in.
    pub fn ambient_cardinality(&self) -> Result<SpaceCardinality> {
        cardinality_full(self.width, self.height)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("image space serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Serialize, Deserialize)]
struct RawSpaceSpec {
    width: usize,
    height: usize,
    mode: SpaceMode,
    #[serde(default)]
    base_images: Vec<String>,
    #[serde(default)]
    flip_radius: usize,
}

impl Serialize for ImageSpaceSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        RawSpaceSpec {
            width: self.width,
            height: self.height,
            mode: self.mode,
            base_images: self.base_images.iter().map(BinaryImage::to_bitstring).collect(),
            flip_radius: self.flip_radius,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ImageSpaceSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = RawSpaceSpec::deserialize(deserializer)?;
        let base_images = raw
            .base_images
            .iter()
            .map(|s| BinaryImage::from_bitstring(raw.width, raw.height, s))
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        let spec = ImageSpaceSpec {
            width: raw.width,
            height: raw.height,
            mode: raw.mode,
            base_images,
            flip_radius: raw.flip_radius,
        };
        spec.validate().map_err(D::Error::custom)?;
        Ok(spec)
    }
}

/// Size of a set of images, kept as `log2` with an exact value when it fits
/// the digit budget.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceCardinality {
    pub log2_value: f64,
    pub exact_value: Option<BigUint>,
}

impl SpaceCardinality {
    pub fn from_count(count: u64) -> Self {
        Self {
            log2_value: (count as f64).log2(),
            exact_value: Some(BigUint::from(count)),
        }
    }

    pub fn power_of_two(exponent: u64, digit_budget: usize) -> Self {
        // 2^n has floor(n * log10 2) + 1 decimal digits.
        let digits = (exponent as f64 * std::f64::consts::LOG10_2).floor() as usize + 1;
        let exact_value = (digits <= digit_budget).then(|| BigUint::one() << exponent);
        Self {
            log2_value: exponent as f64,
            exact_value,
        }
    }
}

impl Serialize for SpaceCardinality {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            log2_value: f64,
            exact_value: Option<String>,
        }
        Repr {
            log2_value: self.log2_value,
            exact_value: self.exact_value.as_ref().map(ToString::to_string),
        }
        .serialize(serializer)
    }
}

pub fn cardinality_full(width: usize, height: usize) -> Result<SpaceCardinality> {
    cardinality_full_with_budget(width, height, DEFAULT_DIGIT_BUDGET)
}

pub fn cardinality_full_with_budget(
    width: usize,
    height: usize,
    digit_budget: usize,
) -> Result<SpaceCardinality> {
    check_dims(width, height)?;
    Ok(SpaceCardinality::power_of_two(
        (width * height) as u64,
        digit_budget,
    ))
}

/// Materialization limits for [`enumerate_space_with`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnumerationGuard {
    pub max_full_pixels: usize,
    pub max_envelope_images: usize,
}

impl Default for EnumerationGuard {
    fn default() -> Self {
        Self {
            max_full_pixels: DEFAULT_MAX_FULL_PIXELS,
            max_envelope_images: DEFAULT_MAX_ENVELOPE_IMAGES,
        }
    }
}

pub fn enumerate_space(spec: &ImageSpaceSpec) -> Result<Vec<BinaryImage>> {
    enumerate_space_with(spec, EnumerationGuard::default())
}

/// Materializes every image of `spec` exactly once.
///
/// Full mode is in lexicographic bit order. Envelope mode lists the base
/// images first, then for each base (in order) its flips by increasing flip
/// count and, within a count, by lexicographic pixel-index tuple. Repeats keep
/// their first position.
pub fn enumerate_space_with(
    spec: &ImageSpaceSpec,
    guard: EnumerationGuard,
) -> Result<Vec<BinaryImage>> {
    spec.validate()?;
    match spec.mode {
        SpaceMode::Full => {
            let pixels = spec.pixels();
            if pixels > guard.max_full_pixels {
                return Err(Error::SpaceTooLarge {
                    guard: "full-space pixel guard",
                    limit: 1u128 << guard.max_full_pixels.min(127),
                    requested: 1u128 << pixels.min(127),
                });
            }
            (0..1u64 << pixels)
                .map(|code| BinaryImage::from_code(spec.width, spec.height, code))
                .collect()
        }
        SpaceMode::Envelope => enumerate_envelope(spec, guard.max_envelope_images),
    }
}

fn enumerate_envelope(spec: &ImageSpaceSpec, limit: usize) -> Result<Vec<BinaryImage>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut push = |img: BinaryImage, out: &mut Vec<BinaryImage>| -> Result<()> {
        if seen.insert(img.clone()) {
            if out.len() == limit {
                return Err(Error::SpaceTooLarge {
                    guard: "envelope image guard",
                    limit: limit as u128,
                    requested: limit as u128 + 1,
                });
            }
            out.push(img);
        }
        Ok(())
    };
    for base in &spec.base_images {
        push(base.clone(), &mut out)?;
    }
    let pixels = spec.pixels();
    for base in &spec.base_images {
        for count in 1..=spec.flip_radius.min(pixels) {
            let mut combo: Vec<usize> = (0..count).collect();
            loop {
                push(base.with_flipped(&combo), &mut out)?;
                if !next_combination(&mut combo, pixels) {
                    break;
                }
            }
        }
    }
    Ok(out)
}

/// Advances `combo` to the next `k`-subset of `0..n` in lexicographic order.
fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    for i in (0..k).rev() {
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Picks uniformly among the images of `spec` where the top-level labels of
/// `model_a` and `model_b` differ. `None` when they agree everywhere.
pub fn sample_disagreement<T: Scalar, R: Rng + ?Sized>(
    spec: &ImageSpaceSpec,
    model_a: &Model<T>,
    model_b: &Model<T>,
    rng: &mut R,
) -> Result<Option<BinaryImage>> {
    for (name, model) in [("model A", model_a), ("model B", model_b)] {
        if model.dims() != (spec.width, spec.height) {
            let (w, h) = model.dims();
            return Err(Error::InvalidConfig(format!(
                "{name} expects {w}x{h} images, space is {}x{}",
                spec.width, spec.height
            )));
        }
    }
    let images = enumerate_space(spec)?;
    let mut disagreeing = Vec::new();
    for image in images {
        if model_a.top_label(&image)? != model_b.top_label(&image)? {
            disagreeing.push(image);
        }
    }
    Ok(choose_uniform(disagreeing, rng))
}

pub(crate) fn choose_uniform<X, R: Rng + ?Sized>(mut items: Vec<X>, rng: &mut R) -> Option<X> {
    if items.is_empty() {
        return None;
    }
    let pick = rng.gen_range(0..items.len());
    Some(items.swap_remove(pick))
}
