use std::collections::HashSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use diagnostic_interp::imagespace::{enumerate_space, sample_disagreement};
use diagnostic_interp::metrics::{binary_entropy, disagreement_breakdown};
use diagnostic_interp::oracle::brute_force_breakdown;
use diagnostic_interp::{BinaryImage, ImageSpaceSpec, LinearModel, Model, RuleLevel, RuleModel};

fn rule_level(side: usize) -> impl Strategy<Value = RuleLevel> {
    proptest::collection::vec(0u8..4, side * side).prop_map(|marks| {
        let ones = marks.iter().enumerate().filter(|(_, &m)| m == 0).map(|(p, _)| p);
        let zeros = marks.iter().enumerate().filter(|(_, &m)| m == 1).map(|(p, _)| p);
        RuleLevel::new(ones.collect::<Vec<_>>(), zeros.collect::<Vec<_>>())
    })
}

fn rule_pair(side: usize) -> impl Strategy<Value = (Model, Model)> {
    (1usize..=3).prop_flat_map(move |k| {
        (
            proptest::collection::vec(rule_level(side), k),
            proptest::collection::vec(rule_level(side), k),
        )
            .prop_map(move |(a, b)| {
                (
                    RuleModel::new(side, side, a).unwrap().into(),
                    RuleModel::new(side, side, b).unwrap().into(),
                )
            })
    })
}

proptest! {
    #[test]
    fn entropy_is_symmetric_and_bounded(f in 0.0f64..=1.0) {
        let h = binary_entropy(f).unwrap();
        prop_assert!((h - binary_entropy(1.0 - f).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&h));
    }

    #[test]
    fn entropy_is_concave(x in 0.0f64..=1.0, y in 0.0f64..=1.0, t in 0.0f64..=1.0) {
        let mixed = binary_entropy(t * x + (1.0 - t) * y).unwrap();
        let chord = t * binary_entropy(x).unwrap() + (1.0 - t) * binary_entropy(y).unwrap();
        prop_assert!(mixed >= chord - 1e-12);
    }

    #[test]
    fn extra_constraint_never_accepts_more(level in rule_level(3), pixel in 0usize..9, polarity: bool, code in 0u64..512) {
        let image = BinaryImage::from_code(3, 3, code).unwrap();
        let mut stricter = level.clone();
        if !stricter.is_constrained(pixel) {
            if polarity {
                stricter.ones_required.insert(pixel);
            } else {
                stricter.zeros_required.insert(pixel);
            }
        }
        prop_assert!(!stricter.matches(&image) || level.matches(&image));
    }

    #[test]
    fn linear_labels_survive_positive_scaling(
        weights in proptest::collection::vec(-4.0f64..4.0, 9),
        bias in -4.0f64..4.0,
        code in 0u64..512,
    ) {
        let image = BinaryImage::from_code(3, 3, code).unwrap();
        let model = LinearModel::new(3, 3, weights.clone(), bias).unwrap();
        for factor in [0.5, 2.0, 10.0] {
            let scaled = LinearModel::new(3, 3, weights.iter().map(|w| w * factor).collect(), bias * factor).unwrap();
            prop_assert_eq!(scaled.label(&image), model.label(&image));
        }
    }

    #[test]
    fn envelopes_have_no_duplicates(codes in proptest::collection::vec(0u64..1 << 9, 1..5)) {
        let bases: Vec<BinaryImage> = codes.iter().map(|&c| BinaryImage::from_code(3, 3, c).unwrap()).collect();
        let spec = ImageSpaceSpec::envelope(3, 3, bases.clone(), 1).unwrap();
        let images = enumerate_space(&spec).unwrap();
        let distinct: HashSet<_> = images.iter().cloned().collect();
        prop_assert_eq!(distinct.len(), images.len());
        prop_assert!(images.len() <= bases.len() * 10);
        for image in &images {
            prop_assert!(bases.iter().any(|b| b.hamming_distance(image) <= 1));
        }
    }

    #[test]
    fn breakdown_matches_oracle((a, b) in rule_pair(2)) {
        let spec = ImageSpaceSpec::full(2, 2).unwrap();
        let fast = disagreement_breakdown(&a, &b, &spec).unwrap();
        let slow = brute_force_breakdown(&a, &b, &spec).unwrap();
        prop_assert_eq!(&fast.disagreement_counts, &slow.level_counts);
        prop_assert!((fast.total - slow.total_entropy).abs() < 1e-12);
    }
}

#[test]
fn sampled_images_cover_exactly_the_disagreements() {
    let spec = ImageSpaceSpec::full(3, 3).unwrap();
    let a: Model = RuleModel::new(3, 3, vec![RuleLevel::new([0], [8])]).unwrap().into();
    let b: Model = RuleModel::new(3, 3, vec![RuleLevel::new([0, 4], [])]).unwrap().into();
    let expected: HashSet<BinaryImage> = enumerate_space(&spec)
        .unwrap()
        .into_iter()
        .filter(|img| a.top_label(img).unwrap() != b.top_label(img).unwrap())
        .collect();
    let mut seen = HashSet::new();
    for seed in 0..2000 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = sample_disagreement(&spec, &a, &b, &mut rng).unwrap().unwrap();
        assert!(expected.contains(&img));
        seen.insert(img);
    }
    assert_eq!(seen, expected);
    assert!(sample_disagreement(&spec, &a, &a, &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap()
        .is_none());
}

#[test]
fn sampling_is_uniform() {
    // complementary models disagree on all 16 images of the 2x2 space
    let spec = ImageSpaceSpec::full(2, 2).unwrap();
    let a: Model = RuleModel::new(2, 2, vec![RuleLevel::new([0], [])]).unwrap().into();
    let b: Model = RuleModel::new(2, 2, vec![RuleLevel::new([], [0])]).unwrap().into();
    let draws = 10_000;
    let mut counts = [0u32; 16];
    for seed in 0..draws {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = sample_disagreement(&spec, &a, &b, &mut rng).unwrap().unwrap();
        let code = img.bits().fold(0usize, |acc, bit| acc << 1 | usize::from(bit));
        counts[code] += 1;
    }
    let expected = draws as f64 / 16.0;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(15.0).unwrap().cdf(stat);
    assert!(p > 0.01, "chi-square {stat}, p = {p}");
}
