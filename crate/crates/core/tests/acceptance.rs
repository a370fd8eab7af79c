//! Acceptance suite: one line per criterion, non-zero exit on any failure.

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use diagnostic_interp::fixtures::SquaresTask;
use diagnostic_interp::harness::{queries_to_reach, write_report, REPORT_FILE, TRAJECTORY_FILE};
use diagnostic_interp::imagespace::{enumerate_space, SpaceCardinality};
use diagnostic_interp::models::PixelSet;
use diagnostic_interp::metrics::{binary_entropy, confidence_epsilon, disagreement_breakdown, interpretability};
use diagnostic_interp::oracle::{brute_force_breakdown, exhaustive_fixed_point};
use diagnostic_interp::{
    run_complete_interpretation, run_interpretation, BinaryImage, EngineConfig, Fixture, ImageSpaceSpec, LabeledImage,
    Model, NeuralModel, RuleLevel, RuleModel, Termination, Updater,
};

const DIAGONAL_ENTROPY: f64 = 0.5226;
const DIAGONAL_ENTROPY_TOL: f64 = 1e-3;
const DIAGONAL_BUDGET: Duration = Duration::from_secs(1);
const FULL_SPACE_BUDGET: Duration = Duration::from_secs(10);
const FIXED_POINT_TOL: f64 = 1e-9;
const EPSILON_TARGET: f64 = 3.51e-74;
const EPSILON_REL_TOL: f64 = 0.01;
const SQUARES_SEEDS: u64 = 10;
const SQUARES_REQUIRED: usize = 8;
const SQUARES_THRESHOLD: f64 = 0.99;
const SQUARES_QUERY_LIMIT: usize = 10;
const SQUARES_TRAIN_ACCURACY: f64 = 0.99;
const SQUARES_BUDGET: Duration = Duration::from_secs(60);
const ORACLE_PAIRS: u64 = 20;
const ORACLE_ENTROPY_TOL: f64 = 1e-12;
const ENTROPY_GRID: usize = 1000;
const ENTROPY_GRID_TOL: f64 = 1e-12;
const GRADIENT_REL_TOL: f64 = 1e-4;
const GRADIENT_STEP: f64 = 1e-6;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn diagonal_toy() -> Outcome {
    let start = Instant::now();
    let config: EngineConfig = Fixture::Fig2Diagonal.build(0).map_err(|e| e.to_string())?;
    let report = run_interpretation(&config).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let init = &report.initial_entropy;
    check(
        init.disagreement_counts == [4] && init.space_size == 34,
        format!("counts {:?} of {}", init.disagreement_counts, init.space_size),
    )?;
    check(
        (init.total - DIAGONAL_ENTROPY).abs() <= DIAGONAL_ENTROPY_TOL,
        format!("initial entropy {}", init.total),
    )?;
    check(report.final_interpretability == 1.0, format!("final I {}", report.final_interpretability))?;
    check(report.steps.len() <= 4, format!("{} queries", report.steps.len()))?;
    check(elapsed < DIAGONAL_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!(
        "4/34 disagree, h = {:.4}, I = 1 after {} queries, {elapsed:.2?}",
        init.total,
        report.steps.len()
    ))
}

fn full_space() -> Outcome {
    let start = Instant::now();
    let b_config: EngineConfig = Fixture::Fig1b.build(0).map_err(|e| e.to_string())?;
    let b_report = run_complete_interpretation(&b_config).map_err(|e| e.to_string())?;
    check(
        b_report.final_entropy().total == 0.0 && b_report.final_interpretability == 1.0,
        format!(
            "fig1b ended at H = {}, I = {}",
            b_report.final_entropy().total,
            b_report.final_interpretability
        ),
    )?;

    let c_config: EngineConfig = Fixture::Fig1c.build(0).map_err(|e| e.to_string())?;
    let c_report = run_complete_interpretation(&c_config).map_err(|e| e.to_string())?;
    check(c_report.termination == Termination::Stalled, format!("fig1c ended {:?}", c_report.termination))?;
    let i = c_report.final_interpretability;
    check(i > 0.0 && i < 1.0, format!("fig1c I = {i}"))?;

    let Model::Rule(a) = &c_config.model_a else {
        return Err("fig1c model A is not a rule".into());
    };
    let h = brute_force_breakdown(&c_config.model_a, &c_config.model_b, &c_config.space)
        .map_err(|e| e.to_string())?
        .total_entropy;
    let fixed = exhaustive_fixed_point(a, &c_config.model_b, &c_config.space).map_err(|e| e.to_string())?;
    check(fixed.converged, "oracle fixed point did not converge")?;
    let expected = (h - fixed.result.total_entropy) / h;
    check(
        (i - expected).abs() <= FIXED_POINT_TOL,
        format!("fig1c I = {i}, oracle (h - h')/h = {expected}"),
    )?;
    let elapsed = start.elapsed();
    check(elapsed < FULL_SPACE_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!("fig1b H = 0, I = 1; fig1c I = {i:.6} = oracle {expected:.6}; {elapsed:.2?}"))
}

fn epsilon_arithmetic() -> Outcome {
    let eps = confidence_epsilon(
        &SpaceCardinality::from_count(4068),
        &SpaceCardinality::power_of_two(256, 1000),
    )
    .map_err(|e| e.to_string())?;
    let rel = (eps.value() - EPSILON_TARGET).abs() / EPSILON_TARGET;
    check(rel <= EPSILON_REL_TOL, format!("epsilon {} (relative error {rel:.2e})", eps.value()))?;
    Ok(format!("epsilon = {} (relative error {rel:.2e})", eps.display))
}

fn squares_evaluation() -> Outcome {
    let start = Instant::now();
    let task = SquaresTask::default();
    let mut reached = 0;
    let mut per_seed = Vec::new();
    for seed in 0..SQUARES_SEEDS {
        let trained = task.train::<f64>(seed).map_err(|e| e.to_string())?;
        let config = &trained.config;
        let Model::Neural(b) = &config.model_b else {
            return Err("model B is not neural".into());
        };
        check(matches!(config.model_a, Model::Linear(_)), "model A is not linear")?;
        let correct = trained.training.iter().filter(|s| b.label(&s.image) == s.label).count();
        let accuracy = correct as f64 / trained.training.len() as f64;
        check(
            accuracy >= SQUARES_TRAIN_ACCURACY,
            format!("seed {seed}: B training accuracy {accuracy}"),
        )?;
        let report = run_interpretation(config).map_err(|e| e.to_string())?;
        match queries_to_reach(&report, SQUARES_THRESHOLD) {
            Some(q) if q <= SQUARES_QUERY_LIMIT => {
                reached += 1;
                per_seed.push(q.to_string());
            }
            _ => per_seed.push("-".into()),
        }
    }
    let elapsed = start.elapsed();
    check(
        reached >= SQUARES_REQUIRED,
        format!("{reached}/{SQUARES_SEEDS} seeds reached I >= {SQUARES_THRESHOLD} (queries: {})", per_seed.join(",")),
    )?;
    check(elapsed < SQUARES_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!(
        "{reached}/{SQUARES_SEEDS} seeds reached I >= {SQUARES_THRESHOLD}, queries {}, {elapsed:.1?}",
        per_seed.join(",")
    ))
}

fn random_rule(rng: &mut ChaCha8Rng, side: usize, levels: usize) -> Model {
    let levels = (0..levels)
        .map(|_| {
            let mut ones = Vec::new();
            let mut zeros = Vec::new();
            for p in 0..side * side {
                match rng.gen_range(0..4) {
                    0 => ones.push(p),
                    1 => zeros.push(p),
                    _ => {}
                }
            }
            RuleLevel::new(ones, zeros)
        })
        .collect();
    RuleModel::new(side, side, levels).expect("valid rule").into()
}

fn compare_with_oracle(a: &Model, b: &Model, spec: &ImageSpaceSpec) -> Result<(), String> {
    let fast = disagreement_breakdown(a, b, spec).map_err(|e| e.to_string())?;
    let slow = brute_force_breakdown(a, b, spec).map_err(|e| e.to_string())?;
    check(
        fast.disagreement_counts == slow.level_counts && fast.space_size == slow.space_size,
        format!("counts {:?} vs oracle {:?}", fast.disagreement_counts, slow.level_counts),
    )?;
    for (x, y) in fast.per_level.iter().zip(&slow.per_level_entropy) {
        check((x - y).abs() <= ORACLE_ENTROPY_TOL, format!("level entropy {x} vs oracle {y}"))?;
    }
    check(
        (fast.total - slow.total_entropy).abs() <= ORACLE_ENTROPY_TOL,
        format!("total entropy {} vs oracle {}", fast.total, slow.total_entropy),
    )
}

fn oracle_equivalence() -> Outcome {
    let full = ImageSpaceSpec::full(3, 3).map_err(|e| e.to_string())?;
    for seed in 0..ORACLE_PAIRS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let levels = rng.gen_range(1..=3);
        let a = random_rule(&mut rng, 3, levels);
        let b = random_rule(&mut rng, 3, levels);
        compare_with_oracle(&a, &b, &full).map_err(|e| format!("3x3 seed {seed}: {e}"))?;
    }
    for seed in 0..ORACLE_PAIRS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let spec = loop {
            let bases: Vec<BinaryImage> = (0..2)
                .map(|_| BinaryImage::from_code(4, 4, rng.gen_range(0..1 << 16)).expect("4x4"))
                .collect();
            let spec = ImageSpaceSpec::envelope(4, 4, bases, 1).map_err(|e| e.to_string())?;
            if enumerate_space(&spec).map_err(|e| e.to_string())?.len() == 34 {
                break spec;
            }
        };
        let levels = rng.gen_range(1..=3);
        let a = random_rule(&mut rng, 4, levels);
        let b = random_rule(&mut rng, 4, levels);
        compare_with_oracle(&a, &b, &spec).map_err(|e| format!("envelope seed {seed}: {e}"))?;
    }
    Ok(format!("{ORACLE_PAIRS} full 3x3 pairs and {ORACLE_PAIRS} 34-image envelopes agree"))
}

fn extremal_cases() -> Outcome {
    // H^t = 0 gives I^t = 1 exactly
    let config: EngineConfig = Fixture::Fig1b.build(0).map_err(|e| e.to_string())?;
    let report = run_complete_interpretation(&config).map_err(|e| e.to_string())?;
    let zero_steps: Vec<_> = report.steps.iter().filter(|s| s.entropy_after.total == 0.0).collect();
    check(!zero_steps.is_empty(), "no step reached zero entropy")?;
    check(zero_steps.iter().all(|s| s.i_t == 1.0), "a zero-entropy step has I != 1")?;
    check(
        interpretability(0.7_f64, 0.0).map_err(|e| e.to_string())?.value == 1.0,
        "interpretability(h, 0) != 1",
    )?;

    // three consecutive flat steps stall the run
    let a = RuleModel::new(2, 2, vec![RuleLevel::default()])
        .and_then(|m| m.with_support(PixelSet::new()))
        .map_err(|e| e.to_string())?;
    let b = RuleModel::new(2, 2, vec![RuleLevel::new([0], [])]).map_err(|e| e.to_string())?;
    let mut config: EngineConfig = EngineConfig::new(
        ImageSpaceSpec::full(2, 2).map_err(|e| e.to_string())?,
        a.into(),
        b.into(),
        Updater::RuleMinimalEdit,
    );
    config.max_queries = 10;
    let report = run_interpretation(&config).map_err(|e| e.to_string())?;
    check(report.termination == Termination::Stalled, format!("ended {:?}", report.termination))?;
    check(
        report.steps.len() == 3 && report.steps.iter().all(|s| s.delta_i_t == 0.0),
        format!("{} steps before stalling", report.steps.len()),
    )?;

    // A = B needs no queries
    let m = RuleModel::new(3, 3, vec![RuleLevel::new([0, 4], [8])]).map_err(|e| e.to_string())?;
    let config: EngineConfig = EngineConfig::new(
        ImageSpaceSpec::full(3, 3).map_err(|e| e.to_string())?,
        m.clone().into(),
        m.into(),
        Updater::RuleMinimalEdit,
    );
    let report = run_interpretation(&config).map_err(|e| e.to_string())?;
    check(
        report.steps.is_empty() && report.final_interpretability == 1.0,
        format!("A = B took {} queries, I = {}", report.steps.len(), report.final_interpretability),
    )?;
    Ok("H = 0 gives I = 1; flat steps stall after 3; A = B needs 0 queries".into())
}

fn gradient_check() -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let data: Vec<LabeledImage> = (0..12)
        .map(|_| LabeledImage {
            image: BinaryImage::from_code(4, 4, rng.gen_range(0..1 << 16)).expect("4x4"),
            label: rng.gen(),
        })
        .collect();
    let model = NeuralModel::initialize(4, 4, &[16, 6, 4, 1], 7).map_err(|e| e.to_string())?;
    let (_, grads) = model.loss_and_gradient(&data);
    let analytic: Vec<f64> = grads
        .iter()
        .flat_map(|g| g.weights.iter().chain(&g.biases).copied())
        .collect();
    let params = model.parameters();
    let mut worst: f64 = 0.0;
    for (k, &g) in analytic.iter().enumerate() {
        let mut probe = model.clone();
        let mut p = params.clone();
        p[k] = params[k] + GRADIENT_STEP;
        probe.set_parameters(&p);
        let up = probe.loss(&data);
        p[k] = params[k] - GRADIENT_STEP;
        probe.set_parameters(&p);
        let down = probe.loss(&data);
        let numeric = (up - down) / (2.0 * GRADIENT_STEP);
        // absolute floor for parameters behind inactive relus
        let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}

fn reports_bytes(fixture: Fixture, seed: u64) -> Result<(Vec<u8>, Vec<u8>), String> {
    let config: EngineConfig = fixture.build(seed).map_err(|e| e.to_string())?;
    let report = run_interpretation(&config).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_report(dir.path(), &report).map_err(|e| e.to_string())?;
    let json = fs::read(dir.path().join(REPORT_FILE)).map_err(|e| e.to_string())?;
    let csv = fs::read(dir.path().join(TRAJECTORY_FILE)).map_err(|e| e.to_string())?;
    Ok((json, csv))
}

fn numerical_properties() -> Outcome {
    for i in 0..=ENTROPY_GRID {
        let f = i as f64 / ENTROPY_GRID as f64;
        let h = binary_entropy(f).map_err(|e| e.to_string())?;
        let mirror = binary_entropy(1.0 - f).map_err(|e| e.to_string())?;
        check((h - mirror).abs() <= ENTROPY_GRID_TOL, format!("h({f}) = {h}, h(1-f) = {mirror}"))?;
        check(
            (-ENTROPY_GRID_TOL..=1.0 + ENTROPY_GRID_TOL).contains(&h),
            format!("h({f}) = {h} out of [0, 1]"),
        )?;
    }
    let worst = gradient_check()?;
    check(worst < GRADIENT_REL_TOL, format!("gradient relative error {worst:.2e}"))?;
    for fixture in [Fixture::Fig2Diagonal, Fixture::EvalSquares] {
        let first = reports_bytes(fixture, 3)?;
        let second = reports_bytes(fixture, 3)?;
        check(first == second, format!("{fixture} outputs differ between runs"))?;
    }
    Ok(format!("entropy grid ok, gradient error {worst:.1e}, repeated runs byte-identical"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("1 diagonal toy", diagonal_toy),
        ("2 full 4x4 space", full_space),
        ("3 epsilon arithmetic", epsilon_arithmetic),
        ("4 squares evaluation", squares_evaluation),
        ("5 oracle equivalence", oracle_equivalence),
        ("6 extremal cases", extremal_cases),
        ("7 numerical properties", numerical_properties),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
