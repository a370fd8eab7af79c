mod spec;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use diagnostic_interp::harness::{
    mean_trajectory_csv, queries_to_reach, summary, write_report, MEAN_TRAJECTORY_FILE, SUMMARY_FILE,
};
use diagnostic_interp::metrics::LevelAlignment;
use diagnostic_interp::oracle::{brute_force_breakdown_with, exhaustive_fixed_point, OracleResult};
use diagnostic_interp::{
    run_complete_interpretation, run_interpretation, EngineConfig, Error, Fixture, Mode, Model, Report, RuleModel,
};

use spec::{RunSpec, SpecError};

const ORACLE_FILE: &str = "oracle.json";
const DEMO_THRESHOLD: f64 = 0.99;

#[derive(Parser)]
#[command(name = "dinterp", version, about = "Interpret a black-box binary-image classifier with a known model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// Run spec JSON: a fixture name or an explicit space and models.
    #[arg(long, value_name = "PATH", conflicts_with = "fixture")]
    spec: Option<PathBuf>,
    /// Named fixture: fig1b, fig1c, fig2-diagonal or eval-squares.
    #[arg(long, value_name = "NAME")]
    fixture: Option<String>,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    /// Cost per query in the objective.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long = "max-queries")]
    max_queries: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one interpretation and write report.json, trajectory.csv, summary.txt.
    Interpret {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
    /// Brute-force disagreement counts, plus the exhaustive fixed point for rule models.
    Oracle {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
    /// Run a fixture over consecutive seeds and aggregate the trajectories.
    Demo {
        #[arg(long, value_name = "NAME")]
        fixture: String,
        #[command(flatten)]
        overrides: Overrides,
        /// Number of seeds; 10 for eval-squares, 1 otherwise.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Guard(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Guard(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Guard(m) | CliError::Io(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::SpaceTooLarge { .. } => CliError::Guard(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        match e {
            SpecError::Engine(inner) => inner.into(),
            SpecError::Io(m) => CliError::Io(m),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("cannot write {}: {e}", path.display()))
}

/// A configured run and whether it sweeps the whole space.
struct Resolved {
    config: EngineConfig,
    complete: bool,
}

fn from_fixture(fixture: Fixture, seed: u64, overrides: &Overrides) -> Result<Resolved, CliError> {
    let mut config: EngineConfig = fixture.build(seed)?;
    apply(&mut config, overrides)?;
    Ok(Resolved {
        config,
        complete: fixture.is_complete(),
    })
}

fn apply(config: &mut EngineConfig, overrides: &Overrides) -> Result<(), CliError> {
    if let Some(seed) = overrides.seed {
        config.rng_seed = seed;
    }
    if let Some(lambda) = overrides.lambda {
        config.lambda = lambda;
    }
    if let Some(n) = overrides.max_queries {
        config.max_queries = n;
    }
    config.validate()?;
    Ok(())
}

fn resolve(source: &Source, overrides: &Overrides) -> Result<Resolved, CliError> {
    match (&source.spec, &source.fixture) {
        (None, None) => Err(CliError::Config("give --spec PATH or --fixture NAME".into())),
        (_, Some(name)) => {
            let fixture: Fixture = name.parse()?;
            from_fixture(fixture, overrides.seed.unwrap_or(0), overrides)
        }
        (Some(path), None) => match RunSpec::load(path)? {
            RunSpec::Fixture {
                fixture,
                seed,
                lambda,
                max_queries,
            } => {
                let merged = Overrides {
                    seed: overrides.seed.or(seed),
                    lambda: overrides.lambda.or(lambda),
                    max_queries: overrides.max_queries.or(max_queries),
                };
                from_fixture(fixture, merged.seed.unwrap_or(0), &merged)
            }
            RunSpec::Explicit { mut config, complete } => {
                apply(&mut config, overrides)?;
                Ok(Resolved {
                    config: *config,
                    complete,
                })
            }
        },
    }
}

fn run(resolved: &Resolved) -> Result<Report, CliError> {
    let report = if resolved.complete {
        run_complete_interpretation(&resolved.config)?
    } else {
        run_interpretation(&resolved.config)?
    };
    Ok(report)
}

fn write_run(dir: &Path, report: &Report) -> Result<String, CliError> {
    write_report(dir, report).map_err(|e| io_error(dir, e))?;
    let text = summary(report);
    let path = dir.join(SUMMARY_FILE);
    fs::write(&path, &text).map_err(|e| io_error(&path, e))?;
    Ok(text)
}

fn interpret(source: &Source, overrides: &Overrides, out: &Path) -> Result<String, CliError> {
    let resolved = resolve(source, overrides)?;
    let report = run(&resolved)?;
    write_run(out, &report)
}

#[derive(Serialize)]
struct FixedPointOutput {
    model: RuleModel,
    level_counts: Vec<u64>,
    total_entropy: f64,
    passes: usize,
    converged: bool,
    /// `(h - h') / h` with `h` the starting and `h'` the fixed-point entropy.
    interpretability: f64,
}

#[derive(Serialize)]
struct OracleOutput {
    mode: Mode,
    breakdown: OracleResult,
    fixed_point: Option<FixedPointOutput>,
}

fn oracle(source: &Source, seed: Option<u64>, out: &Path) -> Result<String, CliError> {
    let overrides = Overrides {
        seed,
        lambda: None,
        max_queries: None,
    };
    let config = resolve(source, &overrides)?.config;
    let breakdown = brute_force_breakdown_with(
        &config.model_a,
        &config.model_b,
        &config.space,
        config.mode.alignment(),
    )?;
    let fixed_point = match (&config.model_a, config.mode.alignment()) {
        (Model::Rule(a), LevelAlignment::Matched) => {
            let fp = exhaustive_fixed_point(a, &config.model_b, &config.space)?;
            let h = breakdown.total_entropy;
            let interpretability = if h == 0.0 || fp.result.total_entropy == 0.0 {
                1.0
            } else {
                (h - fp.result.total_entropy) / h
            };
            Some(FixedPointOutput {
                model: fp.model,
                level_counts: fp.result.level_counts,
                total_entropy: fp.result.total_entropy,
                passes: fp.passes,
                converged: fp.converged,
                interpretability,
            })
        }
        _ => None,
    };
    let mut text = format!(
        "disagreements {:?} of {} images, h = {:.4} bits\n",
        breakdown.level_counts, breakdown.space_size, breakdown.total_entropy
    );
    if let Some(fp) = &fixed_point {
        text.push_str(&format!(
            "fixed point h' = {:.6} bits, (h - h')/h = {:.6}, converged = {}\n",
            fp.total_entropy, fp.interpretability, fp.converged
        ));
    }
    let output = OracleOutput {
        mode: config.mode,
        breakdown,
        fixed_point,
    };
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let path = out.join(ORACLE_FILE);
    let json = serde_json::to_string_pretty(&output).expect("oracle output serializes") + "\n";
    fs::write(&path, json).map_err(|e| io_error(&path, e))?;
    let path = out.join(SUMMARY_FILE);
    fs::write(&path, &text).map_err(|e| io_error(&path, e))?;
    Ok(text)
}

fn demo(fixture: &str, overrides: &Overrides, seeds: Option<u64>, out: &Path) -> Result<String, CliError> {
    let fixture: Fixture = fixture.parse()?;
    let count = seeds.unwrap_or(if fixture == Fixture::EvalSquares { 10 } else { 1 });
    if count == 0 {
        return Err(CliError::Config("--seeds must be at least 1".into()));
    }
    let first = overrides.seed.unwrap_or(0);
    if count == 1 {
        let report = run(&from_fixture(fixture, first, overrides)?)?;
        return write_run(out, &report);
    }
    let mut reports = Vec::new();
    for seed in first..first + count {
        let per_seed = Overrides {
            seed: Some(seed),
            lambda: overrides.lambda,
            max_queries: overrides.max_queries,
        };
        let resolved = from_fixture(fixture, seed, &per_seed)?;
        let report = run(&resolved)?;
        write_run(&out.join(format!("seed_{seed}")), &report)?;
        reports.push((seed, resolved.config.max_queries, report));
    }
    let all: Vec<Report> = reports.iter().map(|(_, _, r)| r.clone()).collect();
    let path = out.join(MEAN_TRAJECTORY_FILE);
    fs::write(&path, mean_trajectory_csv(&all)).map_err(|e| io_error(&path, e))?;

    let budget = reports.iter().map(|(_, q, _)| *q).max().unwrap_or(0);
    let reached = reports
        .iter()
        .filter(|(_, q, r)| queries_to_reach(r, DEMO_THRESHOLD).is_some_and(|n| n <= *q))
        .count();
    let mean_final = all.iter().map(|r| r.final_interpretability).sum::<f64>() / all.len() as f64;
    let mut text = format!(
        "{reached}/{count} seeds reached I >= {DEMO_THRESHOLD} within {budget} queries\nmean final I = {mean_final:.3}\n"
    );
    for (seed, _, r) in &reports {
        text.push_str(&format!(
            "seed {seed}: I = {:.3}, queries = {}, termination = {}\n",
            r.final_interpretability,
            r.steps.len(),
            serde_json::to_string(&r.termination).expect("serializes").trim_matches('"')
        ));
    }
    let path = out.join(SUMMARY_FILE);
    fs::write(&path, &text).map_err(|e| io_error(&path, e))?;
    Ok(text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Interpret { source, overrides, out } => interpret(source, overrides, out),
        Command::Oracle { source, seed, out } => oracle(source, *seed, out),
        Command::Demo {
            fixture,
            overrides,
            seeds,
            out,
        } => demo(fixture, overrides, *seeds, out),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
