//! Run outputs: report JSON, trajectory CSV, multi-seed aggregation.

use std::fs;
use std::io;
use std::path::Path;

use crate::engine::Report;
use crate::scalar::Scalar;

pub const REPORT_FILE: &str = "report.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const MEAN_TRAJECTORY_FILE: &str = "mean_trajectory.csv";

/// Writes `report.json` and `trajectory.csv` into `dir`, creating it.
pub fn write_report<T: Scalar>(dir: &Path, report: &Report<T>) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(REPORT_FILE), report.to_json() + "\n")?;
    fs::write(dir.join(TRAJECTORY_FILE), report.trajectory_csv())
}

/// Mean `I_t` per step across runs. Runs that stopped early contribute their
/// final value to the later steps.
pub fn mean_trajectory<T: Scalar>(reports: &[Report<T>]) -> Vec<T> {
    let longest = reports.iter().map(|r| r.steps.len()).max().unwrap_or(0);
    (0..longest)
        .map(|t| {
            let sum = reports.iter().fold(T::zero(), |acc, r| {
                let value = r
                    .steps
                    .get(t)
                    .map_or(r.final_interpretability, |s| s.i_t);
                acc + value
            });
            sum / T::of_count(reports.len() as u64)
        })
        .collect()
}

pub fn mean_trajectory_csv<T: Scalar>(reports: &[Report<T>]) -> String {
    let mut out = String::from("t,mean_I_t\n");
    for (t, value) in mean_trajectory(reports).iter().enumerate() {
        out.push_str(&format!("{},{}\n", t + 1, value));
    }
    out
}

/// Smallest step at which `I_t >= threshold`, 0 when the run needed no
/// queries at all.
pub fn queries_to_reach<T: Scalar>(report: &Report<T>, threshold: T) -> Option<usize> {
    if report.steps.is_empty() {
        return (report.final_interpretability >= threshold).then_some(0);
    }
    report.steps.iter().find(|s| s.i_t >= threshold).map(|s| s.t)
}

pub fn summary<T: Scalar>(report: &Report<T>) -> String {
    let mut out = format!(
        "I = {:.3}, H_final = {:.3}\n",
        report.final_interpretability.as_f64(),
        report.final_entropy().total.as_f64()
    );
    out.push_str(&format!(
        "initial entropy h = {:.4} bits ({} of {} images disagree)\n",
        report.initial_entropy.total.as_f64(),
        report.initial_entropy.disagreement_counts.iter().sum::<u64>(),
        report.initial_entropy.space_size
    ));
    out.push_str(&format!(
        "queries = {}, termination = {}, objective J = {}\n",
        report.steps.len(),
        serde_json::to_string(&report.termination).expect("serializes").trim_matches('"'),
        report.objective_j
    ));
    if let Some(eps) = &report.epsilon {
        out.push_str(&format!("epsilon = {} (log2 = {})\n", eps.display, eps.log2_epsilon));
    }
    out
}
