use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::{ExperimentResult, StrategyResult};
use super::Strategy;
use crate::error::{Error, Result};
use crate::search::Loss;
use crate::session::InitialSolution;

pub const CSV_HEADER: &str = "frames,mean_sum_iod,ln_sum_iod,mean_abs_rms,ln_abs_rms,std_abs_rms";

/// Frame counts at or below this may tie in the baseline comparison.
const BASELINE_WARMUP_FRAMES: usize = 5;

impl StrategyResult {
    pub fn to_csv(&self) -> String {
        let a = &self.aggregate;
        let (ln_iod, ln_rms) = (a.ln_sum_iod(), a.ln_abs_rms());
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for i in 0..a.frames.len() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                a.frames[i], a.mean_sum_iod[i], ln_iod[i], a.mean_abs_rms[i], ln_rms[i], a.std_abs_rms[i]
            )
            .expect("write to string");
        }
        out
    }
}

/// One ordering check between two strategies at the final frame count
/// (`lower` is expected to be lower than `higher`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub name: String,
    pub metric: String,
    pub lower: Strategy,
    pub higher: Strategy,
    pub lower_value: f64,
    pub higher_value: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalValues {
    pub strategy: Strategy,
    pub frames: usize,
    pub mean_sum_iod: f64,
    pub mean_abs_rms: f64,
    pub std_abs_rms: f64,
    pub converged_runs: usize,
    pub adjusted_targets: usize,
    pub failed_captures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub repetitions: usize,
    pub seed: u64,
    pub finals: Vec<FinalValues>,
    pub comparisons: Vec<Comparison>,
    /// Fraction of frame counts where generated initial solutions give a
    /// smaller spread of AbsRmsErr than random ones.
    pub generated_init_lower_std_fraction: Option<f64>,
    /// Whether the searched poses match or beat the generated-only baseline
    /// in mean AbsRmsErr at every frame count past the warm-up.
    pub search_beats_baseline_after_warmup: Option<bool>,
}

impl Summary {
    pub fn from_result(result: &ExperimentResult) -> Self {
        let search = Strategy::search(Loss::SumIod);
        let search_random_init = Strategy::Search {
            loss: Loss::SumIod,
            init: InitialSolution::Random,
        };
        let finals = result
            .strategies
            .iter()
            .map(|s| {
                let (iod, rms, std) = s.aggregate.last().unwrap_or((f64::NAN, f64::NAN, f64::NAN));
                FinalValues {
                    strategy: s.strategy,
                    frames: s.aggregate.frames.len(),
                    mean_sum_iod: iod,
                    mean_abs_rms: rms,
                    std_abs_rms: std,
                    converged_runs: s
                        .runs
                        .iter()
                        .filter(|r| r.stop_reason == Some(crate::session::StopReason::Converged))
                        .count(),
                    adjusted_targets: s.runs.iter().map(|r| r.adjusted_targets).sum(),
                    failed_captures: s.runs.iter().map(|r| r.failed_captures).sum(),
                }
            })
            .collect();
        let mut comparisons = Vec::new();
        let pairs = [
            ("search_vs_random", search, Strategy::Random),
            ("sum_iod_vs_rms_err_loss", search, Strategy::search(Loss::RmsErr)),
            ("generated_vs_random_init", search, search_random_init),
            ("search_vs_generated_only", search, Strategy::GeneratedOnly),
        ];
        for (name, lower, higher) in pairs {
            let (Some(a), Some(b)) = (result.get(lower), result.get(higher)) else {
                continue;
            };
            let (Some(fa), Some(fb)) = (a.aggregate.last(), b.aggregate.last()) else {
                continue;
            };
            for (metric, x, y) in [("sum_iod", fa.0, fb.0), ("abs_rms", fa.1, fb.1)] {
                comparisons.push(Comparison {
                    name: name.to_string(),
                    metric: metric.to_string(),
                    lower,
                    higher,
                    lower_value: x,
                    higher_value: y,
                    holds: x < y,
                });
            }
        }
        let generated_init_lower_std_fraction = match (result.get(search), result.get(search_random_init)) {
            (Some(a), Some(b)) => {
                let n = a.aggregate.frames.len().min(b.aggregate.frames.len());
                (n > 0).then(|| {
                    let wins = (0..n)
                        .filter(|&i| a.aggregate.std_abs_rms[i] <= b.aggregate.std_abs_rms[i])
                        .count();
                    wins as f64 / n as f64
                })
            }
            _ => None,
        };
        let search_beats_baseline_after_warmup = match (result.get(search), result.get(Strategy::GeneratedOnly)) {
            (Some(a), Some(b)) => Some(search_at_most_baseline(&a.aggregate.mean_abs_rms, &b.aggregate.mean_abs_rms)),
            _ => None,
        };
        Self {
            repetitions: result.config.repetitions,
            seed: result.config.seed,
            finals,
            comparisons,
            generated_init_lower_std_fraction,
            search_beats_baseline_after_warmup,
        }
    }
}

/// `search[i] <= baseline[i]` for every frame count above the warm-up.
pub(crate) fn search_at_most_baseline(search: &[f64], baseline: &[f64]) -> bool {
    search
        .iter()
        .zip(baseline)
        .enumerate()
        .filter(|(i, _)| i + 1 > BASELINE_WARMUP_FRAMES)
        .all(|(_, (s, b))| s <= b)
}

/// Writes `<strategy>.csv` per strategy and `summary.json` into `dir`,
/// creating it if needed.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    let io = |e: std::io::Error| Error::InvalidInput(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    for s in &result.strategies {
        fs::write(dir.join(format!("{}.csv", s.strategy)), s.to_csv()).map_err(io)?;
    }
    let summary = serde_json::to_string_pretty(&Summary::from_result(result)).expect("summary serializes");
    fs::write(dir.join("summary.json"), summary + "\n").map_err(io)?;
    Ok(())
}
