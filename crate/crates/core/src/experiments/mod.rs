//! Reproducible Monte Carlo harnesses.
//!
//! Every experiment is driven by one [`ExperimentConfig`]. Trial `i` draws
//! its randomness from [`trial_seed`]`(master_seed, i)` and owns all of its
//! state, so records are identical whatever the number of worker threads.
//! Outputs are `trials.jsonl`, `summary.json` and an experiment-specific CSV.

mod config;
mod depth_sweep;
mod histogram;
mod parallel;
mod thm2;
mod thm3;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{
    dataset_section31, dataset_with_angle, desk_flow, trial_seed, DatasetSpec, DepthSweepConfig,
    ExperimentConfig, ExperimentKind, InitConfig, InitMode, SCHEMA_VERSION,
};
pub use depth_sweep::{run_depth_sweep, SweepRow};
pub use histogram::{run_histogram_experiment, Histogram};
pub use parallel::map_trials;
pub use thm2::{check_thm2_init, run_thm2_check};
pub use thm3::{run_thm3_experiment, sample_in_region};

use crate::diagnostics::{rank_report, RankReport};
use crate::error::Result;
use crate::flow::{run_flow, FlowConfig, StopReason};
use crate::geometry::{check_event_e, classify, RegionLabel, Thm3Intervals};
use crate::gradients::LossKind;
use crate::linalg::{norm, numerical_rank, stable_rank, DEFAULT_RANK_TOL};
use crate::network::{Dataset, Params};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSummary {
    pub first_layer_row_norms: Vec<f64>,
    pub second_layer_col_norms: Vec<f64>,
}

impl InitSummary {
    fn of(p: &Params) -> Self {
        let w = p.layer(0);
        let v = p.layer(1);
        Self {
            first_layer_row_norms: (0..w.rows()).map(|i| norm(w.row(i))).collect(),
            second_layer_col_norms: (0..v.cols()).map(|j| norm(&v.col(j))).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub seed: u64,
    pub init: InitSummary,
    pub converged: bool,
    pub final_loss: f64,
    pub steps: u64,
    pub stop_reason: StopReason,
    /// Absent when some layer ended exactly zero.
    pub rank_report: Option<RankReport>,
    pub first_layer_rank: usize,
    pub first_layer_stable_rank: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regions_initial: Option<Vec<RegionLabel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regions_final: Option<Vec<RegionLabel>>,
    /// Only set by the interval experiment; implies `converged`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_e: Option<bool>,
    pub params: Params,
    /// Kept out of `trials.jsonl` so that reruns are byte-identical.
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            pass,
            detail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub trials: usize,
    pub converged: usize,
    pub converged_fraction: f64,
    /// Binomial standard error of `converged_fraction`.
    pub converged_std_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prob_lower_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervals: Option<Thm3Intervals>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_frequency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_std_error: Option<f64>,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub failing_trials: Vec<usize>,
    pub diverged_trials: Vec<usize>,
    pub wall_time_secs: f64,
}

impl Summary {
    fn new(cfg: &ExperimentConfig, records: &[TrialRecord]) -> Self {
        let n = records.len();
        let converged = records.iter().filter(|r| r.converged).count();
        let frac = if n == 0 { 0.0 } else { converged as f64 / n as f64 };
        Self {
            experiment: cfg.experiment.name().to_string(),
            trials: n,
            converged,
            converged_fraction: frac,
            converged_std_error: binomial_std_error(frac, n),
            prob_lower_bound: None,
            intervals: None,
            event_frequency: None,
            event_std_error: None,
            checks: Vec::new(),
            pass: true,
            failing_trials: Vec::new(),
            diverged_trials: records
                .iter()
                .filter(|r| r.stop_reason == StopReason::Diverged)
                .map(|r| r.trial_id)
                .collect(),
            wall_time_secs: 0.0,
        }
    }

    fn push(&mut self, check: Check) {
        self.pass &= check.pass;
        self.checks.push(check);
    }
}

/// `sqrt(p (1 - p) / n)`, zero for an empty sample.
pub fn binomial_std_error(p: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (p * (1.0 - p) / n as f64).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub config: ExperimentConfig,
    pub records: Vec<TrialRecord>,
    pub histograms: Vec<Histogram>,
    pub sweep: Vec<SweepRow>,
    /// Converged rank-deficient trials from the full-rank check.
    pub failures: Vec<TrialRecord>,
    pub summary: Summary,
}

impl Outcome {
    /// Writes `trials.jsonl`, `summary.json` and the experiment's extra files.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_jsonl(&self.records, File::create(dir.join("trials.jsonl"))?)?;
        let mut s = BufWriter::new(File::create(dir.join("summary.json"))?);
        serde_json::to_writer_pretty(&mut s, &self.summary)?;
        writeln!(s)?;
        s.flush()?;
        match self.config.experiment {
            ExperimentKind::Histogram => {
                histogram::write_csv(&self.histograms, File::create(dir.join("histogram.csv"))?)?
            }
            ExperimentKind::DepthSweep => {
                depth_sweep::write_csv(&self.sweep, File::create(dir.join("depth_sweep.csv"))?)?
            }
            ExperimentKind::Thm2 => {
                write_jsonl(&self.failures, File::create(dir.join("thm2_failures.jsonl"))?)?
            }
            ExperimentKind::Thm3 => {}
        }
        Ok(())
    }
}

pub fn write_jsonl<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Runs the experiment named in the config and, if `output_dir` is set,
/// writes its outputs there.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let start = Instant::now();
    let mut outcome = match cfg.experiment {
        ExperimentKind::Histogram => run_histogram_experiment(cfg)?,
        ExperimentKind::Thm2 => run_thm2_check(cfg)?,
        ExperimentKind::Thm3 => run_thm3_experiment(cfg)?,
        ExperimentKind::DepthSweep => run_depth_sweep(cfg)?,
    };
    outcome.summary.wall_time_secs = start.elapsed().as_secs_f64();
    if let Some(dir) = &cfg.output_dir {
        outcome.write(dir)?;
    }
    Ok(outcome)
}

pub(crate) fn trial_rng(cfg: &ExperimentConfig, i: usize) -> (u64, ChaCha8Rng) {
    let seed = trial_seed(cfg.master_seed, i as u64);
    (seed, ChaCha8Rng::seed_from_u64(seed))
}

fn regions(p: &Params, d: &Dataset) -> Option<Vec<RegionLabel>> {
    if d.n() != 2 || d.d_in() != 2 {
        return None;
    }
    let (x1, x2) = (d.input(0), d.input(1));
    let w = p.layer(0);
    (0..w.rows()).map(|i| classify(w.row(i), &x1, &x2).ok()).collect()
}

/// Trains one network from `p0` and summarizes it. With `intervals` the
/// interval event is evaluated too.
pub(crate) fn run_trial(
    trial_id: usize,
    seed: u64,
    p0: Params,
    d: &Dataset,
    flow: &FlowConfig,
    intervals: Option<(&Thm3Intervals, f64)>,
) -> Result<TrialRecord> {
    let start = Instant::now();
    let cfg = FlowConfig { seed, ..flow.clone() };
    let r = run_flow(&p0, d, LossKind::Square, &cfg)?;
    let event_e = match intervals {
        Some((iv, slack)) => Some(check_event_e(&r, iv, slack)?.event),
        None => None,
    };
    let w = r.params.layer(0);
    Ok(TrialRecord {
        trial_id,
        seed,
        init: InitSummary::of(&p0),
        converged: r.converged,
        final_loss: r.final_loss,
        steps: r.steps_taken,
        stop_reason: r.stop_reason,
        rank_report: rank_report(&r.params).ok(),
        first_layer_rank: numerical_rank(w, DEFAULT_RANK_TOL)?,
        first_layer_stable_rank: stable_rank(w).ok(),
        regions_initial: regions(&p0, d),
        regions_final: regions(&r.params, d),
        event_e,
        params: r.params,
        wall_time: start.elapsed(),
    })
}
