use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{map_trials, run_trial, trial_rng, Check, ExperimentConfig, Outcome, Summary, TrialRecord};
use crate::error::{Error, Result};
use crate::flow::init_depth2;
use crate::geometry::thm3_intervals;

/// Stable-rank counts of one layer over converged trials. Values are
/// bucketed on `[lo, hi]` (stable rank lies between 1 and the smaller
/// dimension); the last bin is closed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub layer: usize,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn build(layer: usize, lo: f64, hi: f64, bins: usize, values: &[f64]) -> Self {
        let mut counts = vec![0; bins];
        let width = (hi - lo) / bins as f64;
        for &v in values {
            let b = if width > 0.0 { ((v - lo) / width).floor() } else { 0.0 };
            counts[(b.max(0.0) as usize).min(bins - 1)] += 1;
        }
        Self { layer, lo, hi, counts }
    }

    pub fn edges(&self, b: usize) -> (f64, f64) {
        let width = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + b as f64 * width, self.lo + (b + 1) as f64 * width)
    }
}

pub(crate) fn write_csv<W: Write>(hists: &[Histogram], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["layer", "bin_lo", "bin_hi", "count"])?;
    for h in hists {
        for (b, c) in h.counts.iter().enumerate() {
            let (lo, hi) = h.edges(b);
            w.write_record([h.layer.to_string(), lo.to_string(), hi.to_string(), c.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Depth-2 runs from a small spherical initialization. Converged trials
/// (final loss below the flow's `loss_tol`) must have a full-rank first
/// layer with stable rank above `1 + stable_rank_margin`.
pub fn run_histogram_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let d = cfg.dataset.build()?;
    let d_out = d
        .y()
        .ok_or_else(|| Error::InvalidArgument("histogram experiment needs regression targets".into()))?
        .rows();
    let hidden = cfg.init.hidden;
    let (w_r, v_r) = (cfg.init.w_radius, cfg.init.v_radius);
    let records: Vec<TrialRecord> = map_trials(cfg.trials, cfg.jobs, |i| {
        let (seed, mut rng) = trial_rng(cfg, i);
        let p0 = init_depth2(&mut rng, d.d_in(), hidden, d_out, w_r, v_r);
        run_trial(i, seed, p0, &d, &cfg.flow, None)
    })?;

    let converged: Vec<&TrialRecord> = records.iter().filter(|r| r.converged).collect();
    let mut histograms = Vec::new();
    for (l, (r, c)) in [(hidden, d.d_in()), (d_out, hidden)].into_iter().enumerate() {
        let values: Vec<f64> = converged
            .iter()
            .filter_map(|t| t.rank_report.as_ref().map(|rr| rr.layers[l].stable_rank))
            .collect();
        histograms.push(Histogram::build(l + 1, 1.0, r.min(c) as f64, cfg.bins, &values));
    }

    let mut summary = Summary::new(cfg, &records);
    let full = hidden.min(d.d_in());
    let threshold = 1.0 + cfg.stable_rank_margin;
    let mut failing = Vec::new();
    for t in &converged {
        let sr = t.first_layer_stable_rank.unwrap_or(0.0);
        if t.first_layer_rank != full || !(sr > threshold) {
            failing.push(t.trial_id);
        }
    }
    summary.push(Check::new(
        "converged_full_rank",
        failing.is_empty(),
        format!(
            "{} converged trials; each needs numerical rank {full} and stable rank > {threshold}; {} fail",
            converged.len(),
            failing.len()
        ),
    ));
    summary.failing_trials = failing;

    // The probability lower bound applies when the dataset satisfies the
    // two-point assumptions; otherwise the comparison is skipped.
    if let Ok(iv) = thm3_intervals(&d.input(0), &d.input(1), &[]) {
        summary.prob_lower_bound = Some(iv.prob_lower_bound);
        if !records.is_empty() {
            let floor = iv.prob_lower_bound - 3.0 * summary.converged_std_error;
            summary.push(Check::new(
                "converged_fraction_vs_bound",
                summary.converged_fraction >= floor,
                format!(
                    "fraction {:.4} vs bound {:.4} - 3 se {:.4} = {:.4}",
                    summary.converged_fraction, iv.prob_lower_bound, summary.converged_std_error, floor
                ),
            ));
        }
    }

    Ok(Outcome {
        config: cfg.clone(),
        records,
        histograms,
        sweep: Vec::new(),
        failures: Vec::new(),
        summary,
    })
}
