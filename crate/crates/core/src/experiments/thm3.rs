use rand::Rng;

use super::{
    binomial_std_error, map_trials, run_trial, trial_rng, Check, ExperimentConfig, InitMode, Outcome, Summary,
    TrialRecord,
};
use crate::error::{Error, Result};
use crate::flow::sphere_sample;
use crate::geometry::{check_dataset, classify, in_interior, thm3_intervals, RegionLabel};
use crate::linalg::Mat;
use crate::network::Params;

/// Uniform point on the circle of the given radius conditioned on lying in
/// the interior of region `label`.
pub fn sample_in_region<R: Rng + ?Sized>(
    rng: &mut R,
    radius: f64,
    label: RegionLabel,
    x1: &[f64],
    x2: &[f64],
) -> Result<Vec<f64>> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument("region sampling needs a positive radius".into()));
    }
    classify(&[1.0, 0.0], x1, x2)?;
    for _ in 0..100_000 {
        let w = sphere_sample(rng, 2, radius);
        if classify(&w, x1, x2)? == label && in_interior(&w, x1, x2) {
            return Ok(w);
        }
    }
    Err(Error::InvalidArgument(format!("region {label:?} is empty for these inputs")))
}

/// Depth-2 width-2 runs with a zero output layer and first-layer rows of
/// norm `init.w_radius`. Spherical mode compares the frequency of the
/// interval event with its lower bound; stratified mode starts row `i` in
/// the region where only input `i` is active and expects the event in every
/// trial.
pub fn run_thm3_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let d = cfg.dataset.build()?;
    check_dataset(&d)?;
    if cfg.init.hidden != 2 {
        return Err(Error::Assumption("the interval experiment needs hidden width 2".into()));
    }
    let (x1, x2) = (d.input(0), d.input(1));
    let r = cfg.init.w_radius;
    let intervals = thm3_intervals(&x1, &x2, &[r])?;
    if !(r > 0.0) {
        return Err(Error::Assumption("first-layer rows must be nonzero".into()));
    }

    let records: Vec<TrialRecord> = map_trials(cfg.trials, cfg.jobs, |i| {
        let (seed, mut rng) = trial_rng(cfg, i);
        let mut w = Mat::zeros(2, 2);
        for (row, label) in [RegionLabel::S1, RegionLabel::S2].into_iter().enumerate() {
            let v = match cfg.init.mode {
                InitMode::Spherical => sphere_sample(&mut rng, 2, r),
                InitMode::Stratified => sample_in_region(&mut rng, r, label, &x1, &x2)?,
            };
            w.row_mut(row).copy_from_slice(&v);
        }
        let p0 = Params::new(vec![w, Mat::zeros(2, 2)])?;
        run_trial(i, seed, p0, &d, &cfg.flow, Some((&intervals, cfg.slack)))
    })?;

    let n = records.len();
    let events = records.iter().filter(|t| t.event_e == Some(true)).count();
    let freq = if n == 0 { 0.0 } else { events as f64 / n as f64 };
    let se = binomial_std_error(freq, n);
    let mut summary = Summary::new(cfg, &records);
    summary.prob_lower_bound = Some(intervals.prob_lower_bound);
    summary.intervals = Some(intervals);
    summary.event_frequency = Some(freq);
    summary.event_std_error = Some(se);
    match cfg.init.mode {
        InitMode::Spherical => {
            let floor = intervals.prob_lower_bound - 3.0 * se;
            summary.push(Check::new(
                "event_frequency_vs_bound",
                n == 0 || freq >= floor,
                format!(
                    "{events}/{n} = {freq:.4} vs bound {:.4} - 3 se {se:.4} = {floor:.4}",
                    intervals.prob_lower_bound
                ),
            ));
        }
        InitMode::Stratified => {
            summary.failing_trials = records
                .iter()
                .filter(|t| t.event_e != Some(true))
                .map(|t| t.trial_id)
                .collect();
            summary.push(Check::new(
                "stratified_all_events",
                summary.failing_trials.is_empty(),
                format!("{events}/{n} trials converged inside the intervals"),
            ));
        }
    }
    Ok(Outcome {
        config: cfg.clone(),
        records,
        histograms: Vec::new(),
        sweep: Vec::new(),
        failures: Vec::new(),
        summary,
    })
}
