use super::{map_trials, run_trial, trial_rng, Check, ExperimentConfig, Outcome, Summary, TrialRecord};
use crate::error::{Error, Result};
use crate::flow::init_depth2;
use crate::geometry::{check_dataset, thm2_init_bound};
use crate::linalg::norm;
use crate::network::{Dataset, Params};

/// Every first-layer row of a depth-2 width-2 initialization must be
/// shorter than the full-rank bound for the dataset.
pub fn check_thm2_init(p: &Params, d: &Dataset) -> Result<()> {
    check_dataset(d)?;
    if p.depth() != 2 || p.layer(0).shape() != (2, 2) {
        return Err(Error::Assumption("need a depth-2 width-2 network".into()));
    }
    let bound = thm2_init_bound(&d.input(0), &d.input(1))?;
    for i in 0..2 {
        let r = norm(p.layer(0).row(i));
        if !(r < bound) {
            return Err(Error::Assumption(format!(
                "first-layer row {} has norm {r}, not below {bound}",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Small-initialization runs on a two-point planar dataset. Any converged
/// trial whose first layer has numerical rank 1 is a failure and is kept in
/// `Outcome::failures`.
pub fn run_thm2_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    let d = cfg.dataset.build()?;
    check_dataset(&d)?;
    if cfg.init.hidden != 2 {
        return Err(Error::Assumption("the full-rank check needs hidden width 2".into()));
    }
    let bound = thm2_init_bound(&d.input(0), &d.input(1))?;
    if !(cfg.init.w_radius < bound) {
        return Err(Error::Assumption(format!(
            "init radius {} is not below {bound}",
            cfg.init.w_radius
        )));
    }
    let records: Vec<TrialRecord> = map_trials(cfg.trials, cfg.jobs, |i| {
        let (seed, mut rng) = trial_rng(cfg, i);
        let p0 = init_depth2(&mut rng, 2, 2, 2, cfg.init.w_radius, cfg.init.v_radius);
        check_thm2_init(&p0, &d)?;
        run_trial(i, seed, p0, &d, &cfg.flow, None)
    })?;

    let failures: Vec<TrialRecord> = records
        .iter()
        .filter(|r| r.converged && r.first_layer_rank != 2)
        .cloned()
        .collect();
    let mut summary = Summary::new(cfg, &records);
    summary.push(Check::new(
        "converged_rank_two",
        failures.is_empty(),
        format!(
            "{} converged trials, {} with a rank-1 first layer",
            summary.converged,
            failures.len()
        ),
    ));
    summary.failing_trials = failures.iter().map(|r| r.trial_id).collect();
    Ok(Outcome {
        config: cfg.clone(),
        records,
        histograms: Vec::new(),
        sweep: Vec::new(),
        failures,
        summary,
    })
}
