use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{map_trials, run_trial, trial_rng, Check, ExperimentConfig, Outcome, Summary, TrialRecord};
use crate::constructions::{balance_layers, deepen_square, rank1_interpolator};
use crate::diagnostics::{rank_report, thm4_bound, RatioBounds};
use crate::error::{Error, Result};
use crate::flow::{init_gaussian_frobenius, FlowConfig, StopReason};
use crate::gradients::{loss, LossKind};
use crate::linalg::norm;
use crate::network::{Dataset, Params};

/// One line of `depth_sweep.csv`. `kind` is `construction` (deepened
/// interpolator), `trained` (one trained network) or `mean` (average of the
/// non-diverged trained networks for a depth and decay).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: String,
    pub depth: usize,
    pub weight_decay: Option<f64>,
    pub trial: Option<usize>,
    pub final_loss: f64,
    pub diverged: bool,
    pub theta_norm_sq: f64,
    pub mean_sigma_over_f: Option<f64>,
    pub harmonic_mean_f_over_sigma: Option<f64>,
    pub bound_avg_lower: Option<f64>,
    pub bound_harm_upper: Option<f64>,
}

pub(crate) fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn check_sweep_dataset(d: &Dataset) -> Result<()> {
    let y = d
        .y()
        .ok_or_else(|| Error::Assumption("depth sweep needs regression targets".into()))?;
    if y.rows() != 1 {
        return Err(Error::Assumption("depth sweep needs scalar targets".into()));
    }
    if y.data().iter().any(|&t| t < 1.0) {
        return Err(Error::Assumption("depth sweep needs every target >= 1".into()));
    }
    if (0..d.n()).any(|i| norm(&d.input(i)) > 1.0 + 1e-12) {
        return Err(Error::Assumption("depth sweep needs every input norm <= 1".into()));
    }
    Ok(())
}

const SOURCE_DEPTH: usize = 2;

/// Trains networks of each depth with `loss + lambda ||theta||^2` by
/// gradient descent and reports their norm ratios next to the square-loss
/// bounds, together with the deepened balanced interpolator that attains
/// them. Only the constructions are checked; trained networks are
/// measurements.
pub fn run_depth_sweep(cfg: &ExperimentConfig) -> Result<Outcome> {
    let d = cfg.dataset.build()?;
    check_sweep_dataset(&d)?;
    let sweep = &cfg.depth_sweep;
    let source = balance_layers(&rank1_interpolator(&d)?)?;
    let b = source
        .layers()
        .iter()
        .map(|m| m.frobenius_sq().sqrt())
        .fold(0.0, f64::max);

    let mut summary_checks = Vec::new();
    let mut rows = Vec::new();
    let bound_for = |depth: usize| -> Option<RatioBounds> {
        (depth > SOURCE_DEPTH).then(|| thm4_bound(b, SOURCE_DEPTH, depth).ok()).flatten()
    };
    for &depth in &sweep.depths {
        let Some(bound) = bound_for(depth) else { continue };
        let net = deepen_square(&source, depth, b, d.x())?;
        let rr = rank_report(&net)?;
        let ok = rr.mean_sigma_over_f >= bound.avg_lower - 1e-12
            && rr.harmonic_mean_f_over_sigma <= bound.harm_upper + 1e-12;
        summary_checks.push(Check::new(
            &format!("construction_depth_{depth}"),
            ok,
            format!(
                "mean ratio {:.6} >= {:.6}, harmonic {:.6} <= {:.6}",
                rr.mean_sigma_over_f, bound.avg_lower, rr.harmonic_mean_f_over_sigma, bound.harm_upper
            ),
        ));
        rows.push(SweepRow {
            kind: "construction".into(),
            depth,
            weight_decay: None,
            trial: None,
            final_loss: loss(&net, &d, LossKind::Square)?,
            diverged: false,
            theta_norm_sq: net.norm_sq(),
            mean_sigma_over_f: Some(rr.mean_sigma_over_f),
            harmonic_mean_f_over_sigma: Some(rr.harmonic_mean_f_over_sigma),
            bound_avg_lower: Some(bound.avg_lower),
            bound_harm_upper: Some(bound.harm_upper),
        });
    }

    let mut tasks = Vec::new();
    for &depth in &sweep.depths {
        for &lambda in &sweep.weight_decays {
            for t in 0..cfg.trials {
                tasks.push((depth, lambda, t));
            }
        }
    }
    let d_out = 1;
    let records: Vec<TrialRecord> = map_trials(tasks.len(), cfg.jobs, |i| {
        let (depth, lambda, _) = tasks[i];
        let (seed, mut rng) = trial_rng(cfg, i);
        let mut widths = vec![d.d_in()];
        widths.extend(std::iter::repeat_n(sweep.width, depth - 1));
        widths.push(d_out);
        let p0 = init_gaussian_frobenius(&mut rng, &widths, sweep.init_layer_norm)?;
        let flow = FlowConfig {
            weight_decay: lambda,
            ..cfg.flow.clone()
        };
        run_trial(i, seed, p0, &d, &flow, None)
    })?;

    for (group, chunk) in records.chunks(cfg.trials.max(1)).enumerate() {
        if cfg.trials == 0 {
            break;
        }
        let (depth, lambda, _) = tasks[group * cfg.trials];
        let bound = bound_for(depth);
        let mut kept: Vec<(f64, f64)> = Vec::new();
        for (t, r) in chunk.iter().enumerate() {
            let diverged = r.stop_reason == StopReason::Diverged;
            let ratios = r.rank_report.as_ref().map(|rr| (rr.mean_sigma_over_f, rr.harmonic_mean_f_over_sigma));
            if let (false, Some(v)) = (diverged, ratios) {
                kept.push(v);
            }
            rows.push(SweepRow {
                kind: "trained".into(),
                depth,
                weight_decay: Some(lambda),
                trial: Some(t),
                final_loss: r.final_loss,
                diverged,
                theta_norm_sq: r.params.norm_sq(),
                mean_sigma_over_f: ratios.map(|v| v.0),
                harmonic_mean_f_over_sigma: ratios.map(|v| v.1),
                bound_avg_lower: bound.map(|b| b.avg_lower),
                bound_harm_upper: bound.map(|b| b.harm_upper),
            });
        }
        let mean = |f: fn(&(f64, f64)) -> f64| {
            (!kept.is_empty()).then(|| kept.iter().map(f).sum::<f64>() / kept.len() as f64)
        };
        let group_params: Vec<&Params> = chunk.iter().map(|r| &r.params).collect();
        rows.push(SweepRow {
            kind: "mean".into(),
            depth,
            weight_decay: Some(lambda),
            trial: None,
            final_loss: chunk.iter().map(|r| r.final_loss).sum::<f64>() / chunk.len() as f64,
            diverged: chunk.iter().any(|r| r.stop_reason == StopReason::Diverged),
            theta_norm_sq: group_params.iter().map(|p| p.norm_sq()).sum::<f64>() / chunk.len() as f64,
            mean_sigma_over_f: mean(|v| v.0),
            harmonic_mean_f_over_sigma: mean(|v| v.1),
            bound_avg_lower: bound.map(|b| b.avg_lower),
            bound_harm_upper: bound.map(|b| b.harm_upper),
        });
    }

    let mut summary = Summary::new(cfg, &records);
    for c in summary_checks {
        summary.push(c);
    }
    Ok(Outcome {
        config: cfg.clone(),
        records,
        histograms: Vec::new(),
        sweep: rows,
        failures: Vec::new(),
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{dataset_section31, DatasetSpec, ExperimentKind};
    use crate::linalg::Mat;

    fn sweep_cfg() -> ExperimentConfig {
        let d = dataset_section31();
        let mut cfg = ExperimentConfig::new(ExperimentKind::DepthSweep);
        cfg.dataset = DatasetSpec::Explicit {
            x: d.x().clone(),
            y: Mat::from_rows(&[&[1.0, 2.0]]),
        };
        cfg.trials = 2;
        cfg.flow.step = 1e-2;
        cfg.flow.max_steps = 2_000;
        cfg.depth_sweep.depths = vec![2, 3, 4];
        cfg
    }

    #[test]
    fn constructions_meet_the_bounds() {
        let out = run_depth_sweep(&sweep_cfg()).unwrap();
        assert!(out.summary.pass, "{:?}", out.summary.checks);
        let cons: Vec<_> = out.sweep.iter().filter(|r| r.kind == "construction").collect();
        assert_eq!(cons.len(), 2);
        for r in cons {
            assert!(r.final_loss < 1e-18);
        }
    }

    #[test]
    fn row_counts() {
        let cfg = sweep_cfg();
        let out = run_depth_sweep(&cfg).unwrap();
        let trained = out.sweep.iter().filter(|r| r.kind == "trained").count();
        let means = out.sweep.iter().filter(|r| r.kind == "mean").count();
        assert_eq!(trained, 3 * 2 * 2);
        assert_eq!(means, 3 * 2);
        assert_eq!(out.records.len(), trained);
        let mut buf = Vec::new();
        write_csv(&out.sweep, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), out.sweep.len() + 1);
        assert!(text.starts_with("kind,depth,weight_decay,trial,"));
    }

    #[test]
    fn targets_below_one_are_rejected() {
        let mut cfg = sweep_cfg();
        cfg.dataset = DatasetSpec::Section31;
        assert!(matches!(run_depth_sweep(&cfg), Err(Error::Assumption(_))));
    }
}
