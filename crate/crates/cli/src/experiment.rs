use std::path::PathBuf;

use clap::ValueEnum;
use relu_rank::experiments::{run_experiment, ExperimentConfig, ExperimentKind};

use crate::{CmdResult, Failure};

#[derive(Clone, Copy, ValueEnum)]
pub enum Name {
    Histogram,
    Thm2,
    Thm3,
    DepthSweep,
}

#[derive(clap::Args)]
pub struct Args {
    #[arg(value_enum)]
    name: Name,
    /// Experiment config (JSON). Defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// 288 trials, step 1e-4, 3e6 steps.
    #[arg(long)]
    paper_scale: bool,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, env = "RELU_RANK_LAB_JOBS")]
    jobs: Option<usize>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: Args) -> CmdResult {
    let kind = match args.name {
        Name::Histogram => ExperimentKind::Histogram,
        Name::Thm2 => ExperimentKind::Thm2,
        Name::Thm3 => ExperimentKind::Thm3,
        Name::DepthSweep => ExperimentKind::DepthSweep,
    };
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_json_file(path)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
        None => ExperimentConfig::new(kind),
    };
    if cfg.experiment != kind {
        return Err(Failure::Usage(format!(
            "config is for `{}`, not `{}`",
            cfg.experiment.name(),
            kind.name()
        )));
    }
    if args.paper_scale {
        cfg = cfg.paper_scale();
    }
    if args.jobs.is_some() {
        cfg.jobs = args.jobs;
    }
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    if args.out.is_some() {
        cfg.output_dir = args.out;
    }
    cfg.validate()?;

    let outcome = run_experiment(&cfg)?;
    let s = &outcome.summary;
    println!("experiment: {}", s.experiment);
    println!("trials: {}  converged: {} ({:.4} +- {:.4})", s.trials, s.converged, s.converged_fraction, s.converged_std_error);
    if let Some(b) = s.prob_lower_bound {
        println!("probability lower bound: {b:.4}");
    }
    if let (Some(f), Some(se)) = (s.event_frequency, s.event_std_error) {
        println!("interval event frequency: {f:.4} +- {se:.4}");
    }
    if !s.diverged_trials.is_empty() {
        println!("diverged trials: {:?}", s.diverged_trials);
    }
    for c in &s.checks {
        println!("[{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if let Some(dir) = &cfg.output_dir {
        println!("outputs written to {}", dir.display());
    }
    if s.pass {
        Ok(())
    } else {
        Err(Failure::Check(format!("failing trials: {:?}", s.failing_trials)))
    }
}
