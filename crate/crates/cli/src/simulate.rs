use std::path::PathBuf;

use clap::ValueEnum;
use relu_rank::diagnostics::{format_rank_report, rank_report};
use relu_rank::experiments::dataset_section31;
use relu_rank::flow::{init_spherical, run_flow, FlowConfig, Integrator, StopReason};
use relu_rank::gradients::LossKind;
use relu_rank::{Dataset, Params};

use crate::{write_json, CmdResult, Failure};

#[derive(Clone, Copy, ValueEnum)]
pub enum IntegratorArg {
    Euler,
    Rk4,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum LossArg {
    Square,
    Exponential,
    Logistic,
}

#[derive(clap::Args)]
pub struct Args {
    /// `section31` or a dataset JSON file (`{"x": .., "y": ..}` or `{"x": .., "labels": ..}`).
    #[arg(long, default_value = "section31")]
    dataset: String,
    /// Flow settings as JSON; the flags below override it.
    #[arg(long)]
    flow_config: Option<PathBuf>,
    /// Start from these parameters instead of a random initialization.
    #[arg(long = "init")]
    init: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long, value_enum)]
    integrator: Option<IntegratorArg>,
    #[arg(long, value_enum, default_value = "square")]
    loss: LossArg,
    /// Radius of the random initialization.
    #[arg(long, default_value_t = 1e-4)]
    init_radius: f64,
    #[arg(long, default_value_t = 2)]
    hidden: usize,
    /// Where to write the flow result as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_dataset(spec: &str) -> Result<Dataset, Failure> {
    if spec == "section31" {
        return Ok(dataset_section31());
    }
    let text = std::fs::read_to_string(spec)
        .map_err(|e| Failure::Usage(format!("cannot read dataset {spec}: {e}")))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn run(args: Args) -> CmdResult {
    let d = load_dataset(&args.dataset)?;
    let mut cfg = match &args.flow_config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => FlowConfig::default(),
    };
    cfg.seed = args.seed;
    if let Some(s) = args.steps {
        cfg.max_steps = s;
    }
    if let Some(h) = args.step_size {
        cfg.step = h;
    }
    if let Some(i) = args.integrator {
        cfg.integrator = match i {
            IntegratorArg::Euler => Integrator::Euler,
            IntegratorArg::Rk4 => Integrator::Rk4,
        };
    }
    let kind = match args.loss {
        LossArg::Square => LossKind::Square,
        LossArg::Exponential => LossKind::Exponential,
        LossArg::Logistic => LossKind::Logistic,
    };
    let p0: Params = match &args.init {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => {
            let d_out = d.y().map_or(1, |y| y.rows());
            init_spherical(&[d.d_in(), args.hidden, d_out], args.init_radius, args.seed)?
        }
    };

    let r = run_flow(&p0, &d, kind, &cfg)?;
    if let Some(path) = &args.out {
        write_json(path, &r)?;
    }
    println!(
        "stop: {:?}  steps: {}  final loss: {:.6e}  converged: {}",
        r.stop_reason, r.steps_taken, r.final_loss, r.converged
    );
    if cfg.integrator == Integrator::Rk4 {
        println!("balance drift: {:?}", r.balance_drift);
    }
    match rank_report(&r.params) {
        Ok(rr) => println!("{}", format_rank_report(&rr)),
        Err(e) => println!("rank report unavailable: {e}"),
    }
    if r.stop_reason == StopReason::Diverged {
        return Err(Failure::Diverged(format!("after {} steps", r.steps_taken)));
    }
    Ok(())
}
