use std::path::PathBuf;

use clap::Subcommand;
use relu_rank::constructions::{
    classification_norm_sq_bound, deepen_classification, deepen_square, rank1_interpolator, square_norm_sq_bound,
};
use relu_rank::diagnostics::{format_rank_report, rank_report, thm4_bound, thm5_bound, RatioBounds};
use relu_rank::gradients::{loss, LossKind};
use relu_rank::linalg::singular_values;
use relu_rank::network::{forward, forward_batch};
use relu_rank::{Dataset, Mat, Params};

use crate::{write_json, CmdResult, Failure};

const OUTPUT_TOL: f64 = 1e-9;
const FIT_LOSS_TOL: f64 = 1e-10;

#[derive(Subcommand)]
pub enum Which {
    /// Zero-loss depth-2 interpolator of two inputs whose first layer has rank 1.
    Rank1 {
        #[arg(long, allow_hyphen_values = true)]
        x1: String,
        #[arg(long, allow_hyphen_values = true)]
        x2: String,
        /// `I` for the identity, otherwise target columns separated by `;`
        /// with comma-separated entries, e.g. `1,0;0,1`.
        #[arg(long = "Y", allow_hyphen_values = true, default_value = "I")]
        y: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deepen a scalar-output network for the square loss.
    DeepenSquare {
        #[command(flatten)]
        deepen: DeepenArgs,
    },
    /// Deepen a scalar-output network for margin classification.
    DeepenExp {
        #[command(flatten)]
        deepen: DeepenArgs,
    },
}

#[derive(clap::Args)]
pub struct DeepenArgs {
    /// Source network JSON.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "kprime")]
    k_prime: usize,
    /// Bound on every source layer's Frobenius norm.
    #[arg(long = "B")]
    b: f64,
    /// Dataset JSON whose inputs are used to check that outputs are preserved.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_vec(s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Failure::Usage(format!("bad number `{t}` in `{s}`: {e}")))
        })
        .collect()
}

fn parse_targets(s: &str) -> Result<Mat, Failure> {
    if s.trim() == "I" {
        return Ok(Mat::identity(2));
    }
    let cols = s.split(';').map(parse_vec).collect::<Result<Vec<_>, _>>()?;
    if cols.len() != 2 {
        return Err(Failure::Usage("need exactly two target columns".into()));
    }
    if cols[0].len() != cols[1].len() {
        return Err(Failure::Usage("target columns differ in length".into()));
    }
    Ok(Mat::from_cols(&[&cols[0], &cols[1]]))
}

fn rank1(x1: &str, x2: &str, y: &str, out: Option<PathBuf>) -> CmdResult {
    let (a, b) = (parse_vec(x1)?, parse_vec(x2)?);
    if a.len() != 2 || b.len() != 2 {
        return Err(Failure::Usage("inputs must be planar".into()));
    }
    let d = Dataset::regression(Mat::from_cols(&[&a, &b]), parse_targets(y)?)?;
    let p = rank1_interpolator(&d)?;
    let l = loss(&p, &d, LossKind::Square)?;
    let sv = singular_values(p.layer(0))?;
    println!("loss: {l:.3e}");
    println!("first-layer singular values: {sv:?}");
    if let Some(path) = &out {
        write_json(path, &p)?;
    }
    if !(l <= FIT_LOSS_TOL) {
        return Err(Failure::Check(format!("loss {l:e} above {FIT_LOSS_TOL:e}")));
    }
    Ok(())
}

fn print_bounds(b: &RatioBounds, mean: f64, harm: f64) {
    println!(
        "mean sigma/F {mean:.6} vs lower bound {:.6} ({}); harmonic F/sigma {harm:.6} vs upper bound {:.6} ({})",
        b.avg_lower,
        if mean >= b.avg_lower - 1e-12 { "met" } else { "not met" },
        b.harm_upper,
        if harm <= b.harm_upper + 1e-12 { "met" } else { "not met" },
    );
}

/// The vectors `+-e_i`; for the square-loss construction only those where
/// the source output is non-negative.
fn default_probes(src: &Params, non_negative_only: bool) -> Result<Mat, Failure> {
    let n = src.d_in();
    let mut cols = Vec::new();
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = sign;
            let keep = !non_negative_only || forward(src, &e)?.iter().all(|&v| v >= 0.0);
            if keep {
                cols.push(e);
            }
        }
    }
    if cols.is_empty() {
        return Err(Failure::Usage(
            "source output is negative on every basis probe; pass --data".into(),
        ));
    }
    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    Ok(Mat::from_cols(&refs))
}

fn deepen(args: DeepenArgs, classification: bool) -> CmdResult {
    let src: Params = serde_json::from_str(&std::fs::read_to_string(&args.input)?)?;
    let inputs = match &args.data {
        Some(path) => serde_json::from_str::<Dataset>(&std::fs::read_to_string(path)?)?.x().clone(),
        None => default_probes(&src, !classification)?,
    };
    let (k, kp, b) = (src.depth(), args.k_prime, args.b);
    if let Some(n) = src
        .layers()
        .iter()
        .map(|m| m.frobenius_sq().sqrt())
        .find(|&n| n > b * (1.0 + 1e-12))
    {
        return Err(Failure::Usage(format!("source layer norm {n} exceeds B = {b}")));
    }
    let (net, norm_bound, bounds) = if classification {
        (deepen_classification(&src, kp, b)?, classification_norm_sq_bound(b, k, kp), thm5_bound(b, k, kp)?)
    } else {
        (deepen_square(&src, kp, b, &inputs)?, square_norm_sq_bound(b, k, kp), thm4_bound(b, k, kp)?)
    };

    let before = forward_batch(&src, &inputs)?;
    let after = forward_batch(&net, &inputs)?;
    let scale = before.data().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let gap = after.max_abs_diff(&before);
    let norm_sq = net.norm_sq();
    println!("depth {k} -> {kp}, B = {b}");
    println!("output change on {} inputs: {gap:.3e}", inputs.cols());
    println!("||theta'||^2 = {norm_sq:.9} (bound {norm_bound:.9})");
    let rr = rank_report(&net)?;
    println!("{}", format_rank_report(&rr));
    print_bounds(&bounds, rr.mean_sigma_over_f, rr.harmonic_mean_f_over_sigma);
    if let Some(path) = &args.out {
        write_json(path, &net)?;
    }
    if gap > OUTPUT_TOL * scale {
        return Err(Failure::Check(format!("outputs changed by {gap:e}")));
    }
    if norm_sq > norm_bound * (1.0 + 1e-9) {
        return Err(Failure::Check(format!("norm {norm_sq} exceeds {norm_bound}")));
    }
    Ok(())
}

pub fn run(which: Which) -> CmdResult {
    match which {
        Which::Rank1 { x1, x2, y, out } => rank1(&x1, &x2, &y, out),
        Which::DeepenSquare { deepen: a } => deepen(a, false),
        Which::DeepenExp { deepen: a } => deepen(a, true),
    }
}
