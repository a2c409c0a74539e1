//! Per-layer rank/norm reports and the deep-network norm-ratio bounds.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::constructions::{classification_norm_sq_bound, square_norm_sq_bound};
use crate::error::{Error, Result};
use crate::gradients::margin;
use crate::linalg::{frobenius_norm, spectral_norm};
use crate::network::{forward_batch, Dataset, Params};

/// Layers whose Frobenius norms agree to this are reported as balanced.
pub const BALANCE_TOL: f64 = 1e-6;

/// Feasibility slack for [`check_min_norm_witness`].
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub frobenius: f64,
    pub spectral: f64,
    pub stable_rank: f64,
    pub sigma_over_f: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub layers: Vec<LayerStats>,
    pub mean_sigma_over_f: f64,
    pub harmonic_mean_f_over_sigma: f64,
    /// Common Frobenius norm when all layers agree within [`BALANCE_TOL`].
    pub b_star: Option<f64>,
}

pub fn rank_report(p: &Params) -> Result<RankReport> {
    let mut layers = Vec::with_capacity(p.depth());
    for (l, m) in p.layers().iter().enumerate() {
        let frobenius = frobenius_norm(m)?;
        if frobenius == 0.0 {
            return Err(Error::InvalidArgument(format!("layer {} is zero", l + 1)));
        }
        let spectral = spectral_norm(m)?;
        let ratio = (spectral / frobenius).min(1.0);
        layers.push(LayerStats {
            frobenius,
            spectral,
            stable_rank: 1.0 / (ratio * ratio),
            sigma_over_f: ratio,
        });
    }
    let k = layers.len() as f64;
    let sum: f64 = layers.iter().map(|s| s.sigma_over_f).sum();
    let (lo, hi) = layers.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), s| {
        (lo.min(s.frobenius), hi.max(s.frobenius))
    });
    let b_star = (hi - lo <= BALANCE_TOL).then(|| layers.iter().map(|s| s.frobenius).sum::<f64>() / k);
    Ok(RankReport {
        mean_sigma_over_f: sum / k,
        harmonic_mean_f_over_sigma: k / sum,
        b_star,
        layers,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioBounds {
    /// Lower bound on the mean of `||W||_2 / ||W||_F`.
    pub avg_lower: f64,
    /// Upper bound on the harmonic mean of `||W||_F / ||W||_2`.
    pub harm_upper: f64,
}

fn check_depths(b: f64, k: usize, k_prime: usize) -> Result<()> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::InvalidArgument(format!("B = {b} must be positive")));
    }
    if k < 2 || k_prime <= k {
        return Err(Error::InvalidArgument(format!(
            "need k' > k >= 2, got k = {k}, k' = {k_prime}"
        )));
    }
    Ok(())
}

/// Square-loss bounds `((1/B)^{k/k'}, B^{k/k'})`.
pub fn thm4_bound(b: f64, k: usize, k_prime: usize) -> Result<RatioBounds> {
    check_depths(b, k, k_prime)?;
    let e = k as f64 / k_prime as f64;
    Ok(RatioBounds {
        avg_lower: (1.0 / b).powf(e),
        harm_upper: b.powf(e),
    })
}

/// Margin-problem bounds
/// `(1/sqrt2 (sqrt2/B)^{k/k'} sqrt(k'/(k'+1)), sqrt2 (B/sqrt2)^{k/k'} sqrt((k'+1)/k'))`.
pub fn thm5_bound(b: f64, k: usize, k_prime: usize) -> Result<RatioBounds> {
    check_depths(b, k, k_prime)?;
    let e = k as f64 / k_prime as f64;
    let kp = k_prime as f64;
    let r2 = 2f64.sqrt();
    Ok(RatioBounds {
        avg_lower: (r2 / b).powf(e) * (kp / (kp + 1.0)).sqrt() / r2,
        harm_upper: r2 * (b / r2).powf(e) * ((kp + 1.0) / kp).sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WitnessMode {
    Square,
    Margin,
}

/// A shallow reference network: depth `k` with all layer norms at most `B`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub b: f64,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub mode: WitnessMode,
    /// Max interpolation error (square) or `1 - margin` (margin).
    pub feasibility_residual: f64,
    pub theta_norm_sq: f64,
    /// `max_{i,j} | ||W_i||_F - ||W_j||_F |`.
    pub balancedness_residual: f64,
    pub rank: RankReport,
    pub bounds: Option<RatioBounds>,
    /// Norm of the deepened reference construction, when a reference is given.
    pub construction_norm_sq: Option<f64>,
    /// Balanced and no heavier than the construction; only then do the
    /// bounds follow for this candidate.
    pub certified: Option<bool>,
    pub avg_bound_met: Option<bool>,
    pub harm_bound_met: Option<bool>,
}

/// Measures how a feasible candidate compares with the ratio bounds. Never
/// asserts anything about uncertified candidates.
pub fn check_min_norm_witness(
    candidate: &Params,
    d: &Dataset,
    mode: WitnessMode,
    reference: Option<Reference>,
) -> Result<WitnessReport> {
    let feasibility_residual = match mode {
        WitnessMode::Square => {
            let y = d
                .y()
                .ok_or_else(|| Error::InvalidArgument("square mode needs regression targets".into()))?;
            forward_batch(candidate, d.x())?.max_abs_diff(y)
        }
        WitnessMode::Margin => 1.0 - margin(candidate, d)?,
    };
    if !(feasibility_residual <= FEASIBILITY_TOL) {
        return Err(Error::Infeasible(format!(
            "feasibility residual {feasibility_residual:e} exceeds {FEASIBILITY_TOL:e}"
        )));
    }
    let rank = rank_report(candidate)?;
    let (lo, hi) = rank.layers.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), s| {
        (lo.min(s.frobenius), hi.max(s.frobenius))
    });
    let theta_norm_sq = candidate.norm_sq();
    let k_prime = candidate.depth();

    let mut report = WitnessReport {
        mode,
        feasibility_residual,
        theta_norm_sq,
        balancedness_residual: hi - lo,
        rank,
        bounds: None,
        construction_norm_sq: None,
        certified: None,
        avg_bound_met: None,
        harm_bound_met: None,
    };
    if let Some(Reference { b, k }) = reference {
        if k < k_prime {
            let (bounds, norm_bound) = match mode {
                WitnessMode::Square => (thm4_bound(b, k, k_prime)?, square_norm_sq_bound(b, k, k_prime)),
                WitnessMode::Margin => (
                    thm5_bound(b, k, k_prime)?,
                    classification_norm_sq_bound(b, k, k_prime),
                ),
            };
            report.certified = Some(
                report.balancedness_residual <= BALANCE_TOL
                    && theta_norm_sq <= norm_bound * (1.0 + 1e-12),
            );
            report.avg_bound_met = Some(report.rank.mean_sigma_over_f >= bounds.avg_lower * (1.0 - 1e-12));
            report.harm_bound_met =
                Some(report.rank.harmonic_mean_f_over_sigma <= bounds.harm_upper * (1.0 + 1e-12));
            report.bounds = Some(bounds);
            report.construction_norm_sq = Some(norm_bound);
        }
    }
    Ok(report)
}

#[derive(Serialize)]
struct ReportRow {
    layer: String,
    frobenius: Option<f64>,
    spectral: Option<f64>,
    stable_rank: Option<f64>,
    sigma_over_f: Option<f64>,
    mean_sigma_over_f: Option<f64>,
    harmonic_mean_f_over_sigma: Option<f64>,
    b_star: Option<f64>,
}

/// One CSV row per layer plus an `aggregate` row.
pub fn write_rank_report_csv<W: Write>(report: &RankReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (l, s) in report.layers.iter().enumerate() {
        w.serialize(ReportRow {
            layer: (l + 1).to_string(),
            frobenius: Some(s.frobenius),
            spectral: Some(s.spectral),
            stable_rank: Some(s.stable_rank),
            sigma_over_f: Some(s.sigma_over_f),
            mean_sigma_over_f: None,
            harmonic_mean_f_over_sigma: None,
            b_star: None,
        })?;
    }
    w.serialize(ReportRow {
        layer: "aggregate".into(),
        frobenius: None,
        spectral: None,
        stable_rank: None,
        sigma_over_f: None,
        mean_sigma_over_f: Some(report.mean_sigma_over_f),
        harmonic_mean_f_over_sigma: Some(report.harmonic_mean_f_over_sigma),
        b_star: report.b_star,
    })?;
    w.flush()?;
    Ok(())
}

/// Plain-text table for terminals.
pub fn format_rank_report(report: &RankReport) -> String {
    let mut s = format!(
        "{:>6} {:>12} {:>12} {:>12} {:>10}\n",
        "layer", "frobenius", "spectral", "stable_rank", "sigma/F"
    );
    for (l, r) in report.layers.iter().enumerate() {
        s.push_str(&format!(
            "{:>6} {:>12.6} {:>12.6} {:>12.6} {:>10.6}\n",
            l + 1,
            r.frobenius,
            r.spectral,
            r.stable_rank,
            r.sigma_over_f
        ));
    }
    s.push_str(&format!(
        "mean sigma/F = {:.6}, harmonic mean F/sigma = {:.6}",
        report.mean_sigma_over_f, report.harmonic_mean_f_over_sigma
    ));
    if let Some(b) = report.b_star {
        s.push_str(&format!(", balanced at B* = {b:.6}"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{deepen_classification, deepen_square};
    use crate::linalg::Mat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rank_one_layers() {
        let p = Params::new(vec![
            Mat::from_rows(&[&[1.0, 1.0], &[2.0, 2.0]]),
            Mat::from_rows(&[&[3.0, -1.0]]),
        ])
        .unwrap();
        let r = rank_report(&p).unwrap();
        assert!((r.mean_sigma_over_f - 1.0).abs() < 1e-14);
        assert!((r.harmonic_mean_f_over_sigma - 1.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_and_identity() {
        let p = Params::new(vec![Mat::from_rows(&[&[3.0, 0.0], &[0.0, 4.0]]), Mat::identity(2)]).unwrap();
        let r = rank_report(&p).unwrap();
        assert!((r.layers[0].sigma_over_f - 0.8).abs() < 1e-14);
        assert!((r.layers[1].sigma_over_f - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((r.mean_sigma_over_f - 0.75355).abs() < 1e-5);
        assert!((r.layers[0].stable_rank - 1.5625).abs() < 1e-12);
        assert!(r.b_star.is_none());
        assert!((r.mean_sigma_over_f * r.harmonic_mean_f_over_sigma - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_layer_is_an_error() {
        let p = Params::new(vec![Mat::zeros(2, 2), Mat::identity(2)]).unwrap();
        assert!(rank_report(&p).is_err());
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn bound_examples() {
        let b4 = thm4_bound(2.0, 2, 4).unwrap();
        assert!((b4.avg_lower - 0.70711).abs() < 1e-5 && (b4.harm_upper - 1.41421).abs() < 1e-5);
        let one = thm4_bound(1.0, 3, 7).unwrap();
        assert_eq!((one.avg_lower, one.harm_upper), (1.0, 1.0));
        let far = thm4_bound(2.0, 2, 1_000_000).unwrap();
        assert!((far.avg_lower - 1.0).abs() < 1e-5);

        let b5 = thm5_bound(2.0, 2, 4).unwrap();
        assert!((b5.avg_lower - 0.53183).abs() < 1e-5);
        let far = thm5_bound(2.0, 2, 10_000_000).unwrap();
        assert!((far.avg_lower - 0.5f64.sqrt()).abs() < 1e-6);
        let kp = 5.0f64;
        let base = thm5_bound(2f64.sqrt(), 2, 5).unwrap();
        assert!((base.avg_lower - (kp / (kp + 1.0)).sqrt() / 2f64.sqrt()).abs() < 1e-14);

        assert!(thm4_bound(2.0, 4, 4).is_err());
        assert!(thm5_bound(0.0, 2, 4).is_err());
    }

    #[test]
    fn bound_products_are_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..50 {
            let b = rng.random_range(0.1..10.0);
            let k = rng.random_range(2..6);
            let kp = rng.random_range(k + 1..20);
            let t4 = thm4_bound(b, k, kp).unwrap();
            let t5 = thm5_bound(b, k, kp).unwrap();
            assert!((t4.avg_lower * t4.harm_upper - 1.0).abs() < 1e-12);
            assert!((t5.avg_lower * t5.harm_upper - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_ratio_at_most_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        for _ in 0..100 {
            let layers = [3usize, 4, 2, 1]
                .windows(2)
                .map(|w| Mat::new(w[1], w[0], (0..w[0] * w[1]).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
                .collect();
            let r = rank_report(&Params::new(layers).unwrap()).unwrap();
            assert!(r.mean_sigma_over_f <= 1.0);
            for s in &r.layers {
                assert!(s.sigma_over_f > 0.0 && s.sigma_over_f <= 1.0);
                assert!((s.stable_rank * s.sigma_over_f.powi(2) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn balanced_net_exposes_b_star() {
        let p = Params::new(vec![Mat::identity(2).scaled(1.5), Mat::from_rows(&[&[1.5, 1.5]])]).unwrap();
        let r = rank_report(&p).unwrap();
        let expected = 1.5 * 2f64.sqrt();
        assert!((r.b_star.unwrap() - expected).abs() < 1e-6);
    }

    fn square_dataset() -> Dataset {
        let x = Mat::from_cols(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let y = Mat::from_rows(&[&[1.0, 2.0]]);
        Dataset::regression(x, y).unwrap()
    }

    #[test]
    fn construction_witness_satisfies_its_bound() {
        // Depth-2 interpolator with both layer norms equal to B = 2.
        let d = square_dataset();
        let w1 = Mat::identity(2).scaled(2f64.sqrt());
        let w2 = Mat::from_rows(&[&[1.0 / 2f64.sqrt(), 2.0 / 2f64.sqrt()]]);
        let src = Params::new(vec![w1, w2]).unwrap();
        let b = src.layers().iter().map(|m| m.frobenius_sq().sqrt()).fold(0.0, f64::max);
        let deep = deepen_square(&src, 4, b, d.x()).unwrap();
        let rep = check_min_norm_witness(&deep, &d, WitnessMode::Square, Some(Reference { b, k: 2 })).unwrap();
        assert!(rep.feasibility_residual < 1e-9);
        assert_eq!(rep.avg_bound_met, Some(true));
        assert_eq!(rep.harm_bound_met, Some(true));
        assert!(rep.rank.mean_sigma_over_f >= thm4_bound(b, 2, 4).unwrap().avg_lower);
    }

    #[test]
    fn unbalanced_witness_reports_residual() {
        let d = square_dataset();
        let src = Params::new(vec![Mat::identity(2).scaled(2.0), Mat::from_rows(&[&[0.5, 1.0]])]).unwrap();
        let rep = check_min_norm_witness(&src, &d, WitnessMode::Square, None).unwrap();
        let expected = 8f64.sqrt() - 1.25f64.sqrt();
        assert!((rep.balancedness_residual - expected).abs() < 1e-12);
        assert!(rep.certified.is_none());
    }

    #[test]
    fn infeasible_candidate_rejected() {
        let d = square_dataset();
        let src = Params::new(vec![Mat::identity(2), Mat::from_rows(&[&[1.0, 1.0]])]).unwrap();
        assert!(matches!(
            check_min_norm_witness(&src, &d, WitnessMode::Square, None),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn margin_witness() {
        let x = Mat::from_cols(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let d = Dataset::classification(x, vec![1.0, -1.0]).unwrap();
        let src = Params::new(vec![Mat::identity(2).scaled(2.0), Mat::from_rows(&[&[0.5, -0.5]])]).unwrap();
        let deep = deepen_classification(&src, 5, 2.0).unwrap();
        let rep = check_min_norm_witness(&deep, &d, WitnessMode::Margin, Some(Reference { b: 2.0, k: 2 })).unwrap();
        assert!(rep.feasibility_residual.abs() < 1e-9);
        assert_eq!(rep.avg_bound_met, Some(true));
    }

    #[test]
    fn csv_layout() {
        let p = Params::new(vec![Mat::from_rows(&[&[3.0, 0.0], &[0.0, 4.0]]), Mat::identity(2)]).unwrap();
        let mut buf = Vec::new();
        write_rank_report_csv(&rank_report(&p).unwrap(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("layer,frobenius,spectral,stable_rank,sigma_over_f"));
        assert!(lines[1].starts_with("1,5.0,4.0"));
        assert!(lines[3].starts_with("aggregate,,,,,"));
        assert!(format_rank_report(&rank_report(&p).unwrap()).contains("stable_rank"));
    }
}
