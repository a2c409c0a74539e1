//! Activation regions of a single hidden neuron for two planar inputs.
//!
//! For inputs `x1, x2` a weight vector `w` is in
//! - `D`  when `w.x1 <= 0` and `w.x2 <= 0` (dead),
//! - `S`  when both dot products are strictly positive,
//! - `S1` when only `w.x1 > 0`, `S2` when only `w.x2 > 0`.
//!
//! The interval predicates for converged depth-2 width-2 networks live here
//! too, together with the assumptions on the dataset that they need.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowResult;
use crate::linalg::{angle, dot, norm, Mat};
use crate::network::Dataset;

/// Tolerance for "unit norm" when checking dataset assumptions.
pub const UNIT_NORM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionLabel {
    D,
    S,
    S1,
    S2,
}

fn check_inputs(x1: &[f64], x2: &[f64]) -> Result<()> {
    if x1.len() != 2 || x2.len() != 2 {
        return Err(Error::Shape("region geometry needs planar inputs".into()));
    }
    if norm(x1) == 0.0 || norm(x2) == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(())
}

pub fn classify(w: &[f64], x1: &[f64], x2: &[f64]) -> Result<RegionLabel> {
    check_inputs(x1, x2)?;
    if w.len() != 2 {
        return Err(Error::Shape("weight vector must be planar".into()));
    }
    Ok(match (dot(w, x1) > 0.0, dot(w, x2) > 0.0) {
        (false, false) => RegionLabel::D,
        (true, true) => RegionLabel::S,
        (true, false) => RegionLabel::S1,
        (false, true) => RegionLabel::S2,
    })
}

/// True when `w` lies in the interior of its region, i.e. neither dot
/// product is exactly zero.
pub fn in_interior(w: &[f64], x1: &[f64], x2: &[f64]) -> bool {
    dot(w, x1) != 0.0 && dot(w, x2) != 0.0
}

/// Checks that both inputs are unit vectors with angle strictly between
/// `pi/2` and `pi`; returns that angle.
pub fn check_obtuse_unit_inputs(x1: &[f64], x2: &[f64]) -> Result<f64> {
    check_inputs(x1, x2)?;
    for (name, x) in [("x1", x1), ("x2", x2)] {
        if (norm(x) - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::Assumption(format!(
                "{name} has norm {} (expected 1)",
                norm(x)
            )));
        }
    }
    let a = angle(x1, x2)?;
    if !(a > PI / 2.0 && a < PI) {
        return Err(Error::Assumption(format!(
            "input angle {a} outside (pi/2, pi)"
        )));
    }
    Ok(a)
}

/// Targets must be unit vectors and linearly independent.
pub fn check_unit_independent_targets(y: &Mat) -> Result<()> {
    if y.shape() != (2, 2) {
        return Err(Error::Assumption("targets must be two planar vectors".into()));
    }
    for j in 0..2 {
        let nj = norm(&y.col(j));
        if (nj - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::Assumption(format!(
                "target {} has norm {nj} (expected 1)",
                j + 1
            )));
        }
    }
    let det = y[(0, 0)] * y[(1, 1)] - y[(0, 1)] * y[(1, 0)];
    if det.abs() < 1e-12 {
        return Err(Error::Assumption("targets are linearly dependent".into()));
    }
    Ok(())
}

/// Both dataset assumptions for the two-point planar setting; returns the
/// input angle.
pub fn check_dataset(d: &Dataset) -> Result<f64> {
    if d.n() != 2 || d.d_in() != 2 {
        return Err(Error::Assumption("need exactly two planar inputs".into()));
    }
    let y = d
        .y()
        .ok_or_else(|| Error::Assumption("need regression targets".into()))?;
    check_unit_independent_targets(y)?;
    check_obtuse_unit_inputs(&d.input(0), &d.input(1))
}

/// Angular measure of a region on the unit circle.
pub fn region_angle(x1: &[f64], x2: &[f64], label: RegionLabel) -> Result<f64> {
    let a = check_obtuse_unit_inputs_any_norm(x1, x2)?;
    Ok(match label {
        RegionLabel::S1 | RegionLabel::S2 => a,
        RegionLabel::S | RegionLabel::D => PI - a,
    })
}

// Region angles only depend on directions.
fn check_obtuse_unit_inputs_any_norm(x1: &[f64], x2: &[f64]) -> Result<f64> {
    check_inputs(x1, x2)?;
    let a = angle(x1, x2)?;
    if !(a > PI / 2.0 && a < PI) {
        return Err(Error::Assumption(format!(
            "input angle {a} outside (pi/2, pi)"
        )));
    }
    Ok(a)
}

/// Largest admissible first-layer row norm at initialization for the
/// full-rank-at-convergence result: `min{1/2, (sqrt3/2) cos(angle/2)}`.
pub fn thm2_init_bound(x1: &[f64], x2: &[f64]) -> Result<f64> {
    let a = check_obtuse_unit_inputs(x1, x2)?;
    Ok(0.5f64.min(3f64.sqrt() / 2.0 * (a / 2.0).cos()))
}

/// Largest admissible `||w_i(0)||` for the interval result:
/// `(sqrt3/2) min{sin((pi - angle)/4), sin(angle - pi/2)}`.
pub fn thm3_radius_bound(x1: &[f64], x2: &[f64]) -> Result<f64> {
    let a = check_obtuse_unit_inputs(x1, x2)?;
    Ok(3f64.sqrt() / 2.0 * ((PI - a) / 4.0).sin().min((a - PI / 2.0).sin()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thm3Intervals {
    pub input_angle: f64,
    /// Closed interval for the angle between the two rows at convergence.
    pub angle_lo: f64,
    pub angle_hi: f64,
    /// Open interval for each row norm at convergence.
    pub norm_lo: f64,
    pub norm_hi: f64,
    pub prob_lower_bound: f64,
}

pub fn thm3_intervals(x1: &[f64], x2: &[f64], init_norms: &[f64]) -> Result<Thm3Intervals> {
    let a = check_obtuse_unit_inputs(x1, x2)?;
    let radius = thm3_radius_bound(x1, x2)?;
    if let Some(bad) = init_norms.iter().find(|&&r| r > radius) {
        return Err(Error::Assumption(format!(
            "initial row norm {bad} exceeds the admissible radius {radius}"
        )));
    }
    let s = a.sin();
    Ok(Thm3Intervals {
        input_angle: a,
        angle_lo: PI - a,
        angle_hi: 0.75 * PI + (a - PI / 2.0) / 2.0,
        norm_lo: 3f64.sqrt() / 2.0,
        norm_hi: (0.25 + 4.0 / (3.0 * s * s)).sqrt(),
        prob_lower_bound: 2.0 * (a / (2.0 * PI)).powi(2),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    pub event: bool,
    pub converged: bool,
    pub row_angle: Option<f64>,
    pub row_norms: [f64; 2],
    pub angle_ok: bool,
    pub norms_ok: bool,
}

/// Membership test for the interval event on a first-layer matrix; `slack`
/// widens every interval on both sides.
pub fn event_e_for_params(
    converged: bool,
    w: &Mat,
    intervals: &Thm3Intervals,
    slack: f64,
) -> Result<EventReport> {
    if w.shape() != (2, 2) {
        return Err(Error::Shape("event check needs a 2x2 first layer".into()));
    }
    let (w1, w2) = (w.row(0), w.row(1));
    let row_norms = [norm(w1), norm(w2)];
    let row_angle = angle(w1, w2).ok();
    let angle_ok = row_angle.is_some_and(|t| {
        t >= intervals.angle_lo - slack && t <= intervals.angle_hi + slack
    });
    let norms_ok = row_norms
        .iter()
        .all(|&r| r > intervals.norm_lo - slack && r < intervals.norm_hi + slack);
    Ok(EventReport {
        event: converged && angle_ok && norms_ok,
        converged,
        row_angle,
        row_norms,
        angle_ok,
        norms_ok,
    })
}

pub fn check_event_e(result: &FlowResult, intervals: &Thm3Intervals, slack: f64) -> Result<EventReport> {
    if result.params.depth() != 2 {
        return Err(Error::Shape("event check needs a depth-2 network".into()));
    }
    event_e_for_params(result.converged, result.params.layer(0), intervals, slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const X1: [f64; 2] = [1.0, 0.0];
    fn x2_at(a: f64) -> [f64; 2] {
        [a.cos(), a.sin()]
    }

    fn section31() -> ([f64; 2], [f64; 2]) {
        let n = (1.0f64 + 0.99 * 0.99).sqrt();
        ([1.0 / n, 0.99 / n], [-1.0 / n, 0.99 / n])
    }

    #[test]
    fn classify_examples() {
        let x2 = [-0.5, 3f64.sqrt() / 2.0];
        assert_eq!(classify(&[0.0, 0.0], &X1, &x2).unwrap(), RegionLabel::D);
        assert_eq!(classify(&[1.0, 0.0], &X1, &x2).unwrap(), RegionLabel::S1);
        assert_eq!(classify(&[0.0, 1.0], &X1, &x2).unwrap(), RegionLabel::S2);
        assert_eq!(classify(&[0.2, 1.0], &X1, &x2).unwrap(), RegionLabel::S);
        assert!(matches!(classify(&[1.0, 0.0], &[0.0, 0.0], &x2), Err(Error::ZeroVector)));
    }

    #[test]
    fn opposite_rays_swap_single_regions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let a = rng.random_range(PI / 2.0 + 1e-3..PI - 1e-3);
            let x2 = x2_at(a);
            let t = rng.random_range(0.0..2.0 * PI);
            let w = [t.cos(), t.sin()];
            if classify(&w, &X1, &x2).unwrap() == RegionLabel::S1 && in_interior(&w, &X1, &x2) {
                let neg = [-w[0], -w[1]];
                assert_eq!(classify(&neg, &X1, &x2).unwrap(), RegionLabel::S2);
                assert!(in_interior(&neg, &X1, &x2));
            }
        }
    }

    #[test]
    fn region_angles() {
        let a = 2.0 * PI / 3.0;
        let x2 = x2_at(a);
        let s1 = region_angle(&X1, &x2, RegionLabel::S1).unwrap();
        let s2 = region_angle(&X1, &x2, RegionLabel::S2).unwrap();
        assert!((s1 - a).abs() < 1e-12 && (s2 - a).abs() < 1e-12);
        let rest = region_angle(&X1, &x2, RegionLabel::S).unwrap()
            + region_angle(&X1, &x2, RegionLabel::D).unwrap();
        assert!((rest - 2.0 * PI / 3.0).abs() < 1e-12);
        let near = region_angle(&X1, &x2_at(PI / 2.0 + 1e-9), RegionLabel::S1).unwrap();
        assert!((near - PI / 2.0).abs() < 1e-8);
        assert!(region_angle(&X1, &x2_at(1.0), RegionLabel::S).is_err());
    }

    #[test]
    fn region_angles_match_sampled_measure() {
        // Monte Carlo measure of each region on the circle.
        let a = 1.9;
        let x2 = x2_at(a);
        let n = 200_000;
        let mut counts = std::collections::HashMap::new();
        for k in 0..n {
            let t = 2.0 * PI * (k as f64 + 0.5) / n as f64;
            *counts.entry(classify(&[t.cos(), t.sin()], &X1, &x2).unwrap()).or_insert(0usize) += 1;
        }
        let mut total = 0.0;
        for label in [RegionLabel::D, RegionLabel::S, RegionLabel::S1, RegionLabel::S2] {
            let measured = 2.0 * PI * counts[&label] as f64 / n as f64;
            let exact = region_angle(&X1, &x2, label).unwrap();
            assert!((measured - exact).abs() < 1e-3, "{label:?}");
            total += exact;
        }
        assert!((total - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn thm2_bound_examples() {
        let b = thm2_init_bound(&X1, &x2_at(2.0 * PI / 3.0)).unwrap();
        assert!((b - 3f64.sqrt() / 4.0).abs() < 1e-12);
        assert!((b - 0.4330).abs() < 1e-4);
        assert!(thm2_init_bound(&X1, &x2_at(PI - 1e-6)).unwrap() < 1e-6);
        let (x1, x2) = section31();
        assert_eq!(thm2_init_bound(&x1, &x2).unwrap(), 0.5);
        assert!(thm2_init_bound(&X1, &[2.0, 0.0]).is_err());
    }

    #[test]
    fn thm3_interval_examples() {
        let iv = thm3_intervals(&X1, &x2_at(2.0 * PI / 3.0), &[0.1, 0.1]).unwrap();
        assert!((iv.norm_lo - 0.8660).abs() < 1e-4);
        assert!((iv.norm_hi - (73.0f64 / 36.0).sqrt()).abs() < 1e-12);
        assert!((iv.norm_hi - 1.4240).abs() < 1e-4);
        assert!((iv.angle_lo - PI / 3.0).abs() < 1e-12);
        assert!((iv.angle_hi - 5.0 * PI / 6.0).abs() < 1e-12);
        assert!((iv.prob_lower_bound - 2.0 / 9.0).abs() < 1e-12);

        let (x1, x2) = section31();
        let iv = thm3_intervals(&x1, &x2, &[]).unwrap();
        assert!((iv.input_angle - 1.58085).abs() < 1e-5);
        assert!((iv.prob_lower_bound - 0.1266).abs() < 1e-4);

        let iv = thm3_intervals(&X1, &x2_at(0.75 * PI), &[]).unwrap();
        assert!((iv.prob_lower_bound - 0.28125).abs() < 1e-12);

        let radius = thm3_radius_bound(&x1, &x2).unwrap();
        assert!(thm3_intervals(&x1, &x2, &[radius * 1.01]).is_err());
    }

    /// Same formulas written through `c = x1.x2` and square roots only.
    fn algebraic_oracle(a: f64) -> (f64, f64, f64, f64) {
        let c = a.cos();
        let sin_a = (1.0 - c * c).sqrt();
        let cos_half = ((1.0 + c) / 2.0).sqrt();
        let thm2 = 0.5f64.min(3f64.sqrt() / 2.0 * cos_half);
        // sin((pi - a)/4) = sqrt((1 - cos((pi - a)/2)) / 2), cos((pi - a)/2) = sin(a/2)
        let sin_half = ((1.0 - c) / 2.0).sqrt();
        let quarter = ((1.0 - sin_half) / 2.0).sqrt();
        let radius = 3f64.sqrt() / 2.0 * quarter.min(-c);
        let norm_hi = (0.25 + 4.0 / (3.0 * sin_a * sin_a)).sqrt();
        (thm2, radius, norm_hi, 2.0 * (a / (2.0 * PI)) * (a / (2.0 * PI)))
    }

    #[test]
    fn formulas_match_algebraic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..20 {
            let a = rng.random_range(PI / 2.0 + 1e-3..PI - 1e-3);
            let x2 = x2_at(a);
            let (thm2, radius, norm_hi, prob) = algebraic_oracle(a);
            assert!((thm2_init_bound(&X1, &x2).unwrap() - thm2).abs() < 1e-12);
            assert!((thm3_radius_bound(&X1, &x2).unwrap() - radius).abs() < 1e-12);
            let iv = thm3_intervals(&X1, &x2, &[]).unwrap();
            assert!((iv.norm_hi - norm_hi).abs() < 1e-9 * norm_hi);
            assert!((iv.prob_lower_bound - prob).abs() < 1e-12);
        }
    }

    #[test]
    fn event_membership() {
        let iv = thm3_intervals(&X1, &x2_at(2.0 * PI / 3.0), &[]).unwrap();
        // Angle pi/3 + 0.01 sits inside [pi/3, 5pi/6]; norms 1 inside (0.866, 1.424).
        let t = PI / 3.0 + 0.01;
        let w = Mat::from_rows(&[&[1.0, 0.0], &[t.cos(), t.sin()]]);
        assert!(event_e_for_params(true, &w, &iv, 0.0).unwrap().event);
        assert!(!event_e_for_params(false, &w, &iv, 0.0).unwrap().event);
        let t = PI / 3.0 - 0.01;
        let w = Mat::from_rows(&[&[1.0, 0.0], &[t.cos(), t.sin()]]);
        let r = event_e_for_params(true, &w, &iv, 0.0).unwrap();
        assert!(!r.event && !r.angle_ok && r.norms_ok);
        let w = Mat::from_rows(&[&[0.5, 0.0], &[0.0, 1.0]]);
        assert!(!event_e_for_params(true, &w, &iv, 1e-3).unwrap().norms_ok);
    }

    #[test]
    fn dataset_assumptions() {
        let (x1, x2) = section31();
        let d = Dataset::regression(Mat::from_cols(&[&x1, &x2]), Mat::identity(2)).unwrap();
        assert!((check_dataset(&d).unwrap() - 1.58085).abs() < 1e-5);
        let dep = Dataset::regression(
            Mat::from_cols(&[&x1, &x2]),
            Mat::from_rows(&[&[1.0, 1.0], &[0.0, 0.0]]),
        )
        .unwrap();
        assert!(matches!(check_dataset(&dep), Err(Error::Assumption(_))));
        let acute = Dataset::regression(Mat::identity(2), Mat::identity(2)).unwrap();
        assert!(matches!(check_dataset(&acute), Err(Error::Assumption(_))));
    }
}
