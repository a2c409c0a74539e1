//! Explicit networks that witness the existence results.
//!
//! - [`rank1_interpolator`]: a width-2 depth-2 network with a rank-1 first
//!   layer that fits any two non-parallel inputs exactly.
//! - [`solve_output_layer`]: the output weights that make a given first
//!   layer interpolate, via the pseudoinverse of the activation matrix.
//! - [`deepen_square`], [`deepen_classification`]: function-preserving
//!   embeddings of a depth-`k` scalar network into depth `k'`, with the
//!   layer scaling that makes the norm bounds tight.
//! - [`balance_layers`]: the function-preserving rescale that equalizes
//!   layer norms.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, numerical_rank, pinv, Mat, PINV_RTOL};
use crate::network::{forward_batch, relu, Dataset, Params};

/// Interpolation accuracy checked after every construction.
pub const FIT_TOL: f64 = 1e-9;

pub fn rank1_interpolator(d: &Dataset) -> Result<Params> {
    if d.n() != 2 || d.d_in() != 2 {
        return Err(Error::Shape("need exactly two planar inputs".into()));
    }
    if d.y().is_none() {
        return Err(Error::InvalidArgument("need regression targets".into()));
    }
    let (x1, x2) = (d.input(0), d.input(1));
    let (n1, n2) = (norm(&x1), norm(&x2));
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::ZeroVector);
    }
    // w1 = x1/|x1| - x2/|x2|; it separates the inputs iff they are not parallel.
    let w1: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a / n1 - b / n2).collect();
    if !(dot(&w1, &x1) > 0.0 && dot(&w1, &x2) < 0.0) {
        return Err(Error::Assumption("inputs are parallel (zero angle)".into()));
    }
    let w = Mat::from_rows(&[&w1, &[-w1[0], -w1[1]]]);
    let v = solve_output_layer(&w, d)?;
    Params::new(vec![w, v])
}

/// Output weights `V = Y * relu(W X)^+` so that `V relu(W X) = Y`.
///
/// Equivalent to `[Y 0] * [relu(WX)^+; 0]` with the zero blocks dropped.
pub fn solve_output_layer(w: &Mat, d: &Dataset) -> Result<Mat> {
    let y = d
        .y()
        .ok_or_else(|| Error::InvalidArgument("need regression targets".into()))?;
    let mut act = w.matmul(d.x())?;
    act.data_mut().iter_mut().for_each(|v| *v = relu(*v));
    let rank = numerical_rank(&act, PINV_RTOL)?;
    if rank < d.n() {
        return Err(Error::RankDeficient {
            rank,
            needed: d.n(),
        });
    }
    let v = y.matmul(&pinv(&act)?)?;
    let fit = v.matmul(&act)?.max_abs_diff(y);
    let scale = y.data().iter().fold(1.0f64, |m, t| m.max(t.abs()));
    if fit > FIT_TOL * scale {
        return Err(Error::Infeasible(format!(
            "output layer solve left residual {fit:e}"
        )));
    }
    Ok(v)
}

fn check_deepen(src: &Params, k_prime: usize) -> Result<usize> {
    let k = src.depth();
    if k_prime <= k {
        return Err(Error::InvalidArgument(format!(
            "target depth {k_prime} must exceed source depth {k}"
        )));
    }
    if src.d_out() != 1 {
        return Err(Error::Shape("deepening needs a scalar-output source".into()));
    }
    Ok(k)
}

fn check_bound(b: f64) -> Result<()> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::InvalidArgument(format!("norm bound {b} must be positive")));
    }
    Ok(())
}

/// Layer scale and tail weight for [`deepen_square`].
pub fn square_scales(b: f64, k: usize, k_prime: usize) -> (f64, f64) {
    let (k, kp) = (k as f64, k_prime as f64);
    ((1.0 / b).powf((kp - k) / kp), (1.0 / b).powf(-k / kp))
}

/// Layer scale and tail weight for [`deepen_classification`].
pub fn classification_scales(b: f64, k: usize, k_prime: usize) -> (f64, f64) {
    let (k, kp) = (k as f64, k_prime as f64);
    let base = 2f64.sqrt() / b;
    (base.powf((kp - k) / kp), base.powf(-k / kp))
}

/// `||theta'||^2` of the square-loss construction when every source layer
/// has Frobenius norm exactly `B`: `(1/B^2)^{-k/k'} k'`.
pub fn square_norm_sq_bound(b: f64, k: usize, k_prime: usize) -> f64 {
    (1.0 / (b * b)).powf(-(k as f64) / k_prime as f64) * k_prime as f64
}

/// Upper bound on `||theta'||^2` of the classification construction when
/// every source layer has Frobenius norm at most `B`.
pub fn classification_norm_sq_bound(b: f64, k: usize, k_prime: usize) -> f64 {
    2.0 * (2.0 / (b * b)).powf(-(k as f64) / k_prime as f64) * (k_prime as f64 + 1.0)
}

/// Depth-`k'` network equal to `src` wherever `src` is non-negative.
///
/// Layers `1..=k` are scaled by `alpha = (1/B)^{(k'-k)/k'}`, followed by
/// `k' - k` scalar layers of weight `beta = (1/B)^{-k/k'}`. The width-1 ReLU
/// tail zeroes negative outputs, so `inputs` (columns) must all map to
/// non-negative values, and every `||W_i||_F` must be at most `B`.
pub fn deepen_square(src: &Params, k_prime: usize, b: f64, inputs: &Mat) -> Result<Params> {
    let k = check_deepen(src, k_prime)?;
    check_bound(b)?;
    let tol = b * 1e-12;
    if let Some((l, m)) = src
        .layers()
        .iter()
        .enumerate()
        .find(|(_, m)| m.frobenius_sq().sqrt() > b + tol)
    {
        return Err(Error::InvalidArgument(format!(
            "layer {} has Frobenius norm {} > B = {b}",
            l + 1,
            m.frobenius_sq().sqrt()
        )));
    }
    let out = forward_batch(src, inputs)?;
    if let Some(neg) = out.data().iter().find(|&&v| v < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "source output {neg} is negative; the scalar ReLU tail would clip it"
        )));
    }
    let (alpha, beta) = square_scales(b, k, k_prime);
    let mut layers: Vec<Mat> = src.layers().iter().map(|m| m.scaled(alpha)).collect();
    layers.extend((k..k_prime).map(|_| Mat::from_rows(&[&[beta]])));
    Params::new(layers)
}

/// Depth-`k'` network equal to `src` everywhere.
///
/// The output neuron is duplicated with opposite signs so that both signs
/// survive the ReLU tail: layer `k` becomes `alpha [u; -u]`, layers
/// `k+1..k'-1` are `beta I_2` and the output layer is `beta (1, -1)`, with
/// `alpha = (sqrt2/B)^{(k'-k)/k'}` and `beta = (sqrt2/B)^{-k/k'}`.
pub fn deepen_classification(src: &Params, k_prime: usize, b: f64) -> Result<Params> {
    let k = check_deepen(src, k_prime)?;
    check_bound(b)?;
    let (alpha, beta) = classification_scales(b, k, k_prime);
    let mut layers: Vec<Mat> = src.layers()[..k - 1].iter().map(|m| m.scaled(alpha)).collect();
    let u: Vec<f64> = src.layer(k - 1).row(0).iter().map(|v| alpha * v).collect();
    let neg_u: Vec<f64> = u.iter().map(|v| -v).collect();
    layers.push(Mat::from_rows(&[&u, &neg_u]));
    layers.extend((k + 1..k_prime).map(|_| Mat::identity(2).scaled(beta)));
    layers.push(Mat::from_rows(&[&[beta, -beta]]));
    Params::new(layers)
}

/// Rescales layers to the geometric mean of their Frobenius norms. The
/// per-layer factors multiply to one, so the network function is unchanged.
pub fn balance_layers(p: &Params) -> Result<Params> {
    let norms: Vec<f64> = p.layers().iter().map(|m| m.frobenius_sq().sqrt()).collect();
    if let Some(l) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::InvalidArgument(format!("layer {} is zero", l + 1)));
    }
    let target = (norms.iter().map(|n| n.ln()).sum::<f64>() / norms.len() as f64).exp();
    Params::new(
        p.layers()
            .iter()
            .zip(&norms)
            .map(|(m, n)| m.scaled(target / n))
            .collect(),
    )
}
