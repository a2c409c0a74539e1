//! Square, exponential and logistic losses with backprop gradients.
//!
//! Backprop uses `relu'(0) = 0`, so at a kink the returned vector is the
//! subgradient obtained by treating a zero pre-activation as inactive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{matmul_into, Mat};
use crate::network::{forward_batch, relu, Dataset, Params, Targets};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Square,
    Exponential,
    Logistic,
}

impl LossKind {
    fn check(self, p: &Params, d: &Dataset) -> Result<()> {
        let ok = matches!(
            (self, d.targets()),
            (LossKind::Square, Targets::Regression(_))
                | (LossKind::Exponential | LossKind::Logistic, Targets::Classification(_))
        );
        if !ok {
            return Err(Error::IncompatibleLoss { loss: self });
        }
        if p.d_in() != d.d_in() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, dataset has {}",
                p.d_in(),
                d.d_in()
            )));
        }
        match d.targets() {
            Targets::Regression(y) if y.rows() != p.d_out() => Err(Error::Shape(format!(
                "network outputs {} values, targets have {}",
                p.d_out(),
                y.rows()
            ))),
            Targets::Classification(_) if p.d_out() != 1 => Err(Error::Shape(
                "classification needs a scalar-output network".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// `log(1 + e^{-q})` without overflow for large `|q|`.
pub(crate) fn softplus_neg(q: f64) -> f64 {
    if q >= 0.0 {
        (-q).exp().ln_1p()
    } else {
        -q + q.exp().ln_1p()
    }
}

/// `1 / (1 + e^{q})`.
fn sigmoid_neg(q: f64) -> f64 {
    if q >= 0.0 {
        let e = (-q).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + q.exp())
    }
}

fn loss_from_outputs(out: &Mat, d: &Dataset, kind: LossKind) -> f64 {
    match (kind, d.targets()) {
        (LossKind::Square, Targets::Regression(y)) => {
            0.5 * out
                .data()
                .iter()
                .zip(y.data())
                .map(|(o, t)| (o - t) * (o - t))
                .sum::<f64>()
        }
        (LossKind::Exponential, Targets::Classification(labels)) => labels
            .iter()
            .zip(out.data())
            .map(|(y, o)| (-y * o).exp())
            .sum(),
        (LossKind::Logistic, Targets::Classification(labels)) => labels
            .iter()
            .zip(out.data())
            .map(|(y, o)| softplus_neg(y * o))
            .sum(),
        _ => unreachable!("checked by LossKind::check"),
    }
}

pub fn loss(p: &Params, d: &Dataset, kind: LossKind) -> Result<f64> {
    kind.check(p, d)?;
    let out = forward_batch(p, d.x())?;
    Ok(loss_from_outputs(&out, d, kind))
}

/// Per-example residuals `N(x_i) - y_i` as the columns of a matrix.
#[derive(Clone, Debug)]
pub struct Residual(pub Mat);

pub fn residuals(p: &Params, d: &Dataset) -> Result<Residual> {
    let y = d
        .y()
        .ok_or_else(|| Error::InvalidArgument("residuals need regression targets".into()))?;
    Ok(Residual(forward_batch(p, d.x())?.sub(y)?))
}

/// Preallocated buffers for repeated loss/gradient evaluation on one
/// architecture and dataset size.
#[derive(Clone, Debug)]
pub struct Backprop {
    // pre[l] = W_l * act[l], act[0] = X
    pre: Vec<Mat>,
    act: Vec<Mat>,
    delta: Vec<Mat>,
    scratch: Vec<Mat>,
}

impl Backprop {
    pub fn new(p: &Params, n: usize) -> Self {
        let widths = p.widths();
        let k = p.depth();
        let pre = (0..k).map(|l| Mat::zeros(widths[l + 1], n)).collect();
        let act = (0..k).map(|l| Mat::zeros(widths[l], n)).collect();
        let delta = (0..k).map(|l| Mat::zeros(widths[l + 1], n)).collect();
        let scratch = (0..k).map(|l| Mat::zeros(widths[l], n)).collect();
        Self {
            pre,
            act,
            delta,
            scratch,
        }
    }

    /// Writes the gradient into `grad` (same shapes as `p`) and returns the loss.
    /// Shapes and loss compatibility are the caller's responsibility.
    pub fn loss_and_grad_into(
        &mut self,
        p: &Params,
        d: &Dataset,
        kind: LossKind,
        grad: &mut Params,
    ) -> f64 {
        let k = p.depth();
        self.act[0].data_mut().copy_from_slice(d.x().data());
        for l in 0..k {
            matmul_into(p.layer(l), &self.act[l], &mut self.pre[l]);
            if l + 1 < k {
                let (src, dst) = (&self.pre[l], &mut self.act[l + 1]);
                for (a, &z) in dst.data_mut().iter_mut().zip(src.data()) {
                    *a = relu(z);
                }
            }
        }

        let out = &self.pre[k - 1];
        let top = &mut self.delta[k - 1];
        let loss = match (kind, d.targets()) {
            (LossKind::Square, Targets::Regression(y)) => {
                let mut acc = 0.0;
                for ((g, &o), &t) in top.data_mut().iter_mut().zip(out.data()).zip(y.data()) {
                    let r = o - t;
                    *g = r;
                    acc += r * r;
                }
                0.5 * acc
            }
            (LossKind::Exponential, Targets::Classification(labels)) => {
                let mut acc = 0.0;
                for ((g, &o), &t) in top.data_mut().iter_mut().zip(out.data()).zip(labels) {
                    let e = (-t * o).exp();
                    *g = -t * e;
                    acc += e;
                }
                acc
            }
            (LossKind::Logistic, Targets::Classification(labels)) => {
                let mut acc = 0.0;
                for ((g, &o), &t) in top.data_mut().iter_mut().zip(out.data()).zip(labels) {
                    let q = t * o;
                    *g = -t * sigmoid_neg(q);
                    acc += softplus_neg(q);
                }
                acc
            }
            _ => unreachable!("checked by LossKind::check"),
        };

        for l in (0..k).rev() {
            // grad W_l = delta_l * act_l^T
            let gl = &mut grad.layers_mut()[l];
            let (rows, cols) = gl.shape();
            let delta = &self.delta[l];
            let act = &self.act[l];
            for i in 0..rows {
                let drow = delta.row(i);
                for j in 0..cols {
                    gl[(i, j)] = drow.iter().zip(act.row(j)).map(|(a, b)| a * b).sum();
                }
            }
            if l == 0 {
                break;
            }
            // delta_{l-1} = (W_l^T delta_l) . 1[pre_{l-1} > 0]
            let w = p.layer(l);
            let back = &mut self.scratch[l];
            back.data_mut().iter_mut().for_each(|v| *v = 0.0);
            for i in 0..w.rows() {
                let drow = self.delta[l].row(i);
                for j in 0..w.cols() {
                    let wij = w[(i, j)];
                    if wij == 0.0 {
                        continue;
                    }
                    for (b, &dv) in back.row_mut(j).iter_mut().zip(drow) {
                        *b += wij * dv;
                    }
                }
            }
            let (lower, _) = self.delta.split_at_mut(l);
            let target = &mut lower[l - 1];
            for ((t, &b), &z) in target
                .data_mut()
                .iter_mut()
                .zip(back.data())
                .zip(self.pre[l - 1].data())
            {
                *t = if z > 0.0 { b } else { 0.0 };
            }
        }
        loss
    }
}

/// Loss and its gradient in one pass.
pub fn loss_and_grad(p: &Params, d: &Dataset, kind: LossKind) -> Result<(f64, Params)> {
    kind.check(p, d)?;
    let mut bp = Backprop::new(p, d.n());
    let mut g = p.zeros_like();
    let l = bp.loss_and_grad_into(p, d, kind, &mut g);
    Ok((l, g))
}

pub fn grad(p: &Params, d: &Dataset, kind: LossKind) -> Result<Params> {
    Ok(loss_and_grad(p, d, kind)?.1)
}

pub(crate) fn check_compat(p: &Params, d: &Dataset, kind: LossKind) -> Result<()> {
    kind.check(p, d)
}

/// Central finite differences of [`loss`], one coordinate at a time.
/// Accurate to `O(h^2)` away from activation kinks.
pub fn grad_fd_oracle(p: &Params, d: &Dataset, kind: LossKind, h: f64) -> Result<Params> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step {h} must be positive")));
    }
    kind.check(p, d)?;
    let mut out = p.zeros_like();
    let mut probe = p.clone();
    for idx in 0..p.num_coords() {
        let orig = *probe.coord_mut(idx);
        *probe.coord_mut(idx) = orig + h;
        let up = loss(&probe, d, kind)?;
        *probe.coord_mut(idx) = orig - h;
        let down = loss(&probe, d, kind)?;
        *probe.coord_mut(idx) = orig;
        *out.coord_mut(idx) = (up - down) / (2.0 * h);
    }
    Ok(out)
}

/// `min_i y_i N(x_i)`.
pub fn margin(p: &Params, d: &Dataset) -> Result<f64> {
    let labels = d
        .labels()
        .ok_or_else(|| Error::InvalidArgument("margin needs a classification dataset".into()))?;
    if p.d_out() != 1 {
        return Err(Error::Shape("margin needs a scalar-output network".into()));
    }
    let out = forward_batch(p, d.x())?;
    Ok(labels
        .iter()
        .zip(out.data())
        .map(|(y, o)| y * o)
        .fold(f64::INFINITY, f64::min))
}

/// Smallest `|pre-activation|` over all hidden neurons and examples.
pub fn min_abs_preactivation(p: &Params, x: &Mat) -> Result<f64> {
    let mut h = x.clone();
    let mut smallest = f64::INFINITY;
    for w in &p.layers()[..p.depth() - 1] {
        h = w.matmul(&h)?;
        smallest = h.data().iter().fold(smallest, |m, z| m.min(z.abs()));
        h.data_mut().iter_mut().for_each(|v| *v = relu(*v));
    }
    Ok(smallest)
}
