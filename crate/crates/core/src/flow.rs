//! Gradient-flow simulation.
//!
//! `dtheta/dt = -grad L(theta)` is integrated with explicit Euler (which is
//! exactly full-batch gradient descent with learning rate `step`) or with
//! classical RK4. Every step also tracks how far the layer-balance
//! quantities `||W_l||_F^2 - ||W_{l+1}||_F^2` have drifted from their initial
//! values; the exact flow keeps them constant.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{classify, RegionLabel};
use crate::gradients::{check_compat, Backprop, LossKind};
use crate::linalg::{stable_rank, Mat};
use crate::network::{Dataset, Params};

/// Loss or parameter norm above this aborts the run as divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    Rk4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub step: f64,
    pub max_steps: u64,
    pub loss_tol: f64,
    pub grad_tol: f64,
    pub integrator: Integrator,
    pub record_every: u64,
    pub seed: u64,
    /// Stop as soon as the loss drops to `loss_tol`. When false the whole
    /// step budget is used and convergence is judged on the final loss.
    pub early_stop: bool,
    /// Coefficient `lambda` of an added `lambda * ||theta||^2` penalty.
    pub weight_decay: f64,
    /// Keep full parameter snapshots at every recorded sample.
    pub snapshots: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            max_steps: 3_000_000,
            loss_tol: 1e-4,
            grad_tol: 1e-10,
            integrator: Integrator::Euler,
            record_every: 1000,
            seed: 0,
            early_stop: true,
            weight_decay: 0.0,
            snapshots: false,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step must be positive");
        }
        if !(self.loss_tol > 0.0) || !(self.grad_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    LossTolerance,
    Stationary,
    StepBudget,
    Diverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub step: u64,
    pub time: f64,
    pub loss: f64,
    pub grad_norm: f64,
    pub layer_frobenius: Vec<f64>,
    /// `None` for an all-zero layer.
    pub stable_ranks: Vec<Option<f64>>,
    /// Region of each first-layer row; only for two-input planar depth-2 width-2 runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regions: Option<Vec<RegionLabel>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub params: Params,
    pub converged: bool,
    pub final_loss: f64,
    pub final_grad_norm: f64,
    pub steps_taken: u64,
    pub stop_reason: StopReason,
    pub trajectory: Vec<TrajectorySample>,
    /// Per adjacent layer pair, `max_t |b_l(t) - b_l(0)|`.
    pub balance_drift: Vec<f64>,
    /// Per hidden neuron (layer-major), the same for the neuron-wise quantity.
    pub neuron_balance_drift: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<Vec<Params>>,
}

/// What an observer sees before each update.
pub struct StepView<'a> {
    pub step: u64,
    pub time: f64,
    pub params: &'a Params,
    /// Gradient of the objective (including weight decay) at `params`.
    pub grad: &'a Params,
    pub loss: f64,
}

/// `||W_l||_F^2 - ||W_{l+1}||_F^2` for each adjacent pair.
pub fn balance_invariant(p: &Params) -> Vec<f64> {
    p.layers()
        .windows(2)
        .map(|w| w[0].frobenius_sq() - w[1].frobenius_sq())
        .collect()
}

/// For each hidden neuron: squared norm of its incoming weights minus
/// squared norm of its outgoing weights.
pub fn neuron_balance_invariant(p: &Params) -> Vec<f64> {
    let mut out = Vec::new();
    for pair in p.layers().windows(2) {
        let (inc, outg) = (&pair[0], &pair[1]);
        for i in 0..inc.rows() {
            let a: f64 = inc.row(i).iter().map(|v| v * v).sum();
            let b: f64 = (0..outg.rows()).map(|r| outg[(r, i)] * outg[(r, i)]).sum();
            out.push(a - b);
        }
    }
    out
}

fn region_labels(p: &Params, d: &Dataset) -> Option<Vec<RegionLabel>> {
    if p.depth() != 2 || p.layer(0).shape() != (2, 2) || d.n() != 2 {
        return None;
    }
    let (x1, x2) = (d.input(0), d.input(1));
    let w = p.layer(0);
    (0..2).map(|i| classify(w.row(i), &x1, &x2).ok()).collect()
}

fn sample(p: &Params, d: &Dataset, step: u64, h: f64, loss: f64, grad_norm: f64) -> TrajectorySample {
    TrajectorySample {
        step,
        time: step as f64 * h,
        loss,
        grad_norm,
        layer_frobenius: p.layers().iter().map(|m| m.frobenius_sq().sqrt()).collect(),
        stable_ranks: p.layers().iter().map(|m| stable_rank(m).ok()).collect(),
        regions: region_labels(p, d),
    }
}

fn update_drift(drift: &mut [f64], initial: &[f64], current: &[f64]) {
    for ((d, a), b) in drift.iter_mut().zip(initial).zip(current) {
        *d = d.max((b - a).abs());
    }
}

pub fn run_flow(p0: &Params, d: &Dataset, kind: LossKind, cfg: &FlowConfig) -> Result<FlowResult> {
    run_flow_observed(p0, d, kind, cfg, |_| {})
}

/// [`run_flow`] with a callback invoked before every update.
pub fn run_flow_observed<F>(
    p0: &Params,
    d: &Dataset,
    kind: LossKind,
    cfg: &FlowConfig,
    mut observer: F,
) -> Result<FlowResult>
where
    F: FnMut(&StepView<'_>),
{
    cfg.validate()?;
    check_compat(p0, d, kind)?;

    let h = cfg.step;
    let mut theta = p0.clone();
    let mut bp = Backprop::new(p0, d.n());
    let mut grad = p0.zeros_like();
    let mut stage = p0.clone();
    let mut acc = p0.zeros_like();
    let mut kbuf = p0.zeros_like();

    let bal0 = balance_invariant(p0);
    let nbal0 = neuron_balance_invariant(p0);
    let mut balance_drift = vec![0.0; bal0.len()];
    let mut neuron_balance_drift = vec![0.0; nbal0.len()];
    let mut trajectory = Vec::new();
    let mut snapshots = cfg.snapshots.then(Vec::new);

    let objective_grad = |bp: &mut Backprop, at: &Params, out: &mut Params| -> f64 {
        let l = bp.loss_and_grad_into(at, d, kind, out);
        if cfg.weight_decay > 0.0 {
            out.axpy(2.0 * cfg.weight_decay, at);
        }
        l
    };

    let mut step: u64 = 0;
    let (final_loss, final_grad_norm, stop_reason) = loop {
        let loss = objective_grad(&mut bp, &theta, &mut grad);
        let grad_norm = grad.norm_sq().sqrt();

        update_drift(&mut balance_drift, &bal0, &balance_invariant(&theta));
        update_drift(&mut neuron_balance_drift, &nbal0, &neuron_balance_invariant(&theta));

        if !loss.is_finite()
            || loss > DIVERGENCE_LIMIT
            || !theta.is_finite()
            || theta.norm() > DIVERGENCE_LIMIT
        {
            break (loss, grad_norm, StopReason::Diverged);
        }

        let last = step == cfg.max_steps;
        let converged_now = loss <= cfg.loss_tol && cfg.early_stop;
        let stationary = grad_norm <= cfg.grad_tol;
        if step.is_multiple_of(cfg.record_every) || last || converged_now || stationary {
            trajectory.push(sample(&theta, d, step, h, loss, grad_norm));
            if let Some(s) = snapshots.as_mut() {
                s.push(theta.clone());
            }
        }
        if converged_now {
            break (loss, grad_norm, StopReason::LossTolerance);
        }
        if stationary {
            break (loss, grad_norm, StopReason::Stationary);
        }
        if last {
            break (loss, grad_norm, StopReason::StepBudget);
        }

        observer(&StepView {
            step,
            time: step as f64 * h,
            params: &theta,
            grad: &grad,
            loss,
        });

        match cfg.integrator {
            Integrator::Euler => theta.axpy(-h, &grad),
            Integrator::Rk4 => {
                // acc accumulates k1 + 2k2 + 2k3 + k4 with k_i = -grad at stage i.
                acc.clone_from(&grad);
                stage.clone_from(&theta);
                stage.axpy(-0.5 * h, &grad);
                objective_grad(&mut bp, &stage, &mut kbuf);
                acc.axpy(2.0, &kbuf);

                stage.clone_from(&theta);
                stage.axpy(-0.5 * h, &kbuf);
                objective_grad(&mut bp, &stage, &mut kbuf);
                acc.axpy(2.0, &kbuf);

                stage.clone_from(&theta);
                stage.axpy(-h, &kbuf);
                objective_grad(&mut bp, &stage, &mut kbuf);
                acc.axpy(1.0, &kbuf);

                theta.axpy(-h / 6.0, &acc);
            }
        }
        step += 1;
    };

    let diverged = stop_reason == StopReason::Diverged;
    Ok(FlowResult {
        converged: !diverged && final_loss <= cfg.loss_tol,
        params: theta,
        final_loss,
        final_grad_norm,
        steps_taken: step,
        stop_reason,
        trajectory,
        balance_drift,
        neuron_balance_drift,
        snapshots,
    })
}

/// Uniform sample on the sphere of the given radius in `dim` dimensions.
pub fn sphere_sample<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    if radius == 0.0 {
        return vec![0.0; dim];
    }
    loop {
        let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            return g.into_iter().map(|v| v * radius / n).collect();
        }
    }
}

/// Depth-2 initialization: every row of `W_1` uniform on the sphere of
/// radius `w_radius`, every column of `W_2` uniform on the sphere of radius
/// `v_radius`.
pub fn init_depth2<R: Rng + ?Sized>(
    rng: &mut R,
    d_in: usize,
    hidden: usize,
    d_out: usize,
    w_radius: f64,
    v_radius: f64,
) -> Params {
    let mut w = Mat::zeros(hidden, d_in);
    for i in 0..hidden {
        w.row_mut(i).copy_from_slice(&sphere_sample(rng, d_in, w_radius));
    }
    let mut v = Mat::zeros(d_out, hidden);
    for j in 0..hidden {
        for (r, val) in sphere_sample(rng, d_out, v_radius).into_iter().enumerate() {
            v[(r, j)] = val;
        }
    }
    Params::new(vec![w, v]).expect("consistent depth-2 shapes")
}

/// Every layer i.i.d. Gaussian, rescaled to Frobenius norm `radius`.
pub fn init_gaussian_frobenius<R: Rng + ?Sized>(rng: &mut R, widths: &[usize], radius: f64) -> Result<Params> {
    if widths.len() < 3 {
        return Err(Error::Shape("need at least two layers".into()));
    }
    let layers = widths
        .windows(2)
        .map(|w| {
            let v = sphere_sample(rng, w[0] * w[1], radius);
            Mat::new(w[1], w[0], v)
        })
        .collect::<Result<Vec<_>>>()?;
    Params::new(layers)
}

/// Deterministic spherical initialization. Depth-2 networks get per-row /
/// per-column sphere samples; deeper ones per-layer Frobenius-normalized
/// Gaussians.
pub fn init_spherical(widths: &[usize], radius: f64, seed: u64) -> Result<Params> {
    if !(radius >= 0.0) {
        return Err(Error::InvalidArgument(format!("radius {radius} is negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match widths {
        [d_in, hidden, d_out] => Ok(init_depth2(&mut rng, *d_in, *hidden, *d_out, radius, radius)),
        _ => init_gaussian_frobenius(&mut rng, widths, radius),
    }
}
