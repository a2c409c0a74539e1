//! Bias-free fully-connected ReLU networks.
//!
//! A network of depth `k` maps `x` to `W_k relu(W_{k-1} ... relu(W_1 x))`;
//! the output layer is linear. A neuron counts as active only when its
//! pre-activation is strictly positive, matching the `relu'(0) = 0`
//! convention used by the gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};

#[inline]
pub(crate) fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// Ordered layer weights `[W_1, ..., W_k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct Params {
    layers: Vec<Mat>,
}

#[derive(Deserialize)]
struct RawParams {
    layers: Vec<Mat>,
}

impl TryFrom<RawParams> for Params {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        Params::new(raw.layers)
    }
}

impl Params {
    pub fn new(layers: Vec<Mat>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::Shape(format!(
                "network depth {} < 2",
                layers.len()
            )));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[1].cols() != pair[0].rows() {
                return Err(Error::Shape(format!(
                    "layer {} is {}x{} but layer {} has {} columns",
                    l + 1,
                    pair[0].rows(),
                    pair[0].cols(),
                    l + 2,
                    pair[1].cols()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Mat] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Mat] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Mat> {
        self.layers
    }

    pub fn layer(&self, l: usize) -> &Mat {
        &self.layers[l]
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].cols()
    }

    pub fn d_out(&self) -> usize {
        self.layers[self.layers.len() - 1].rows()
    }

    /// `[d_0, d_1, ..., d_k]`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.d_in())
            .chain(self.layers.iter().map(Mat::rows))
            .collect()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|m| Mat::zeros(m.rows(), m.cols()))
                .collect(),
        }
    }

    /// Squared vectorized norm, `sum_l ||W_l||_F^2`.
    pub fn norm_sq(&self) -> f64 {
        self.layers.iter().map(Mat::frobenius_sq).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &Params) -> f64 {
        self.layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| dot(a.data(), b.data()))
            .sum()
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &Params) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.axpy(c, b);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Mat::is_finite)
    }

    pub fn max_abs_diff(&self, other: &Params) -> f64 {
        self.layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    pub fn iter_coords(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|m| m.data().iter().copied())
    }

    pub fn num_coords(&self) -> usize {
        self.layers.iter().map(|m| m.data().len()).sum()
    }

    /// Mutable access to the `idx`-th coordinate in layer-major order.
    pub fn coord_mut(&mut self, mut idx: usize) -> &mut f64 {
        for m in &mut self.layers {
            let len = m.data().len();
            if idx < len {
                return &mut m.data_mut()[idx];
            }
            idx -= len;
        }
        panic!("coordinate index out of range");
    }
}

/// Regression targets or binary labels.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Regression(Mat),
    Classification(Vec<f64>),
}

/// Inputs stored column-wise (`d_in x n`) with matching targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetFile", into = "DatasetFile")]
pub struct Dataset {
    x: Mat,
    targets: Targets,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    x: Mat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<Mat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<f64>>,
}

impl TryFrom<DatasetFile> for Dataset {
    type Error = Error;

    fn try_from(f: DatasetFile) -> Result<Self> {
        match (f.y, f.labels) {
            (Some(y), None) => Dataset::regression(f.x, y),
            (None, Some(labels)) => Dataset::classification(f.x, labels),
            _ => Err(Error::InvalidArgument(
                "dataset needs exactly one of `y` or `labels`".into(),
            )),
        }
    }
}

impl From<Dataset> for DatasetFile {
    fn from(d: Dataset) -> Self {
        match d.targets {
            Targets::Regression(y) => DatasetFile {
                x: d.x,
                y: Some(y),
                labels: None,
            },
            Targets::Classification(labels) => DatasetFile {
                x: d.x,
                y: None,
                labels: Some(labels),
            },
        }
    }
}

impl Dataset {
    pub fn regression(x: Mat, y: Mat) -> Result<Self> {
        if x.cols() != y.cols() {
            return Err(Error::Shape(format!(
                "{} inputs but {} targets",
                x.cols(),
                y.cols()
            )));
        }
        Ok(Self {
            x,
            targets: Targets::Regression(y),
        })
    }

    pub fn classification(x: Mat, labels: Vec<f64>) -> Result<Self> {
        if x.cols() != labels.len() {
            return Err(Error::Shape(format!(
                "{} inputs but {} labels",
                x.cols(),
                labels.len()
            )));
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidArgument("labels must be +1 or -1".into()));
        }
        Ok(Self {
            x,
            targets: Targets::Classification(labels),
        })
    }

    pub fn x(&self) -> &Mat {
        &self.x
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn n(&self) -> usize {
        self.x.cols()
    }

    pub fn d_in(&self) -> usize {
        self.x.rows()
    }

    pub fn input(&self, i: usize) -> Vec<f64> {
        self.x.col(i)
    }

    pub fn y(&self) -> Option<&Mat> {
        match &self.targets {
            Targets::Regression(y) => Some(y),
            Targets::Classification(_) => None,
        }
    }

    pub fn labels(&self) -> Option<&[f64]> {
        match &self.targets {
            Targets::Classification(l) => Some(l),
            Targets::Regression(_) => None,
        }
    }
}

fn check_input(p: &Params, len: usize) -> Result<()> {
    if len != p.d_in() {
        return Err(Error::Shape(format!(
            "input length {len} but network expects {}",
            p.d_in()
        )));
    }
    Ok(())
}

pub fn forward(p: &Params, x: &[f64]) -> Result<Vec<f64>> {
    check_input(p, x.len())?;
    let mut h = x.to_vec();
    let last = p.depth() - 1;
    for (l, w) in p.layers().iter().enumerate() {
        h = w.matvec(&h)?;
        if l < last {
            h.iter_mut().for_each(|v| *v = relu(*v));
        }
    }
    Ok(h)
}

/// Column-wise forward pass, `N(X)` of shape `d_out x n`.
pub fn forward_batch(p: &Params, x: &Mat) -> Result<Mat> {
    check_input(p, x.rows())?;
    let last = p.depth() - 1;
    let mut h = x.clone();
    for (l, w) in p.layers().iter().enumerate() {
        h = w.matmul(&h)?;
        if l < last {
            h.data_mut().iter_mut().for_each(|v| *v = relu(*v));
        }
    }
    Ok(h)
}

/// Per hidden layer, whether each neuron's pre-activation is strictly positive.
pub fn activation_pattern(p: &Params, x: &[f64]) -> Result<Vec<Vec<bool>>> {
    check_input(p, x.len())?;
    let mut h = x.to_vec();
    let mut masks = Vec::with_capacity(p.depth() - 1);
    for w in &p.layers()[..p.depth() - 1] {
        h = w.matvec(&h)?;
        masks.push(h.iter().map(|&z| z > 0.0).collect());
        h.iter_mut().for_each(|v| *v = relu(*v));
    }
    Ok(masks)
}

/// Multiplies every layer by `c > 0`; outputs scale by `c^depth`.
pub fn scale(p: &Params, c: f64) -> Result<Params> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "scale factor must be positive, got {c}"
        )));
    }
    Params::new(p.layers().iter().map(|m| m.scaled(c)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_params(rng: &mut ChaCha8Rng, widths: &[usize]) -> Params {
        let layers = widths
            .windows(2)
            .map(|w| {
                let data = (0..w[0] * w[1]).map(|_| rng.random_range(-1.0..1.0)).collect();
                Mat::new(w[1], w[0], data).unwrap()
            })
            .collect();
        Params::new(layers).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Params::new(vec![Mat::identity(2)]).is_err());
        assert!(Params::new(vec![Mat::identity(2), Mat::zeros(1, 3)]).is_err());
        let p = Params::new(vec![Mat::identity(2), Mat::zeros(1, 2)]).unwrap();
        assert!(forward(&p, &[1.0, 2.0, 3.0]).is_err());
        assert_eq!(p.widths(), vec![2, 2, 1]);
    }

    #[test]
    fn forward_identity_depth2() {
        let p = Params::new(vec![Mat::identity(2), Mat::identity(2)]).unwrap();
        assert_eq!(forward(&p, &[1.0, -1.0]).unwrap(), vec![1.0, 0.0]);
        let v = Mat::from_rows(&[&[2.0, 3.0], &[-1.0, 5.0]]);
        let p = Params::new(vec![Mat::identity(2), v]).unwrap();
        assert_eq!(forward(&p, &[1.0, -1.0]).unwrap(), vec![2.0, -1.0]);
    }

    #[test]
    fn forward_at_origin_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_params(&mut rng, &[3, 4, 4, 2]);
        assert_eq!(forward(&p, &[0.0; 3]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn forward_batch_matches_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let p = random_params(&mut rng, &[3, 5, 4, 2]);
            let cols: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
            let x = Mat::from_cols(&refs);
            let out = forward_batch(&p, &x).unwrap();
            for (j, c) in cols.iter().enumerate() {
                assert_eq!(out.col(j), forward(&p, c).unwrap());
            }
        }
    }

    #[test]
    fn activation_pattern_strict() {
        // First neuron sees exactly zero pre-activation.
        let w = Mat::from_rows(&[&[1.0, -1.0], &[1.0, 1.0]]);
        let p = Params::new(vec![w, Mat::identity(2)]).unwrap();
        assert_eq!(activation_pattern(&p, &[1.0, 1.0]).unwrap(), vec![vec![false, true]]);

        let pos = Params::new(vec![
            Mat::from_rows(&[&[1.0, 2.0], &[0.5, 0.5], &[3.0, 1.0]]),
            Mat::from_rows(&[&[1.0, 1.0, 1.0]]),
        ])
        .unwrap();
        assert_eq!(activation_pattern(&pos, &[0.2, 0.1]).unwrap(), vec![vec![true; 3]]);
    }

    #[test]
    fn scale_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p2 = random_params(&mut rng, &[2, 3, 2]);
        let x = [0.3, -0.7];
        assert_eq!(forward(&scale(&p2, 1.0).unwrap(), &x).unwrap(), forward(&p2, &x).unwrap());
        let base = forward(&p2, &x).unwrap();
        let doubled = forward(&scale(&p2, 2.0).unwrap(), &x).unwrap();
        for (a, b) in base.iter().zip(&doubled) {
            assert!((4.0 * a - b).abs() < 1e-12);
        }
        let p3 = random_params(&mut rng, &[2, 3, 3, 1]);
        let base = forward(&p3, &x).unwrap()[0];
        let tripled = forward(&scale(&p3, 3.0).unwrap(), &x).unwrap()[0];
        assert!((27.0 * base - tripled).abs() < 1e-12);
        assert!(scale(&p3, 0.0).is_err());
        assert!(scale(&p3, -1.0).is_err());
    }

    #[test]
    fn json_schema() {
        let p = Params::new(vec![Mat::identity(2), Mat::from_rows(&[&[1.0, -1.0]])]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(
            s,
            r#"{"layers":[{"rows":2,"cols":2,"data":[1.0,0.0,0.0,1.0]},{"rows":1,"cols":2,"data":[1.0,-1.0]}]}"#
        );
        let back: Params = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        let bad = r#"{"layers":[{"rows":2,"cols":2,"data":[1,0,0,1]},{"rows":1,"cols":3,"data":[1,1,1]}]}"#;
        assert!(serde_json::from_str::<Params>(bad).is_err());
    }

    #[test]
    fn dataset_json() {
        let d = Dataset::classification(Mat::identity(2), vec![1.0, -1.0]).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<Dataset>(&s).unwrap(), d);
        assert!(Dataset::classification(Mat::identity(2), vec![1.0, 0.5]).is_err());
        assert!(Dataset::regression(Mat::identity(2), Mat::zeros(2, 3)).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::{any, prop_assert, prop_assume, proptest, ProptestConfig};

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn homogeneity(seed in any::<u64>(), c in 0.05f64..5.0, depth in 2usize..5) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut widths = vec![3];
                widths.extend(std::iter::repeat_n(4, depth - 1));
                widths.push(2);
                let p = random_params(&mut rng, &widths);
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let base = forward(&p, &x).unwrap();
                let scaled = forward(&scale(&p, c).unwrap(), &x).unwrap();
                let ck = c.powi(depth as i32);
                let diff: f64 = base.iter().zip(&scaled).map(|(a, b)| (ck * a - b).powi(2)).sum::<f64>().sqrt();
                let nb = base.iter().map(|v| v * v).sum::<f64>().sqrt();
                prop_assert!(diff <= 1e-9 * ck * (1.0 + nb));
            }

            #[test]
            fn linear_inside_fixed_pattern(seed in any::<u64>(), a in -1.0f64..1.0, b in -1.0f64..1.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let p = random_params(&mut rng, &[2, 4, 3, 1]);
                let x: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
                let y: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
                // Small perturbations keep us inside the pattern of x.
                let eps = 1e-4;
                let z: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| xi + eps * (a * xi + b * yi)).collect();
                let za: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| xi + eps * yi * b).collect();
                let zb: Vec<f64> = x.iter().map(|xi| xi * (1.0 + eps * a)).collect();
                let pats = [&x, &z, &za, &zb].map(|v| activation_pattern(&p, v).unwrap());
                prop_assume!(pats.iter().all(|q| *q == pats[0]));
                // f(x + e(a x + b y)) = f(x(1 + e a)) + f(x + e b y) - f(x) on a linear piece.
                let f = |v: &[f64]| forward(&p, v).unwrap()[0];
                let lhs = f(&z);
                let rhs = f(&zb) + f(&za) - f(&x);
                prop_assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }
}
