use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::linalg::Mat;
use crate::network::Dataset;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Histogram,
    Thm2,
    Thm3,
    DepthSweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Histogram => "histogram",
            ExperimentKind::Thm2 => "thm2",
            ExperimentKind::Thm3 => "thm3",
            ExperimentKind::DepthSweep => "depth-sweep",
        }
    }
}

/// Where the training data comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Two unit inputs `(+-1, 0.99)/norm` with identity targets.
    Section31,
    /// Two unit inputs symmetric about the second axis at the given angle,
    /// identity targets.
    Angle { angle: f64 },
    /// Inputs and targets as columns.
    Explicit { x: Mat, y: Mat },
}

impl DatasetSpec {
    pub fn build(&self) -> Result<Dataset> {
        match self {
            DatasetSpec::Section31 => Ok(dataset_section31()),
            DatasetSpec::Angle { angle } => dataset_with_angle(*angle),
            DatasetSpec::Explicit { x, y } => Dataset::regression(x.clone(), y.clone()),
        }
    }
}

/// The two-point planar dataset: inputs `(1, 0.99)` and `(-1, 0.99)`
/// normalized, targets the standard basis.
pub fn dataset_section31() -> Dataset {
    let n = (1.0f64 + 0.99 * 0.99).sqrt();
    let x = Mat::from_cols(&[&[1.0 / n, 0.99 / n], &[-1.0 / n, 0.99 / n]]);
    Dataset::regression(x, Mat::identity(2)).expect("fixed shapes")
}

/// Unit inputs at `+-angle/2` from the second axis with identity targets.
pub fn dataset_with_angle(angle: f64) -> Result<Dataset> {
    if !(angle > 0.0 && angle < std::f64::consts::PI) {
        return Err(Error::InvalidArgument(format!("angle {angle} outside (0, pi)")));
    }
    let (s, c) = (angle / 2.0).sin_cos();
    let x = Mat::from_cols(&[&[s, c], &[-s, c]]);
    Dataset::regression(x, Mat::identity(2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Rows of the first layer uniform on a sphere.
    Spherical,
    /// Row `i` of the first layer uniform on the sphere restricted to the
    /// interior of the region where only input `i` is active.
    Stratified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub w_radius: f64,
    /// Ignored by the interval experiment, which always starts the output
    /// layer at zero.
    pub v_radius: f64,
    pub mode: InitMode,
    pub hidden: usize,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            w_radius: 1e-4,
            v_radius: 1e-4,
            mode: InitMode::Spherical,
            hidden: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthSweepConfig {
    pub depths: Vec<usize>,
    pub weight_decays: Vec<f64>,
    pub width: usize,
    /// Frobenius norm of every layer at initialization.
    pub init_layer_norm: f64,
}

impl Default for DepthSweepConfig {
    fn default() -> Self {
        Self {
            depths: vec![3, 5, 8],
            weight_decays: vec![0.0, 1e-4],
            width: 4,
            init_layer_norm: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    #[serde(default = "default_dataset")]
    pub dataset: DatasetSpec,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "desk_flow")]
    pub flow: FlowConfig,
    #[serde(default)]
    pub init: InitConfig,
    /// Worker threads; `None` uses every available core.
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Converged first layers must have stable rank above `1 + margin`.
    #[serde(default = "default_margin")]
    pub stable_rank_margin: f64,
    /// Widening applied to every interval in the event check.
    #[serde(default = "default_slack")]
    pub slack: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub depth_sweep: DepthSweepConfig,
}

fn default_dataset() -> DatasetSpec {
    DatasetSpec::Section31
}
fn default_trials() -> usize {
    64
}
fn default_margin() -> f64 {
    0.05
}
fn default_slack() -> f64 {
    1e-3
}
fn default_bins() -> usize {
    20
}

/// Desk-scale flow: step `1e-3` for `3e5` steps, whole budget used.
pub fn desk_flow() -> FlowConfig {
    FlowConfig {
        step: 1e-3,
        max_steps: 300_000,
        early_stop: false,
        ..FlowConfig::default()
    }
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment,
            dataset: default_dataset(),
            trials: default_trials(),
            flow: desk_flow(),
            init: InitConfig::default(),
            jobs: None,
            master_seed: 0,
            output_dir: None,
            stable_rank_margin: default_margin(),
            slack: default_slack(),
            bins: default_bins(),
            depth_sweep: DepthSweepConfig::default(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// 288 trials at step `1e-4` for `3e6` steps.
    pub fn paper_scale(mut self) -> Self {
        self.trials = 288;
        self.flow.step = 1e-4;
        self.flow.max_steps = 3_000_000;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        self.flow.validate()?;
        if !(self.init.w_radius >= 0.0 && self.init.v_radius >= 0.0) {
            return bad("init radii must be non-negative".into());
        }
        if self.init.hidden == 0 {
            return bad("hidden width must be positive".into());
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1".into());
        }
        if self.bins == 0 {
            return bad("bins must be at least 1".into());
        }
        if !(self.stable_rank_margin >= 0.0 && self.slack >= 0.0) {
            return bad("margin and slack must be non-negative".into());
        }
        let sweep = &self.depth_sweep;
        if sweep.depths.iter().any(|&k| k < 2) || sweep.width == 0 {
            return bad("depth sweep needs depths >= 2 and a positive width".into());
        }
        if sweep.weight_decays.iter().any(|&l| !(l >= 0.0)) {
            return bad("weight decays must be non-negative".into());
        }
        if !(sweep.init_layer_norm > 0.0) {
            return bad("init_layer_norm must be positive".into());
        }
        self.dataset.build().map(|_| ())
    }
}

/// Seed of trial `i`: the `i`-th output of a SplitMix64 stream started at
/// `master`. Distinct trials get well-mixed, independent seeds and the value
/// does not depend on scheduling.
pub fn trial_seed(master: u64, i: u64) -> u64 {
    let mut z = master.wrapping_add(i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::check_dataset;

    #[test]
    fn section31_dataset() {
        let d = dataset_section31();
        assert!((crate::linalg::norm(&d.input(0)) - 1.0).abs() < 1e-15);
        assert!((crate::linalg::norm(&d.input(1)) - 1.0).abs() < 1e-15);
        let c = crate::linalg::dot(&d.input(0), &d.input(1));
        assert!((c - (-1.0 + 0.9801) / 1.9801).abs() < 1e-15);
        assert!((c + 0.010050).abs() < 1e-6);
        assert_eq!(d.y().unwrap(), &Mat::identity(2));
        let a = check_dataset(&d).unwrap();
        assert!((a - 1.58085).abs() < 1e-5);
    }

    #[test]
    fn angle_dataset() {
        let a = 3.0 * std::f64::consts::PI / 4.0;
        let d = dataset_with_angle(a).unwrap();
        assert!((check_dataset(&d).unwrap() - a).abs() < 1e-12);
        assert!(dataset_with_angle(0.0).is_err());
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let s: Vec<u64> = (0..1000).map(|i| trial_seed(7, i)).collect();
        let mut u = s.clone();
        u.sort_unstable();
        u.dedup();
        assert_eq!(u.len(), s.len());
        assert_eq!(trial_seed(7, 3), s[3]);
        assert_ne!(trial_seed(8, 3), s[3]);
    }

    #[test]
    fn splitmix_reference_values() {
        // First outputs of SplitMix64 seeded with 0 (published test vector).
        assert_eq!(trial_seed(0, 0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(trial_seed(0, 1), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn config_round_trip_and_defaults() {
        let cfg = ExperimentConfig::from_json_str(
            r#"{"schema_version": 1, "experiment": "histogram", "master_seed": 5}"#,
        )
        .unwrap();
        assert_eq!(cfg.trials, 64);
        assert_eq!(cfg.flow.step, 1e-3);
        assert_eq!(cfg.flow.max_steps, 300_000);
        assert_eq!(cfg.dataset, DatasetSpec::Section31);
        let back = ExperimentConfig::from_json_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let paper = cfg.paper_scale();
        assert_eq!((paper.trials, paper.flow.step, paper.flow.max_steps), (288, 1e-4, 3_000_000));
    }

    #[test]
    fn bad_configs_are_rejected() {
        for s in [
            r#"{"schema_version": 2, "experiment": "histogram"}"#,
            r#"{"schema_version": 1, "experiment": "nope"}"#,
            r#"{"schema_version": 1, "experiment": "thm3", "jobs": 0}"#,
            r#"{"schema_version": 1, "experiment": "thm3", "bogus": 1}"#,
            r#"{"schema_version": 1, "experiment": "thm3", "flow": {"step": -1}}"#,
            r#"{"schema_version": 1, "experiment": "thm3", "dataset": {"kind": "angle", "angle": 4}}"#,
        ] {
            assert!(ExperimentConfig::from_json_str(s).is_err(), "{s}");
        }
    }
}
