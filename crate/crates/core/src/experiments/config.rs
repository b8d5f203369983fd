//! Flat `key = value` experiment configuration.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::activation::Activation;
use crate::error::{NtkError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    DepthSingle,
    LinearHist,
    RadiusCurve,
    BasinCurve,
    MnistBasin,
    ActivationCompare,
    VerifyAll,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 7] = [
        ExperimentId::DepthSingle,
        ExperimentId::LinearHist,
        ExperimentId::RadiusCurve,
        ExperimentId::BasinCurve,
        ExperimentId::MnistBasin,
        ExperimentId::ActivationCompare,
        ExperimentId::VerifyAll,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentId::DepthSingle => "depth_single",
            ExperimentId::LinearHist => "linear_hist",
            ExperimentId::RadiusCurve => "radius_curve",
            ExperimentId::BasinCurve => "basin_curve",
            ExperimentId::MnistBasin => "mnist_basin",
            ExperimentId::ActivationCompare => "activation_compare",
            ExperimentId::VerifyAll => "verify_all",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = NtkError;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .iter()
            .copied()
            .find(|id| id.name() == s)
            .ok_or_else(|| NtkError::Config(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = NtkError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(NtkError::Config(format!("field `format`: expected csv or json, got `{s}`"))),
        }
    }
}

/// How `f₀`/`J₀` and the trained map are realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// NTK regression with `f₀ ≡ 0`.
    Zero,
    /// NTK regression with a sampled finite-width `f₀`.
    Surrogate,
    /// Full-batch gradient descent on a finite network.
    Train,
}

impl FromStr for Mode {
    type Err = NtkError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Mode::Zero),
            "surrogate" => Ok(Mode::Surrogate),
            "train" => Ok(Mode::Train),
            _ => Err(NtkError::Config(format!("field `mode`: expected zero, surrogate or train, got `{s}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Zero => "zero",
            Mode::Surrogate => "surrogate",
            Mode::Train => "train",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub id: ExperimentId,
    pub n0: usize,
    /// Training-set sizes.
    pub n: Vec<usize>,
    pub radii: Vec<f64>,
    pub widths: Vec<usize>,
    pub depths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub mode: Mode,
    pub seed: u64,
    pub repetitions: usize,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub learning_rate: f64,
    pub threshold: f64,
    pub max_iter: usize,
    /// Basin noise levels, relative to `r` unless `noise_absolute`.
    pub noise: Vec<f64>,
    pub noise_absolute: bool,
    /// Perturbations per training point.
    pub basin_samples: usize,
    pub basin_iters: usize,
    pub basin_tol: f64,
    pub mnist_path: Option<PathBuf>,
    pub mnist_offset: usize,
    pub mnist_count: usize,
    /// Half-width of the "near 1" window.
    pub window: f64,
}

impl ExperimentConfig {
    /// Desk-scale defaults for `id`.
    pub fn new(id: ExperimentId) -> Self {
        let mut c = ExperimentConfig {
            id,
            n0: 32,
            n: vec![20],
            radii: vec![1.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0],
            widths: vec![1000],
            depths: vec![2],
            activations: vec![Activation::Sigmoid],
            mode: Mode::Zero,
            seed: 0,
            repetitions: 100,
            out: None,
            format: OutputFormat::Csv,
            learning_rate: 1.0,
            threshold: 1e-7,
            max_iter: 200_000,
            noise: vec![0.0, 0.05, 0.1, 0.2, 0.4],
            noise_absolute: false,
            basin_samples: 100,
            basin_iters: 50,
            basin_tol: 1e-2,
            mnist_path: None,
            mnist_offset: 0,
            mnist_count: 5,
            window: crate::spectrum::NEAR_ONE_WINDOW,
        };
        match id {
            ExperimentId::DepthSingle => {
                c.n = vec![1];
                c.depths = vec![2, 3, 4];
                c.radii = vec![32f64.sqrt()];
                c.mode = Mode::Surrogate;
            }
            ExperimentId::LinearHist => {
                c.n0 = 10;
                c.n = vec![2, 5, 8];
                c.radii = vec![1.0];
                c.mode = Mode::Surrogate;
            }
            ExperimentId::RadiusCurve => {}
            ExperimentId::BasinCurve => {
                c.n = vec![5];
                c.radii = vec![2.0, 20.0];
                c.widths = vec![10_000];
                c.mode = Mode::Train;
                c.repetitions = 1;
            }
            ExperimentId::MnistBasin => {
                c.n0 = 784;
                c.n = vec![5];
                c.radii = vec![10.0, 100.0, 1000.0];
                c.widths = vec![10_000];
                c.mode = Mode::Train;
                c.repetitions = 1;
            }
            ExperimentId::ActivationCompare => {
                c.activations =
                    vec![Activation::Sigmoid, Activation::ErfScaledSigmoid, Activation::Erf, Activation::Tanh];
            }
            ExperimentId::VerifyAll => c.repetitions = 1,
        }
        c
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let err = |e: &dyn fmt::Display| NtkError::Config(format!("field `{key}`: {e}"));
        fn list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
        where
            T::Err: fmt::Display,
        {
            v.split(',').map(|s| s.trim().parse::<T>().map_err(|e| format!("`{}`: {e}", s.trim()))).collect()
        }
        fn one<T: FromStr>(v: &str) -> std::result::Result<T, String>
        where
            T::Err: fmt::Display,
        {
            v.parse::<T>().map_err(|e| format!("`{v}`: {e}"))
        }
        match key {
            "id" | "experiment" => self.id = value.parse()?,
            "n0" => self.n0 = one(value).map_err(|e| err(&e))?,
            "n" => self.n = list(value).map_err(|e| err(&e))?,
            "r" | "radii" => self.radii = list(value).map_err(|e| err(&e))?,
            "width" | "widths" => self.widths = list(value).map_err(|e| err(&e))?,
            "depth" | "depths" => self.depths = list(value).map_err(|e| err(&e))?,
            "activation" | "activations" => self.activations = list(value).map_err(|e| err(&e))?,
            "mode" => self.mode = value.parse()?,
            "seed" => self.seed = one(value).map_err(|e| err(&e))?,
            "repetitions" => self.repetitions = one(value).map_err(|e| err(&e))?,
            "out" => self.out = Some(PathBuf::from(value)),
            "format" => self.format = value.parse()?,
            "learning_rate" | "lr" => self.learning_rate = one(value).map_err(|e| err(&e))?,
            "threshold" => self.threshold = one(value).map_err(|e| err(&e))?,
            "max_iter" => self.max_iter = one(value).map_err(|e| err(&e))?,
            "noise" => self.noise = list(value).map_err(|e| err(&e))?,
            "noise_absolute" => self.noise_absolute = one(value).map_err(|e| err(&e))?,
            "basin_samples" => self.basin_samples = one(value).map_err(|e| err(&e))?,
            "basin_iters" => self.basin_iters = one(value).map_err(|e| err(&e))?,
            "basin_tol" => self.basin_tol = one(value).map_err(|e| err(&e))?,
            "mnist_path" => self.mnist_path = Some(PathBuf::from(value)),
            "mnist_offset" => self.mnist_offset = one(value).map_err(|e| err(&e))?,
            "mnist_count" => self.mnist_count = one(value).map_err(|e| err(&e))?,
            "window" => self.window = one(value).map_err(|e| err(&e))?,
            _ => return Err(NtkError::Config(format!("unknown field `{key}`"))),
        }
        Ok(())
    }

    /// Applies every non-blank, non-`#` line of a `key = value` file.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| NtkError::Config(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Defaults for the `id` named in `text` (or `fallback`), then the file.
    pub fn from_text(text: &str, fallback: ExperimentId) -> Result<Self> {
        let id = text
            .lines()
            .filter_map(|l| l.trim().split_once('='))
            .find(|(k, _)| matches!(k.trim(), "id" | "experiment"))
            .map(|(_, v)| v.trim().parse())
            .transpose()?
            .unwrap_or(fallback);
        let mut cfg = ExperimentConfig::new(id);
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(NtkError::Config(format!("field `{field}`: {msg}")));
        if self.n0 == 0 {
            return bad("n0", "must be positive");
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return bad("n", "grid must be non-empty with positive entries");
        }
        if self.radii.is_empty() || self.radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return bad("radii", "grid must be non-empty with positive entries");
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad("widths", "grid must be non-empty with positive entries");
        }
        if self.depths.is_empty() || self.depths.contains(&0) {
            return bad("depths", "grid must be non-empty with positive entries");
        }
        if self.activations.is_empty() {
            return bad("activations", "list must be non-empty");
        }
        if self.repetitions == 0 {
            return bad("repetitions", "must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate", "must be positive");
        }
        if !(self.threshold > 0.0) {
            return bad("threshold", "must be positive");
        }
        if self.noise.is_empty() || self.noise.iter().any(|s| !(*s >= 0.0)) {
            return bad("noise", "grid must be non-empty and non-negative");
        }
        if self.basin_samples == 0 || self.basin_iters == 0 {
            return bad("basin_samples", "samples and iterations must be positive");
        }
        if !(self.window > 0.0) {
            return bad("window", "must be positive");
        }
        if self.id == ExperimentId::MnistBasin {
            if self.mnist_path.is_none() {
                return bad("mnist_path", "required for mnist_basin");
            }
            if self.mnist_count == 0 {
                return bad("mnist_count", "must be positive");
            }
            if self.mnist_count > 20 || self.widths.iter().any(|&w| w > 10_000) {
                log::warn!("mnist_basin beyond desk scale (20 images, width 1e4)");
            }
        }
        Ok(())
    }
}
