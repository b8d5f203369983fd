//! Largest eigenvalue norm of the zero-mode `J∞` against the input radius,
//! written as CSV through the experiment harness.

use ntkae::experiments::{emit, run_experiment, ExperimentConfig, ExperimentId, OutputFormat};
use ntkae::Activation;

fn main() -> ntkae::Result<()> {
    let mut cfg = ExperimentConfig::new(ExperimentId::RadiusCurve);
    cfg.activations = vec![Activation::ErfScaledSigmoid];
    cfg.repetitions = 3;
    let table = run_experiment(&cfg)?;
    emit(&table, OutputFormat::Csv, None)
}
