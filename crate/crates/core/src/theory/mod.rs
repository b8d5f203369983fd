//! Numerical checks of the analytic claims about initial and trained Jacobians.
//!
//! Every check produces a [`CheckRecord`]; [`verify_all`] runs a desk-scale
//! selection of them.

mod init;
mod large_radius;
mod linear;
mod ordered;

use serde::Serialize;

pub use init::{
    init_norm_depth_scan, layer_moments, layer_moments_montecarlo, sample_init_jacobian, Concentration, DepthSamples,
    InitJacobianReport, InitNormConfig, LayerMoments, MomentCheckReport,
};
pub use large_radius::{
    antipodal_dataset, g2_spike, gradient_component_norms, parallel_inputs_check, GradientComponentReport,
    ParallelInputsReport,
};
pub use linear::{linear_region_check, rank_one_spectrum, LinearRegionReport, RankOneReport};
pub use ordered::{chi1_diagnostic, theta_diagonal_minimum, OrderedRegionReport};

use crate::error::Result;

/// How `observed` is compared with `predicted`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `|observed − predicted| ≤ tolerance`
    Close,
    /// `observed ≤ predicted + tolerance`
    AtMost,
    /// `observed ≥ predicted − tolerance`
    AtLeast,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub observed: f64,
    pub predicted: f64,
    pub tolerance: f64,
    pub relation: Relation,
    pub passed: bool,
    /// Soft checks are reported but never fail `verify`.
    pub hard: bool,
}

impl CheckRecord {
    fn build(name: &str, observed: f64, predicted: f64, tolerance: f64, relation: Relation) -> Self {
        let passed = observed.is_finite()
            && match relation {
                Relation::Close => (observed - predicted).abs() <= tolerance,
                Relation::AtMost => observed <= predicted + tolerance,
                Relation::AtLeast => observed >= predicted - tolerance,
            };
        CheckRecord { name: name.to_string(), observed, predicted, tolerance, relation, passed, hard: true }
    }

    pub fn close(name: &str, observed: f64, predicted: f64, tolerance: f64) -> Self {
        Self::build(name, observed, predicted, tolerance, Relation::Close)
    }

    pub fn at_most(name: &str, observed: f64, bound: f64, tolerance: f64) -> Self {
        Self::build(name, observed, bound, tolerance, Relation::AtMost)
    }

    pub fn at_least(name: &str, observed: f64, bound: f64, tolerance: f64) -> Self {
        Self::build(name, observed, bound, tolerance, Relation::AtLeast)
    }

    /// Marks the record as informational.
    pub fn soft(mut self) -> Self {
        self.hard = false;
        self
    }

    /// A failing hard check.
    pub fn is_hard_failure(&self) -> bool {
        self.hard && !self.passed
    }
}

impl std::fmt::Display for CheckRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = match (self.passed, self.hard) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "WARN",
        };
        let op = match self.relation {
            Relation::Close => "≈",
            Relation::AtMost => "≤",
            Relation::AtLeast => "≥",
        };
        write!(
            f,
            "{status} {}: observed {:.6e} {op} {:.6e} (tol {:.1e})",
            self.name, self.observed, self.predicted, self.tolerance
        )
    }
}

/// Desk-scale run of every check family.
pub fn verify_all(seed: u64) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    out.extend(init::records(seed)?);
    out.extend(linear::records(seed)?);
    out.extend(large_radius::records(seed)?);
    out.extend(ordered::records(seed)?);
    Ok(out)
}
