//! Neural-tangent-kernel analysis of autoencoders used as iterated maps.
//!
//! The crate computes infinite-width NTKs (quadrature recursion for any
//! activation, closed form for the two-layer erf-scaled sigmoid), the
//! kernel-regression map `f∞` and its Jacobian `J∞`, trains finite networks
//! by full-batch gradient descent, and probes fixed points and their basins.
//! [`theory`] turns the analytic statements about these Jacobians into
//! numerical checks and [`experiments`] runs seeded sweeps that emit CSV/JSON.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activation;
pub mod attractor;
pub mod data;
pub mod error;
pub mod experiments;
pub mod idx;
pub mod kernels;
pub mod net;
pub mod quadrature;
pub mod regression;
pub mod rng;
pub mod spectrum;
pub mod theory;

pub use activation::{Activation, Profile};
pub use attractor::{basin_probe, iterate, BasinReport, IterateConfig};
pub use data::Dataset;
pub use error::{NtkError, Result};
pub use kernels::{Kernel, KernelSystem};
pub use net::{NetworkParams, TrainConfig, TrainReport};
pub use regression::{f_infinity, jacobian_infinity, InitSurrogate};
pub use spectrum::{spectrum, SpectrumReport};
