//! Parameter estimation with homogeneous gradient flows.
//!
//! The crate estimates a parameter vector `theta` of the linear regression
//! `y(t) = u(t)^T theta(t)` from the regressor `u` and output `y`. It provides the
//! estimator vector fields, a persistence-of-excitation certifier, a fixed-step
//! integrator and the convergence-time bounds that follow from the certificate.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod integrator;
pub mod pe;
pub mod quadrature;
pub mod scenario;
pub mod signals;

pub use analysis::{
    classify, escape_bound, finite_time_bound, fixed_time_bound, BoundKind, BoundReport,
    ConvergenceClass, ConvergenceLabel,
};
pub use error::{Error, Result};
pub use estimators::{signed_power, EstimatorSpec, ExponentSet};
pub use integrator::{integrate, EstimationProblem, IntegratorConfig, Method, Trajectory};
pub use pe::{certify, power_bound, verify_power_bound, PeCertificate, PeSettings};
pub use scenario::{load_scenario, parse_scenario, Scenario, ScenarioConfig};
pub use signals::{orthogonal_sequence, ParameterSignal, ScalarSignal, SignalTerm, VectorSignal};
