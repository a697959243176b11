//! Randomization-based logrank and stratified logrank tests for censored
//! outcomes.
//!
//! The crate treats the units' potential event times as a fixed finite
//! population; all randomness comes from treatment assignment and
//! censoring. On top of the streaming statistic ([`logrank`]) it provides
//! the exact finite-population moments of the score ([`moments`]), an
//! exhaustive small-population enumeration oracle that verifies the
//! distributional claims to floating-point accuracy ([`oracle`]), a
//! reproducible Monte Carlo engine ([`simulation`]), and distribution
//! diagnostics for simulated statistics ([`diagnostics`]).

pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod logrank;
pub mod moments;
pub mod oracle;
pub mod simulation;
pub mod survival;

pub use error::{Error, Result};
pub use logrank::{
    logrank_components, logrank_statistic, stratified_logrank, two_sided_p_value,
    LogrankComponents, LogrankResult, StratifiedResult, StratumContribution,
};
pub use survival::{
    contingency_at, hypergeometric_mean_var, CensoringDist, CensoringModel, ContingencyTable,
    DiscreteDist, EmpiricalSurvival, EventGrid, FinitePopulation, StratumMechanism, SurvivalRecord,
};
