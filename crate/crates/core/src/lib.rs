//! Joint power control and time division for dense Wi-Fi deployments.
//!
//! A centralized controller picks per-link transmit powers that maximize an
//! alpha-fair utility of the resulting rates, subject to per-transmitter
//! power caps and a carrier-sense threshold. The optimizer is a branch and
//! bound over rate vectors ([`bnb`]); [`scheduler`] reruns it every slot with
//! history-dependent weights so that links which cannot coexist share the
//! channel in time.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bnb;
pub mod error;
pub mod experiment;
pub mod feasibility;
pub mod rate_model;
pub mod scheduler;
pub mod topology;

pub use bnb::{solve, Solution, SolverOptions, Status};
pub use error::{Error, Result};
pub use feasibility::{solve_powers, verify, PowerSolution, VerifyOptions, VerifyReport};
pub use rate_model::{RateCurve, UtilityConfig};
pub use topology::{NetworkInstance, NodePlacement};
