//! First-order critical points of smooth nonconvex functions from gradient
//! queries and a budget of approximate Hessian queries.
//!
//! The entry point is [`dispatcher::find_critical_point`]. It runs the
//! restarted solver when the gradient-Lipschitz constant is small enough and
//! otherwise the spectral reduction. Every oracle call is charged to a
//! [`oracle::QueryLedger`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agd_core;
pub mod bounds;
pub mod dispatcher;
pub mod error;
pub mod oracle;
pub mod reduction;
pub mod restarted;
pub mod spectral;

pub use dispatcher::{fd_pipeline, find_critical_point, Branch, DispatchDecision, Solution};
pub use error::{Error, Result};
pub use oracle::{make_test_objective, FamilyParams, HessianOracle, Objective, OracleMode, QueryLedger};
pub use restarted::{SolverOptions, SolverReport, Termination};
