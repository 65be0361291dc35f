//! Demand shut-off for islanded AC microgrids.
//!
//! The solver alternates a continuous optimal power flow at fixed switch
//! values ([`ao1`]) with a sequence of Boolean quadratic programs over the
//! switches driven by a complementarity penalty homotopy ([`ao2`]). The
//! outer loop lives in [`driver`].

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ao1;
pub mod ao2;
pub mod cases;
pub mod check;
pub mod config;
pub mod driver;
pub mod error;
pub mod grid;
pub mod ipm;
pub mod output;
pub mod power;
pub mod qp;

pub use error::{ConfigError, ModelError, OutputError, ParseError, ScenarioError, SolveError};
pub use grid::{apply_scenario, build_admittance, parse_case, serialize_case, GridCase, ScenarioConfig};
pub use power::{grad_phi, phi, InputVector, Network, State, SwitchVector};
