//! Functional split placement for virtualized RANs.
//!
//! A crosshaul network connects distributed units (DUs) to one central unit
//! (CU); each base station runs under one of four functional splits that
//! trade DU compute for CU compute and transport load. This crate models the
//! resulting placement problem, evaluates its costs and constraints, solves
//! small instances exactly, and trains an attention-based sequence policy
//! with REINFORCE plus Lagrangian penalties to solve large ones.
//!
//! The pieces, bottom up:
//!
//! * [`topology`] — seeded Waxman graph generation, delay-shortest DU→CU
//!   routing, JSON round-trip.
//! * [`model`] — split options, per-assignment cost and constraint
//!   evaluation, D-RAN / C-RAN references.
//! * [`oracle`] — exhaustive and branch-and-bound exact solvers for
//!   optimality-gap measurement.
//! * [`nn`] — minimal tape-based reverse-mode autodiff: dense tensors,
//!   LSTM, additive attention, MLP, softmax sampling, Adam.
//! * [`policy`] — the encoder–decoder agent and the critic baseline.
//! * [`trainer`] — batched REINFORCE with penalized costs and a critic
//!   trained by MSE.
//! * [`inference`] — temperature sampling search and gap evaluation suites.
//! * [`cli`] — config-driven commands behind the `vransplit` binary.
//!
//! The `examples/` directory holds one runnable program per capability; start
//! with `cargo run --example generate_topology`.

pub mod cli;
pub mod inference;
pub mod model;
pub mod nn;
pub mod oracle;
pub mod policy;
pub mod topology;
pub mod trainer;

use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("instance too large: {0}")]
    Size(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error in {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("validation error in {path}: {message}")]
    Validation { path: PathBuf, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
