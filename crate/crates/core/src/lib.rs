//! Optimal power flow for hybrid AC / multi-terminal DC grids via a semidefinite
//! relaxation, with rank diagnostics, voltage recovery and independent
//! verification of the recovered operating point.

pub mod case_file;
pub mod error;
pub mod matpower;
pub mod matrices;
pub mod network;
pub mod pipeline;
pub mod recovery;
pub mod relaxation;
pub mod report;
pub mod sdp;
pub mod verifier;

pub use error::{Error, Result};
pub use network::NetworkCase;
pub use pipeline::{solve_case, PipelineOptions, SolveOutcome};
