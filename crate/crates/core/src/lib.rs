//! Multimodal flow matching for mixed-integer linear programs.
//!
//! The crate learns a joint generative model over the integer and continuous
//! variables of MILP solutions, samples candidates under objective and
//! feasibility guidance, and feeds the resulting integer marginals to
//! probability-driven primal heuristics solved over a pluggable backend.
//!
//! Module map:
//!
//! - [`milp`]: instance model, evaluation, guidance target, JSON format
//! - [`gen`]: synthetic benchmark families and dataset labeling
//! - [`graph`]: tripartite graph encoding and time-augmented features
//! - [`model`]: the residual tripartite GCN and its checkpoints
//! - [`flow`]: conditional paths, velocity, rate matrix, loss
//! - [`guidance`]: guided sampling loop producing candidate pools
//! - [`downstream`]: Neural Diving, Predict&Search, PMVB, Apollo
//! - [`backend`]: simplex, branch and bound, brute force, external solver
//! - [`train`], [`eval`], [`metrics`], [`config`]: the experiment harness
//! - [`selfcheck`]: the verification suite behind `fmip selfcheck`

pub mod backend;
pub mod config;
pub mod downstream;
pub mod error;
pub mod eval;
pub mod flow;
pub mod gen;
pub mod graph;
pub mod guidance;
pub mod lpfile;
pub mod metrics;
pub mod milp;
pub mod model;
pub mod rng;
pub mod selfcheck;
pub mod tape;
pub mod train;

pub use error::{FmipError, Result};
