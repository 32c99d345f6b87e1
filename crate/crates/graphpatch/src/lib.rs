//! Test-time ego-graph patching for degree-biased GCNs.
//!
//! A small two-layer graph convolutional network is trained as usual, then
//! frozen. A second model, the patcher, learns to generate virtual "patch"
//! nodes that are wired directly to an anchor node so that the frozen GCN's
//! prediction on the anchor improves. Training corrupts ego-graphs at a
//! decreasing sequence of strengths and asks the patched graph to match the
//! frozen GCN's predictions on less-corrupted views; at test time a few
//! patch nodes are appended to every ego-graph before prediction, which
//! lifts accuracy on low-degree nodes while leaving high-degree nodes
//! essentially unchanged.
//!
//! Module map:
//! - [`graph`]: sparse graph storage, ego-graph extraction, degree strata.
//! - [`tensor`] / [`nn`]: dense kernels, losses with analytic gradients,
//!   AdamW, finite-difference gradient checking.
//! - [`gnn`]: the frozen target classifier, its training and checkpoints.
//! - [`corruption`]: neighbor-dropping corruption and strength schedules.
//! - [`patcher`]: the patch generator and its training loop.
//! - [`eval`]: degree-stratified reports, patch-count sweeps, variance study.
//! - [`synth`]: degree-corrected SBM dataset generator.
//! - [`config`] / [`commands`]: run configuration, manifests, CLI entry points.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod corruption;
pub mod eval;
pub mod gnn;
pub mod graph;
pub mod nn;
pub mod patcher;
pub mod rng;
pub mod synth;
pub mod tensor;

mod error;

pub use error::{Error, Result};
