//! Graph convolutional networks on molecular graphs, class-specific atom
//! heatmaps (gradient saliency, CAM, Grad-CAM, excitation backprop and its
//! contrastive variant), explanation quality metrics, and mining of salient
//! substructures as functional-group candidates.
//!
//! Pipeline: [`smiles`] / [`datasets`] build [`graph::AttributedGraph`]s,
//! [`train`] fits a [`model::ModelParams`], [`explainers`] turn a
//! [`model::ForwardTrace`] into [`explainers::Heatmap`]s, [`metrics`] scores
//! them and [`miner`] ranks the recurring activated substructures.

pub mod checkpoint;
pub mod datasets;
pub mod error;
pub mod explainers;
pub mod graph;
pub mod metrics;
pub mod miner;
pub mod model;
pub mod smiles;
pub mod train;

pub use error::{Error, Result};
