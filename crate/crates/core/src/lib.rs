//! Webpage layout quality scoring with graph neural networks.
//!
//! HTML is parsed into a DOM tree with estimated geometry ([`dom`]), turned
//! into a layout graph with a virtual hub node ([`graph`]), featurized
//! ([`features`]) and scored by a GAT or GIN model ([`model`]) built on a
//! small reverse-mode autodiff engine ([`tensor`]). [`train`] fits the model,
//! [`metrics`] evaluates it, [`synth`] generates labeled corpora, and
//! [`pipeline`] with [`store`] covers offline scoring and reranking.

pub mod config;
pub mod dom;
pub mod error;
pub mod features;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod store;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
