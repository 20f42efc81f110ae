//! Dynamic sparse training for spiking neural networks.
//!
//! Layers are stored sparsely and evolve every epoch: a correlation-ranked
//! first-layer topology, variance-preserving weight initialisation, score
//! based pruning with removal of disconnected neurons, and regrowth guided by
//! length-3 paths in each layer's bipartite graph.

mod codec;
pub mod data;
pub mod error;
pub mod network;
pub mod neuron;
pub mod sparse;
pub mod topology;
pub mod weight_init;
pub mod evolution;
pub mod metrics;
pub mod config;
pub mod experiment;

pub use data::{LabeledDataset, SpikeTensor};
pub use error::{Error, Result};
pub use network::{ForwardTrace, Gradients, SnnNetwork};
pub use neuron::{LifState, SurrogateKind, SurrogateSpec};
pub use sparse::{SparseLayer, SparseMask};
