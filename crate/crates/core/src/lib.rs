//! Unsupervised anomaly detection on multi-view attributed networks.
//!
//! Each view of the network is encoded with a low-pass graph filter
//! `g(Ã^L X W)`, the view embeddings are fused with learned attention, and the
//! model is trained to reconstruct every view's adjacency and the node
//! attributes. Nodes whose structure or attributes reconstruct poorly are
//! ranked as anomalous.
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`graph`], [`io`] | network data model, projection, normalization, file formats |
//! | [`tensor`], [`sparse`] | dense and CSR kernels |
//! | [`model`] | forward pass, losses, anomaly scores |
//! | [`tape`], [`train`] | reverse-mode gradients, Adam, training loop, checkpoints |
//! | [`lab`] | anomaly injection, synthetic benchmarks, Accuracy@K / ROC / AUC |
//! | [`spectral`] | graph frequencies and the encoder's frequency response |

pub mod error;
pub mod graph;
pub mod io;
pub mod lab;
pub mod model;
pub mod rng;
pub mod sparse;
pub mod spectral;
pub mod structure;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{MultiViewNetwork, NodeId, ViewGraph};
pub use lab::{GroundTruth, InjectionSpec, Mechanism};
pub use model::{EncoderMode, ForwardOutputs, FusionMode, HyperParams, ModelParams, Prepared};
pub use sparse::SparseMatrix;
pub use spectral::SpectrumReport;
pub use tensor::{Activation, DenseMatrix};
pub use train::{AdamState, Checkpoint, TrainReport};
