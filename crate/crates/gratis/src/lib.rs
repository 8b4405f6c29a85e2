//! Task-specific graph representations with learned topology and learned
//! multi-dimensional edge features, trained end to end with downstream
//! graph neural network predictors.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: dense f64 tensors with tape-based reverse-mode autodiff
//! - [`params`]: named parameter registry and tape binding
//! - [`gradcheck`]: central finite-difference gradient verification
//! - [`graph`], [`dataset_io`], [`datagen`]: graph samples, the on-disk
//!   dataset format, and deterministic synthetic task generators
//! - [`backbone`]: shared encoder producing a global context
//! - [`gd`], [`ttp`], [`mefg`]: graph definition, learned topology, and
//!   learned edge feature generation
//! - [`gnn`]: edge-aware message passing layers and task readout heads
//! - [`train`], [`checkpoint`]: losses, metrics, optimizer, schedules, and
//!   binary checkpoints
//! - [`pipeline`]: end-to-end model assembly, training loops, and ablations
//! - [`config`]: plain-text run configuration

pub mod backbone;
pub mod checkpoint;
pub mod config;
pub mod datagen;
pub mod dataset_io;
pub mod gd;
pub mod gnn;
pub mod gradcheck;
pub mod graph;
pub mod mefg;
pub mod params;
pub mod pipeline;
pub mod train;
pub mod ttp;
pub mod tensor;

/// Crate-wide error type aggregating the per-module failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] tensor::TensorError),
    #[error(transparent)]
    Param(#[from] params::ParamError),
    #[error(transparent)]
    Graph(#[from] graph::GraphError),
    #[error(transparent)]
    DatasetIo(#[from] dataset_io::DatasetIoError),
    #[error(transparent)]
    Gd(#[from] gd::GdError),
    #[error(transparent)]
    Ttp(#[from] ttp::TtpError),
    #[error(transparent)]
    Gnn(#[from] gnn::GnnError),
    #[error(transparent)]
    Train(#[from] train::TrainError),
    #[error(transparent)]
    Checkpoint(#[from] checkpoint::CheckpointError),
    #[error(transparent)]
    Pipeline(#[from] pipeline::PipelineError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
}
