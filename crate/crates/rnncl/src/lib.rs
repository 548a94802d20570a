//! A self-contained laboratory for continual learning in recurrent
//! networks.
//!
//! The crate trains small Elman RNNs and LSTMs on a family of copy tasks
//! (basic, padded, permuted, pattern-manipulation), sequentially across
//! tasks, and compares ways of not forgetting: quadratic consolidation from
//! Fisher information or path integrals, per-task binary masking, coreset
//! distillation, generative replay through a sequential VAE, and a chunked
//! hypernetwork that generates the network's weights from task embeddings.
//! Alongside training it carries the analysis toolkit: per-timestep
//! intrinsic dimensionality, Fisher statistics, head-subspace geometry, and
//! exact linear-RNN constructions (block-diagonal subspace recurrences, a
//! queue-structured copy network).
//!
//! Everything runs on a hand-rolled `f64` tape autodiff engine — no BLAS,
//! no framework — so results are bit-reproducible from a master seed.
//! Start with the `examples/` directory for runnable tours of each piece,
//! or the `rnncl` binary (`run`, `grid`, `analyze`, `report`) for the
//! config-file driven harness.

pub mod analysis;
pub mod checkpoint;
pub mod cl;
pub mod data;
pub mod error;
pub mod fdcheck;
pub mod harness;
pub mod hnet;
pub mod linalg;
pub mod mat;
pub mod model;
pub mod optim;
pub mod ortho;
pub mod params;
pub mod rng;
pub mod tape;
pub mod theory;

pub use error::{Error, Result};
