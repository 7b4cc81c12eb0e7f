//! RAW-to-RGB demosaicing and enhancement with a dual-path network.
//!
//! The network pairs a quarter-resolution residual-in-residual trunk (the
//! global path) with a full-resolution stack of multi-scale residual blocks
//! (the local path), and adds a fixed-resolution pyramid encoder vector to
//! the fused features. Because parameter shapes never depend on input size,
//! one set of weights can be trained on progressively larger patches and
//! evaluated at any resolution.
//!
//! Modules:
//!
//! - [`cfa`]: Bayer packing, synthetic RAW generation, crop/flip augmentation
//! - [`model`]: the network, its blocks and padded inference
//! - [`train`]: L1 loss, Adam, progressive-resolution schedule, checkpoints
//! - [`ensemble`]: flip self-ensemble and epoch ensemble
//! - [`metrics`]: PSNR and SSIM
//! - [`memory`]: analytic activation-memory estimator
//! - [`dataset`]: synthetic paired datasets and PNG IO
//! - [`config`]: run configuration and presets
//! - [`cli`]: the `hern` command-line tool
//!
//! Runnable walkthroughs of each capability live in `examples/`.

pub mod cfa;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod graph;
pub mod kernels;
pub mod memory;
pub mod metrics;
pub mod model;
pub mod params;
pub mod seed;
pub mod tensor;
pub mod train;

pub use cfa::{BayerMosaic, FlipTransform, Gains, PairedSample, RawPatch, RgbImage};
pub use error::{HernError, Result};
pub use model::{Hern, ModelConfig};
pub use params::ModelParams;
pub use tensor::{Scalar, Tensor};
