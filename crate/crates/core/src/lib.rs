//! Point cloud semantic communication simulator.
//!
//! The crate covers the whole transmission chain for voxelized point clouds:
//! cube partitioning, a trainable 3D-convolutional joint source-channel codec,
//! latent-importance rate control, AWGN/Rayleigh channels with a digital
//! baseline, two-user model division multiple access (MDMA), geometry quality
//! metrics and semantic spectral efficiency optimization.
//!
//! Data-parallel loops (batch members, cubes, sweep cells) go through
//! [`exec::Exec`], which uses rayon when the `parallel` feature is enabled and
//! falls back to plain iteration otherwise. Results are always collected in
//! input order, so output never depends on the thread count.

pub mod channel;
pub mod codec;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod mdma;
pub mod metrics;
pub mod pipeline;
pub mod pointcloud;
pub mod rate;
pub mod seed;
pub mod sse;
pub mod sweep;
pub mod tensornet;
pub mod voxel;

pub use error::{Error, Result};
pub use exec::Exec;
pub use pointcloud::PointCloud;
pub use voxel::Cube;
