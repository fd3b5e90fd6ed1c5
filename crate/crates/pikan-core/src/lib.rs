//! Physics-informed Kolmogorov-Arnold PointNet for natural-convection
//! inverse problems over many irregular geometries.
//!
//! The crate provides:
//!
//! - [`jacobi`]: Jacobi polynomial bases via the three-term recursion,
//!   with the Legendre/Chebyshev/Gegenbauer special cases;
//! - [`kan`]: shared KAN layers with `tanh` pre-scaling and trainable
//!   polynomial coefficients;
//! - [`network`]: the five point-cloud architecture variants (full KAN,
//!   full MLP, lightweight KAN, and the two KAN/MLP hybrids) with exact
//!   parameter counting and second-order spatial derivatives;
//! - [`physics`]: governing-equation residuals and the nine-term
//!   physics-informed loss;
//! - [`geometry`]: the 135 enclosure-with-polygon domains, point-cloud
//!   sampling, and sensor placement;
//! - [`groundtruth`]: manufactured solutions, observation extraction,
//!   and external solver-file ingestion;
//! - [`trainer`]: Adam optimization with min-loss checkpointing,
//!   relative-L2 error tables, and surface temperature profiles;
//! - [`dataset`]: the on-disk dataset layout;
//! - [`tape`] and [`jet`]: the differentiable-evaluation substrate the
//!   networks train through.

pub mod dataset;
pub mod error;
pub mod geometry;
pub mod groundtruth;
pub mod jacobi;
pub mod jet;
pub mod kan;
pub mod network;
pub mod physics;
pub mod tape;
pub mod trainer;

pub use error::{Error, Result};
pub use geometry::{CloudCounts, GeometrySpec, PointCloud, SensorCounts, Shape};
pub use groundtruth::{FieldSolution, ManufacturedCase};
pub use jacobi::JacobiParams;
pub use network::{NetworkConfig, NetworkState, Variant};
pub use physics::{FieldDerivatives, FluidParams, LossBreakdown, Observations};
pub use trainer::{TrainConfig, TrainHistory};
