//! Localizability-aware point-to-plane ICP.
//!
//! The crate covers the full pipeline: nearest-neighbor association,
//! linearization, per-direction localizability detection, constrained
//! solving, eigenvalue remapping baselines, a synthetic scan simulator for
//! degenerate worlds, trajectory and map metrics, and the experiment runner
//! behind the `xicp` command-line tool.

pub mod baseline;
pub mod constrained;
pub mod correspondence;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod io;
pub mod kdtree;
pub mod linalg;
pub mod localizability;
pub mod mapping;
pub mod metrics;
pub mod registration;
pub mod simulator;

pub use error::{Error, Result};
pub use geometry::{Frame, PointCloud, PoseUpdate, RigidTransform};
pub use registration::{run_icp, Handler, IcpConfig, IcpResult};
