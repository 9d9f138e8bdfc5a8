pub mod data;
pub mod error;
pub mod estimators;
pub mod geograph;
pub mod harness;
pub mod inference;
pub mod kernels;
pub mod oracles;
pub mod ranks;
pub mod rng;
pub mod stats;

pub use data::DataMatrix;
pub use error::{KmacError, Result};
pub use estimators::{AssociationEstimate, CltScaling, EstimatorKind};
pub use geograph::{GeoGraph, GraphSpec, GraphStats, TieRule};
pub use kernels::{Kernel, KernelSpec};
