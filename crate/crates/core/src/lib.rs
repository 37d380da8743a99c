//! Temporal streaming batch PCA for multivariate time series.
//!
//! A dataset of `B` instances, `N` time points and `d` variables is reduced
//! to `k` components by walking the time axis in order. Each time point's
//! `B × d` slice refines an orthonormal `d × k` basis through history-weighted
//! power iteration; every block of `T` time points is projected on the basis
//! reached at the end of that block.
//!
//! ```
//! use tsbpca_core::{compress, eval, RunConfig};
//!
//! let spec = eval::preset("stationary", 7).unwrap();
//! let ds = eval::generate(&spec, 7).unwrap();
//! let rep = compress(&ds, &RunConfig::new(10, 2).with_seed(7)).unwrap();
//! assert_eq!(rep.values.dim(), (64, 200, 2));
//! assert_eq!(rep.eigen_trajectory.len(), 20);
//! ```

pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod streaming;
pub mod types;

pub use error::{Error, Result};
pub use streaming::{compress, BatchReport, InnerIterationReport, StreamingPca};
pub use types::{
    validate_dataset, BatchView, CompactRepresentation, CounterMode, Dataset, EigenSnapshot,
    Pooling, ProjectionState, RunConfig, TimePointSlice,
};
