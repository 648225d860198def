//! Scalable Bayesian spatial prediction via data subsetting.
//!
//! The model centers on a Gibbs-within-composite sampler whose per-iteration
//! cost depends only on the subsample size, never on the full dataset size:
//! an outer loop redraws a size-n inclusion set each iteration, an inner
//! Gibbs loop updates the process and parameters given that subset, and
//! per-location kriging draws predict at target locations. Around the
//! sampler sit the closed-form design-moment and spatial-property
//! calculators that characterize the model under SRS and stratified
//! sampling, a spectral simulator for large synthetic fields, and the
//! forecast-evaluation scores.

pub mod covariogram;
pub mod dataset;
pub mod design;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod properties;
pub mod rng;
pub mod sampler;
pub mod simulator;

pub use covariogram::{Covariogram, Location};
pub use dataset::{SpatialData, SpatialDataset};
pub use design::{DeltaDraw, DesignCoefficients, DesignSpec};
pub use error::{Error, Result};
pub use linalg::{cholesky, CholFactor, SymMatrix};
