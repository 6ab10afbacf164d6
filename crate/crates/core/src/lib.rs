//! Numerical toolkit for generalized Hausdorff dimensions of spectral measures.
//!
//! Gauges are stored in log form over `s = ln(1/t)`, transfer matrices carry
//! an explicit log scale, and every limit is replaced by a trend test that may
//! answer "undetermined".

pub mod borel;
pub mod dynamics;
pub mod error;
pub mod gauge;
pub mod halfline;
pub mod hausdorff_set;
pub mod linalg;
pub mod logmath;
pub mod measure;
pub mod rank_one;
pub mod runner;
pub mod sparse_barrier;
pub mod trend;

pub use error::{Error, Result};
pub use gauge::{CompleteFamily, DimensionValue, FamilySpec, GaugeFunction, GaugeSpec, Ordering};
pub use measure::SpectralMeasure;
