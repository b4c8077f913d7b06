//! Nodal length statistics of random spherical harmonics: Legendre kernels,
//! Kac-Rice two-point correlations, semi-analytic variances and a Monte Carlo
//! harness built on field synthesis and contour extraction.

pub mod covariance;
pub mod error;
pub mod field;
pub mod harness;
pub mod kacrice;
pub mod legendre;
pub mod linstat;
pub mod nodal;
pub mod quad;

pub use error::{Error, Result};
pub use field::{GridField, GridSpec, HarmonicSample};
pub use harness::{EnsembleConfig, MomentReport, SlopeFit};
pub use kacrice::{KacRiceConfig, TwoPointValue, VariancePrediction};
pub use legendre::LegendreTriplet;
pub use linstat::{TestFunction, TestFunctionKind, WTransform};
pub use nodal::{NodalLineSet, NodalSegment};
