//! Stability analysis for BMAP/M/∞ and multiclass MBMAP/M/∞ queues.
//!
//! * [`model`]: model definition, validation and the log-moment stability test.
//! * [`ctmc`]: truncated level generator, GTH stationary solve, PGF and
//!   necessity cross-checks.
//! * [`lyapunov`]: drift vectors for `v(k, i) = log(k + e)` and Foster
//!   certificates.
//! * [`sim`]: exact event-driven simulation and the three-queue service-time
//!   coupling.

// `!(x > 0.0)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ctmc;
pub mod exec;
pub mod ext_real;
pub mod gth;
pub mod lyapunov;
pub mod matrix;
pub mod model;
pub(crate) mod series;
pub mod sim;

pub use exec::Execution;
pub use matrix::PhaseMatrix;
pub use model::{
    ArrivalStream, BatchSizeDistribution, BmapView, MbmapModel, ModelError, ModelFile, QueueSelector, StabilityVerdict,
    ValidatedModel,
};
pub use series::SeriesValue;
