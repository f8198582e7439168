//! Rarely-switching linear contextual bandits.
//!
//! Per-arm ridge estimates feed a joint confidence ellipsoid; linear
//! policies `argmax_a sᵀθ̃^a` keep their parameters until the ellipsoid
//! rules them out. The [`harness`] runs these policies against synthetic and
//! IHDP environments and aggregates regret, change counts and baseline
//! exposure.

pub mod environments;
pub mod error;
pub mod estimation;
pub mod geometry;
pub mod harness;
pub mod policies;

pub use error::{Error, Result};
pub use estimation::{ArmEstimate, ConfidenceSet};
pub use harness::{aggregate, emit_csv, run_experiment, AggregateSummary, ExperimentConfig, RunMetrics};
pub use geometry::{CyclicOrdering, DifferenceMap, EllipsoidRegion};
pub use policies::{Algorithm, OptimizerConfig, PolicyState};
