//! Wrapping statistical procedures so that synthetic data can sharpen them
//! without loosening their error guarantees.

pub mod conformal;
pub mod error;
pub mod gespi;
pub mod hypothesis;
pub mod io;
pub mod lattice;
pub mod multiple;
pub mod numeric;
pub mod oracles;
pub mod sim;

pub use error::{Error, Result};
pub use gespi::{
    gespi, gespi_one_sided, gespi_two_sided, BaseProcedure, GespiConfig, GespiOutput, Variant,
};
pub use lattice::{
    BinaryDecision, Conservativeness, Lattice, PartialAction, RejectionSet, ThresholdAction,
};
pub use sim::{ExperimentSpec, Method, Metric, MetricRow, MetricsTable, Task};
