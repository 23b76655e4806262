pub mod calculus;
pub mod diff;
pub mod error;
pub mod flip;
pub mod grid;
pub mod lift;
pub mod ma;
pub mod ode;
pub mod ricci;

pub use calculus::{FormComponents, InvariantMetricChart, InvariantScalar};
pub use error::{Error, Result};
pub use grid::{BaseKind, ChartGrid, EndKind};
