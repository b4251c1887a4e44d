//! Workload-learned multi-dimensional grid index over an in-memory column
//! store, plus the pieces needed to measure it honestly: six baseline
//! indexes, synthetic data/workload generators, a cost model with learned
//! weights, a layout optimizer, and a benchmark harness.
//!
//! The index (`grid::GridIndex`) lays a (d-1)-dimensional grid over the
//! data, sorts each cell by the remaining dimension, and answers
//! range-aggregation queries in three steps: project the query rectangle
//! onto the grid, refine each cell's physical range along the sort
//! dimension with a per-cell model, then scan. The grid geometry itself
//! (which dimension sorts, how many columns each grid dimension gets) is
//! chosen by `optimizer` to minimize predicted query time under the
//! calibrated `cost` model.
//!
//! Model arithmetic (CDF models, regression forests) is generic over the
//! floating-point scalar via [`Real`]; the concrete `f64` instantiations
//! used by the index live at the crate root as type aliases.

pub mod baselines;
pub mod bench;
pub mod cost;
pub mod error;
pub mod grid;
pub(crate) mod io;
pub mod models;
pub mod optimizer;
pub mod store;
pub mod workload;

pub use error::{Error, Result};

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar used by the learned models and cost arithmetic.
pub trait Real: Float + FromPrimitive + ToPrimitive + Debug + Default + Copy + 'static {}

impl Real for f32 {}
impl Real for f64 {}

/// Default-precision model types used by the index and the cost model.
pub type Rmi64 = models::Rmi<f64>;
pub type Plm64 = models::Plm<f64>;
pub type Forest64 = cost::RandomForest<f64>;
