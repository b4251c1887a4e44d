//! Learned CDF models: a two-layer recursive model index for bucketing
//! values by their empirical CDF, and a piecewise linear model with a
//! lower-bound guarantee for locating positions inside a sorted slice.

mod plm;
mod rmi;

pub use plm::{CdfSample, Plm, PlmSegment};
pub use rmi::Rmi;
