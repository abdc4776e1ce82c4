//! Numerical differential geometry on charted finite-dimensional manifolds:
//! sprays on anchored bundles, their exponentials, parallel transport,
//! Ehresmann connections of submersions, composite local additions, and
//! canonical charts on discretized mapping spaces.

pub mod bundle;
pub mod connection;
pub mod dual;
pub mod error;
pub mod geometry;
pub mod mapping;
pub mod pipeline;
pub mod ode;
pub mod partition;
pub mod report;
pub mod scenarios;
pub mod sample;
pub mod spray;
pub mod submersion;

pub use error::{Error, Result};
pub use geometry::{ChartedManifold, CoordMap, Point, SmoothMap, TangentVec};
