//! Charts, atlases, coordinate maps with jets, and smooth maps.

pub mod builtins;
pub mod chart;
pub mod checks;
pub mod coord_map;
pub mod manifold;
pub mod smooth_map;

pub use builtins::{euclidean, euclidean_box, stereographic_pair, torus_angles, ManifoldDescriptor};
pub use chart::{Chart, ChartId, Domain, Point, TangentVec};
pub use coord_map::{
    AppendIdentity,
    compose, smooth, BundleTransition, Compose, Constant, CoordMap, DerivativeMode, FiniteDifference, Identity,
    Inversion, JacobianField, Linear, Select, Smooth, SmoothFn, TangentLift,
};
pub use manifold::{tangent_manifold, with_passive_coords, ChartedManifold, TransitionTable};
pub use smooth_map::SmoothMap;
