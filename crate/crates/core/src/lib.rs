//! Slack calculus, slack graphs and chain proximality for horocycle orbit
//! closures in Z-covers of closed hyperbolic surfaces.

// `!(a > b)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod chain;
pub mod cover;
pub mod graph;
pub mod lipschitz;
pub mod moebius;
pub mod scalar;
pub mod slack;

pub use scalar::{wrap_angle, Real};

pub type Moebius64 = moebius::MoebiusElement<f64>;
pub type Tangent64 = moebius::UnitTangent<f64>;
pub type Line64 = moebius::GeodesicLine<f64>;
pub type Boundary64 = moebius::BoundaryPoint<f64>;
pub type Nau64 = moebius::NauDecomposition<f64>;
pub type SlackGraph64 = graph::SlackGraph<f64>;
