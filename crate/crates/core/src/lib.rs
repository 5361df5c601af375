//! Robust aggregation toolkit for federated learning.
//!
//! Everything here operates on a [`VectorSet`]: `n` update vectors of a
//! common dimension `d`. Aggregators reduce a set to one vector,
//! pre-aggregators map a set to another set, and attacks produce the
//! vectors a Byzantine participant would submit given the honest ones.
//!
//! The math is generic over the floating-point type through [`Scalar`];
//! the `*64` aliases below fix it to `f64`, which is what the simulator
//! and benchmark harness use.

pub mod aggregators;
pub mod attacks;
pub mod error;
pub mod numerics;
pub mod preaggregators;

pub use aggregators::{Aggregator, AggregatorKind, AggregatorSpec, Params};
pub use attacks::{AttackContext, AttackKind, AttackSpec, OptimizedAttack};
pub use error::{Error, Result};
pub use numerics::{Scalar, VectorSet};
pub use preaggregators::{Pipeline, PreAggregator, PreAggregatorKind, PreAggregatorSpec};

pub type VectorSet64 = VectorSet<f64>;
pub type Aggregator64 = Aggregator<f64>;
pub type Pipeline64 = Pipeline<f64>;
pub type VectorSet32 = VectorSet<f32>;
pub type Aggregator32 = Aggregator<f32>;
pub type Pipeline32 = Pipeline<f32>;
