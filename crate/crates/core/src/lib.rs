//! Trajectory-based discrete market models: minmax price bounds, arbitrage
//! analysis and trajectory-set generators.
//!
//! Every algorithm is generic over a floating-point [`Scalar`]; the aliases
//! at the crate root fix it to `f64` (or `f32` with the `32` suffix).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod arbitrage;
pub mod error;
pub mod generators;
pub mod io;
pub mod market;
pub mod martingale;
pub mod payoff;
pub mod pricing;
pub mod random;
pub mod scalar;
pub mod tree;
pub mod verify;

pub use error::{Error, Hypothesis, Result};
pub use scalar::Scalar;
pub use tree::{NodeId, StoppingTime, WValue};

pub type Tree = tree::TrajectoryTree<f64>;
pub type Tree32 = tree::TrajectoryTree<f32>;
pub type Market = market::Market<f64>;
pub type Market32 = market::Market<f32>;
pub type Portfolio = market::Portfolio<f64>;
pub type Portfolio32 = market::Portfolio<f32>;
pub type Payoff = payoff::Payoff<f64>;
pub type Payoff32 = payoff::Payoff<f32>;
pub type PriceBounds = pricing::PriceBounds<f64>;
pub type PriceBounds32 = pricing::PriceBounds<f32>;
pub type PortfolioConstraint = market::PortfolioConstraint<f64>;
pub type GridConfig = generators::GridConfig<f64>;
pub type MartingaleSamplerConfig = martingale::MartingaleSamplerConfig<f64>;
