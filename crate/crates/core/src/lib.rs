//! Test-time personalization of a frozen token model through a reward head
//! learned online from pairwise preferences.
//!
//! Each round builds two responses token by token: an exploitation sequence
//! that greedily maximizes base likelihood plus weighted reward, and an
//! exploration sequence that adds a gradient-space UCB bonus. A (simulated or
//! human) user picks one, the reward head is refit on the whole history, and
//! the loop repeats. After the learning phase the frozen head drives a plain
//! greedy decoder.
//!
//! The numeric modules are generic over [`Scalar`] (`f32` or `f64`); the
//! session layer, persistence and harness run in `f64`, see the aliases below.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandit;
pub mod error;
pub mod harness;
pub mod io;
pub mod oracle;
pub mod reward;
pub mod scalar;
pub mod sequence;
pub mod session;
pub mod tokenmodel;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use sequence::{Sequence, TokenId};

/// Reward-head parameters in double precision.
pub type RewardHead = reward::RewardParams<f64>;
/// Gradient-space covariance with its maintained inverse, double precision.
pub type Covariance = bandit::CovarianceState<f64>;
/// Frozen base policy in double precision.
pub type BaseModel = tokenmodel::TokenModel<f64>;
/// Token feature table used to embed sequences for the reward head.
pub type Features = reward::FeatureTable<f64>;
/// Simulated user in double precision.
pub type SimOracle = oracle::Oracle<f64>;
/// Next-token distribution in double precision.
pub type Dist = tokenmodel::ProbVector<f64>;
