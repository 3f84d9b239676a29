//! Dueling-bandit decoding core: reward-guided scoring, exploitation and
//! exploration selection, and the gradient-space covariance.

mod covariance;
mod select;

pub use covariance::{cov_update, uncertainty_bonus, CovMode, CovarianceState};
pub use select::{score, score_in, select_exploit, select_explore, DecodeContext, Explored, Scored, ScoringConfig};
