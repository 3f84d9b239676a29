use super::{Embedding, FeatureTable, History, RewardParams};
use crate::{Result, Scalar};

/// A preference with both sides already featurized: `(preferred, rejected)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPair<S> {
    pub winner: Embedding<S>,
    pub loser: Embedding<S>,
}

pub fn encode_history<S: Scalar>(hist: &History, table: &FeatureTable<S>) -> Result<Vec<EncodedPair<S>>> {
    hist.records()
        .iter()
        .map(|r| {
            let (w, l) = r.ordered();
            Ok(EncodedPair { winner: table.featurize(w)?, loser: table.featurize(l)? })
        })
        .collect()
}

/// Negative BTL log-likelihood of one pair, `softplus(-(r_w - r_l))`.
pub fn pair_loss<S: Scalar>(theta: &RewardParams<S>, pair: &EncodedPair<S>) -> Result<S> {
    let margin = theta.forward(&pair.winner)? - theta.forward(&pair.loser)?;
    Ok((-margin).softplus())
}

/// `-sum log sigma(r_w - r_l) + reg * |theta|^2` over encoded pairs.
pub fn btl_loss_encoded<S: Scalar>(theta: &RewardParams<S>, pairs: &[EncodedPair<S>], reg: S) -> Result<S> {
    if !(reg >= S::zero()) {
        return Err(crate::Error::InvalidArgument(format!("reg must be >= 0, got {reg}")));
    }
    let mut total = S::zero();
    for p in pairs {
        total += pair_loss(theta, p)?;
    }
    Ok(total + reg * theta.squared_norm())
}

/// Loss over a raw history, featurizing each record with `table`.
pub fn btl_loss<S: Scalar>(theta: &RewardParams<S>, hist: &History, table: &FeatureTable<S>, reg: S) -> Result<S> {
    btl_loss_encoded(theta, &encode_history(hist, table)?, reg)
}
