use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{btl_loss_encoded, EncodedPair, RewardParams};
use crate::{Error, Result, Scalar};

/// Optimizer settings for one round of reward-head training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOpts {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay `1 / (N + 50)` with `N` the history size.
    pub weight_decay: bool,
}

impl Default for TrainOpts {
    fn default() -> Self {
        TrainOpts { lr: 5e-4, batch_size: 8, epochs: 50, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: true }
    }
}

impl TrainOpts {
    pub fn weight_decay_for(&self, n: usize) -> f64 {
        if self.weight_decay {
            1.0 / (n as f64 + 50.0)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome<S> {
    pub params: RewardParams<S>,
    pub initial_loss: S,
    pub final_loss: S,
}

/// Warm-started AdamW on the BTL objective.
///
/// Each epoch visits the pairs in a seeded random order in mini-batches. The
/// regularizer is split across batches in proportion to their size, so one
/// epoch's gradients sum to the full-objective gradient.
pub fn fit<S: Scalar>(
    theta: &RewardParams<S>,
    pairs: &[EncodedPair<S>],
    reg: S,
    opts: &TrainOpts,
    seed: u64,
) -> Result<FitOutcome<S>> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("cannot fit on an empty history".into()));
    }
    if opts.batch_size == 0 || !(opts.lr > 0.0) {
        return Err(Error::InvalidArgument("batch_size and lr must be positive".into()));
    }
    let initial_loss = btl_loss_encoded(theta, pairs, reg)?;
    let mut params = theta.clone();
    if opts.epochs == 0 {
        return Ok(FitOutcome { params, initial_loss, final_loss: initial_loss });
    }

    let n = pairs.len();
    let p = params.len();
    let lr = S::lit(opts.lr);
    let (b1, b2, eps) = (S::lit(opts.beta1), S::lit(opts.beta2), S::lit(opts.eps));
    let decay = S::one() - lr * S::lit(opts.weight_decay_for(n));
    let two_reg_per_pair = S::lit(2.0) * reg / S::lit(n as f64);

    let mut m = vec![S::zero(); p];
    let mut v = vec![S::zero(); p];
    let mut grad = vec![S::zero(); p];
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = S::zero();
        for batch in order.chunks(opts.batch_size) {
            grad.iter_mut().for_each(|g| *g = S::zero());
            for &i in batch {
                let pair = &pairs[i];
                let aw = params.activation(&pair.winner)?;
                let al = params.activation(&pair.loser)?;
                let margin = aw.value - al.value;
                epoch_loss += (-margin).softplus();
                // d/dtheta softplus(-(r_w - r_l)) = -sigma(-margin) (grad r_w - grad r_l)
                let c = (-margin).sigmoid();
                params.accumulate_grad(&aw, &pair.winner, -c, &mut grad);
                params.accumulate_grad(&al, &pair.loser, c, &mut grad);
            }
            let reg_scale = two_reg_per_pair * S::lit(batch.len() as f64);
            for (g, &w) in grad.iter_mut().zip(params.flat()) {
                *g += reg_scale * w;
            }

            step += 1;
            let bc1 = S::one() - b1.powi(step);
            let bc2 = S::one() - b2.powi(step);
            for (k, w) in params.flat_mut().iter_mut().enumerate() {
                let g = grad[k];
                m[k] = b1 * m[k] + (S::one() - b1) * g;
                v[k] = b2 * v[k] + (S::one() - b2) * g * g;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                *w = *w * decay - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        if !epoch_loss.is_finite() || params.flat().iter().any(|w| !w.is_finite()) {
            return Err(Error::TrainingDiverged { epoch, loss: epoch_loss.to_f64_lossy() });
        }
    }
    let final_loss = btl_loss_encoded(&params, pairs, reg)?;
    if !final_loss.is_finite() {
        return Err(Error::TrainingDiverged { epoch: opts.epochs, loss: final_loss.to_f64_lossy() });
    }
    Ok(FitOutcome { params, initial_loss, final_loss })
}
