//! The learnable reward head: featurization, forward pass, analytic
//! gradients, the BTL preference loss and per-round training.

mod features;
mod head;
mod history;
mod loss;
mod train;

pub use features::{Embedding, FeatureTable, RunningFeature};
pub use head::{Activation, GradMode, GradientVector, RewardParams};
pub use history::{History, PreferenceRecord};
pub use loss::{btl_loss, btl_loss_encoded, encode_history, pair_loss, EncodedPair};
pub use train::{fit, FitOutcome, TrainOpts};
