//! Segmentation scoring: confusion matrices, per-class IoU, and the
//! cross-entropy / Tversky training losses as plain numerics.

mod confusion;
mod loss;

pub use confusion::{iou, ClassScore, ConfusionMatrix, EvalReport};
pub use loss::{
    combined_loss, cross_entropy, soft_dice, tversky, LossParams, ProbabilityImage,
};
