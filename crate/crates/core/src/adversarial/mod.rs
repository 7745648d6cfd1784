//! Domain-adversarial training pieces: gradient reversal, the proposal
//! domain classifier, the part-oriented adversarial losses and a small
//! synthetic demo that exercises them end to end.

pub mod classifier;
pub mod demo;
pub mod loss;
pub mod reference;

pub use classifier::{grl_backward, GradientReversal, TinyClassifier, DEFAULT_GRL_LAMBDA};
pub use loss::{
    focal_weight, loss_q_adv, loss_qb_adv, loss_qb_adv_grad, loss_qr_adv, loss_qrb_adv, query_proposal_features,
    AdvLoss, FeatureMap, FocalConfig, LayerInput, QueriedFeatures,
};
