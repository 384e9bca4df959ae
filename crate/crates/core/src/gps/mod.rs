//! A GPS graph transformer: gated message passing plus global attention per
//! layer, with a trainer for node classification.

mod layer;
mod model;
mod mpnn;
pub mod nn;
mod train;

pub use layer::{gps_layer_backward, gps_layer_forward, gps_layer_forward_train, GpsLayerParams, LayerShape, LayerTape};
pub use model::{model_backward, model_forward, model_forward_tape, GpsModel, ModelConfig, ModelTape, PeKind};
pub use mpnn::{mpnn_forward, MpnnParams};
pub use nn::{LayerNorm, Linear, Params};
pub use train::{
    evaluate, loss_and_grad, lr_at, predictions, train, weighted_cross_entropy, AdamW, EpochRecord, TrainConfig,
    TrainLog, LOG_HEADER,
};
