//! The learned transceiver: six networks joined through the channels,
//! their losses, and sequential stage-wise training.

pub mod loss;
mod model;
mod train;

pub use model::{CommInput, IsacModel, Net, Transmitter};
pub use train::{
    batch_loss, draw_batch, train, train_stage, BatchLoss, LogRow, ModelGradients, Objective, TrainingLog, TrainingPlan,
};
