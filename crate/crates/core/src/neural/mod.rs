//! LSTM regressor mapping a path to `(θ̂, σ̂²)`.

pub mod adam;
pub mod loss;
pub mod lstm;
pub mod model_io;
pub mod train;

pub use adam::{adam_step, adam_update, AdamHyper, AdamState};
pub use loss::{composite_loss, composite_loss_grad, elu, huber_loss, LossConfig};
pub use lstm::{lstm_backward, lstm_forward, ForwardCache, LayerWeights, LstmModel, LstmState, Normalizer, Weights};
pub use model_io::{load_model, read_model, save_model, write_model};
pub use train::{infer, split_sizes, train, write_loss_curve, EpochLoss, TrainConfig, TrainOutput};
