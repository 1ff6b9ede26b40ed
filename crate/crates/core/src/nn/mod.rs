//! Recurrent forecasters (LSTM, ConvLSTM, GraphLSTM), training and forecasting.

pub mod cell;
pub mod checkpoint;
pub mod dataset;
pub mod forecast;
pub mod network;
pub mod optim;
pub mod param;
pub mod search;
pub mod train;

pub use cell::{convlstm_step, graphlstm_step, lstm_step, Cell, CellShape, CellState};
pub use checkpoint::{Checkpoint, RepeatLog, TensorRecord, CHECKPOINT_VERSION};
pub use dataset::{InputLayout, Sample, TrainData};
pub use forecast::Forecaster;
pub use network::{compute_loss, loss_gradient, ModelKind, ModelSpec, Network};
pub use optim::{rmsprop_update, OpCounter, RmsPropState};
pub use param::Tensor;
pub use search::{search_hyperparameters, SearchOutcome, SearchSpace, Trial};
pub use train::{derive_seed, fit_once, model_spec, train_model, TrainConfig, TrainOutcome, TrainRun};
