//! Loss assembly, vertex dropout, Adam, and the subgraph-sampling loop.

mod check;
mod config;
mod data;
mod loss;
mod optim;
mod trainer;

pub use check::{model_check_options, model_gradient_check, toy_model_config, TOY_VERTICES};
pub use config::{AdamConfig, TrainConfig};
pub use data::PreparedNetwork;
pub use loss::{laplace_gate, laplace_regularizer, total_loss, vertex_dropout, LossParts, LossTargets};
pub use optim::Adam;
pub use trainer::{
    metrics_csv, predict_all, score_predictions, train, train_with, validate, HistoryRow, TrainOutcome,
    ValidationScore, METRICS_HEADER,
};

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::model::ModelError;
use crate::road_graph::GraphError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("empty loss set: no labeled vertex among the loss vertices")]
    EmptyLossSet,
    #[error("training diverged at iteration {iteration} (loss {loss})")]
    Diverged { iteration: usize, loss: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
