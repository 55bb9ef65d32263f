//! A small feed-forward classifier trained with Adam on mean squared error.

pub mod adam;
pub mod metrics;
pub mod model;
pub mod train;

pub use adam::AdamState;
pub use metrics::{classify, evaluate, EvalMetrics};
pub use model::{Gradients, Layer, MlpModel};
pub use train::{grid_search, train, HyperGrid, TrainConfig, TrainOutcome};
