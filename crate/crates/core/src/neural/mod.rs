//! Neural-network detectors built from scratch on `ndarray`.

pub mod checkpoint;
pub mod data;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod train;

pub use checkpoint::Checkpoint;
pub use data::{stratified_kfold, Fold, SampleRecord, Scaler};
pub use model::{Architecture, NetworkModel, Optimizer};
pub use train::{predict, train, train_cv, TrainConfig, TrainReport, TrainedDetector};
