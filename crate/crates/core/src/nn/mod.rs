//! Generators, classifiers, optimizers and checkpoints.

mod checkpoint;
mod layers;
mod models;
mod optim;

pub use checkpoint::Checkpoint;
pub use layers::{xavier_bound, BoundLinear, Linear, Parameterized};
pub use models::{
    collect_grads, BoundClassifier, BoundGenerator, Classifier, ClassifierOutput, Generator,
    Prediction,
};
pub use optim::{Optimizer, OptimizerKind};
