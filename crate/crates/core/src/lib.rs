//! Bi-directional generative domain adaptation at desk scale.
//!
//! Two residual feature-space generators translate each domain toward the
//! other, two classifiers (class head plus domain head) are trained on the
//! real and generated batches, and global plus class-wise mean discrepancies
//! align the generated data with the opposite domain under frozen pseudo
//! labels. A consistency term ties the classifiers' predictions together.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod losses;
pub mod nn;
pub mod training;

pub use autodiff::{Tape, Tensor, Var};
pub use data::{make_domain_pair, DomainDataset, ShiftSpec};
pub use error::{BdgError, Result};
pub use training::{run, run_variant, MetricsRecord, TrainConfig, Variant};
