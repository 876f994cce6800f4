//! Federated learning simulation for embedding classifiers, with SVM-guided
//! aggregation of class embeddings alongside the usual baseline strategies.
//!
//! * [`tensor`], [`optim`], [`gradcheck`]: numerics
//! * [`model`]: MLP encoder plus bias-free logit layer
//! * [`svm`]: soft-margin linear SVM, one-vs-one wrapper, logit-bound check
//! * [`fl`]: client updates and server aggregation strategies
//! * [`data`]: synthetic/IDX datasets, partitioning and metrics
//! * [`harness`]: configs, experiment runner, CSV reporting

pub mod data;
pub mod error;
pub mod fl;
pub mod gradcheck;
pub mod harness;
pub mod model;
pub mod optim;
pub mod svm;
pub mod tensor;

pub use error::{Error, Result};
pub use model::{Batch, Dense, Model};
pub use optim::{OptimizerKind, OptimizerState};
pub use tensor::Tensor;
