//! Federated datasets (synthetic and IDX-backed), partitioning, storage and
//! classification metrics.

mod client;
mod container;
mod dataset;
mod idx;
mod metrics;
mod partition;
mod synthetic;

pub use client::ClientData;
pub use container::{load_dataset, read_dataset, save_dataset, write_dataset};
pub use dataset::{heldout_count, split_clients, FederatedDataset};
pub use idx::{load_idx, parse_idx_images, parse_idx_labels};
pub use metrics::{accuracy, confusion, macro_f1, mcc, rounds_to_target, ConfusionMatrix, RoundsToTarget};
pub use partition::partition_by_client;
pub use synthetic::{generate_synthetic, sample_dirichlet, SyntheticSpec};
