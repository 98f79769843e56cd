//! Synthetic proxy task and linear-probe accuracy.

mod dataset;
mod head;

pub use self::dataset::{generate_dataset, SyntheticDataset, CLASS_NAMES, DATASET_FORMAT_VERSION};
pub use self::head::{fit_head, loss_and_grad, probe_accuracy, ProbeHead, Standardizer};
