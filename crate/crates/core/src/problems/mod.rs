//! Benchmark problems: the enumerable toy problem, the Syn1–Syn6 generators,
//! and the in-repo audit fixtures.

mod dataset;
mod finite;
pub mod fixtures;
mod synthetic;
mod toy;

pub use dataset::{Dataset, DatasetKind, DatasetMeta, GENERATOR_ID};
pub use finite::{FiniteProblem, SupportPoint};
pub use synthetic::{g_eval, label_probability, relevant_features, syn_sample, SynKind, CONTROL_FEATURE, SYN_DIM};
pub use toy::{toy_dataset, toy_problem};

/// Default seeds for the training and test splits.
pub const TRAIN_SEED: u64 = 0;
pub const TEST_SEED: u64 = 100;
