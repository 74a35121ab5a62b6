//! Shared inputs for the criterion benchmarks.

use suwr_core::engine::{Example, TrainData};
use suwr_core::problems::{syn_sample, SynKind};

/// The first `n` rows of a Syn1 training sample as weighted examples.
pub fn syn_batch(n: usize) -> Vec<Example> {
    let ds = syn_sample(SynKind::Syn1, n, 0).expect("synthetic sample");
    TrainData::from_dataset(&ds).expect("training data").examples().to_vec()
}
