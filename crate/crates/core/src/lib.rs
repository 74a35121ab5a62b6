//! Sequential unmasking without reversion (SUWR): leakage-free instance-wise
//! feature selection, with exact audits and Pareto-front tooling for
//! enumerable problems.

pub mod audit;
pub mod engine;
pub mod error;
pub mod metrics;
mod mask;
pub mod neural;
pub mod pareto;
pub mod problems;

pub use audit::{LeakageReport, TabularPolicy, Verdict};
pub use engine::{infer, train, Narrative, TrainConfig, TrainData, Trajectory};
pub use neural::{SuwrModel, Task};
pub use pareto::{FrontKind, FrontPoint, LpSystem, ParetoFront, PredictorTable};
pub use error::{Error, Result};
pub use mask::{apply_mask, FeatureVector, Mask, MaskedInstance};
pub use problems::{Dataset, DatasetKind, FiniteProblem, SupportPoint, SynKind};
