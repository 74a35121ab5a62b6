//! Run configurations. Every artifact embeds the configuration that produced
//! it; output locations are not part of it, so a rerun elsewhere writes the
//! same bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use suwr_core::audit::{Check, EXACT_TOL};
use suwr_core::problems::{syn_sample, toy_dataset, TEST_SEED, TRAIN_SEED};
use suwr_core::{Dataset, DatasetKind, TrainConfig};

use crate::error::CliError;

/// How masks are chosen for a trained model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    /// The learned sequential selector.
    Suwr,
    /// The ground-truth relevant features (synthetic kinds only).
    Oracle,
    /// Every feature.
    All,
}

/// A dataset read from `path`, or generated from `kind`, `n` and `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSource {
    pub kind: DatasetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub n: usize,
    pub seed: u64,
}

impl DataSource {
    pub fn generated(kind: DatasetKind, n: usize, seed: u64) -> Self {
        DataSource {
            kind,
            path: None,
            n,
            seed,
        }
    }

    pub fn train_default(kind: DatasetKind) -> Self {
        DataSource::generated(kind, 10_000, TRAIN_SEED)
    }

    pub fn test_default(kind: DatasetKind) -> Self {
        DataSource::generated(kind, 10_000, TEST_SEED)
    }

    pub fn load(&self) -> Result<Dataset, CliError> {
        let ds = match (&self.path, self.kind) {
            (Some(p), _) => Dataset::read(p)?,
            (None, DatasetKind::Toy { d_pairs }) => toy_dataset(d_pairs),
            (None, DatasetKind::Syn(k)) => syn_sample(k, self.n, self.seed)?,
        };
        if ds.kind() != self.kind {
            return Err(CliError::Config(format!(
                "dataset kind {} does not match requested kind {}",
                ds.kind(),
                self.kind
            )));
        }
        Ok(ds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRun {
    pub kind: DatasetKind,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub data: DataSource,
    pub selector: Selector,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub model: PathBuf,
    pub data: DataSource,
    /// Seed of the inference draws.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferRun {
    pub model: PathBuf,
    pub data: DataSource,
    pub seed: u64,
    /// Number of leading rows explained.
    pub limit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoRun {
    pub d_pairs: usize,
    /// Sweep for the local front; empty computes the exact hull.
    pub lambdas: Vec<f64>,
    /// Trained toy models plotted as measured points.
    pub models: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum AuditSource {
    /// `table1` or `table3`.
    Fixture { name: String },
    /// JSON with `problem` and `policy`.
    File { path: PathBuf },
    /// Exact mask distribution of a trained toy model.
    Model { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRun {
    pub source: AuditSource,
    pub tol: f64,
    pub checks: Vec<Check>,
}

impl AuditRun {
    pub fn default_checks() -> Vec<Check> {
        vec![Check::LabelLeakage, Check::FeatureLeakage, Check::Corollary]
    }

    pub fn new(source: AuditSource) -> Self {
        AuditRun {
            source,
            tol: EXACT_TOL,
            checks: Self::default_checks(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum RunConfig {
    Gen(GenRun),
    Train(TrainRun),
    Eval(EvalRun),
    Pareto(ParetoRun),
    Audit(AuditRun),
    Infer(InferRun),
}

impl RunConfig {
    pub fn command(&self) -> &'static str {
        match self {
            RunConfig::Gen(_) => "gen",
            RunConfig::Train(_) => "train",
            RunConfig::Eval(_) => "eval",
            RunConfig::Pareto(_) => "pareto",
            RunConfig::Audit(_) => "audit",
            RunConfig::Infer(_) => "infer",
        }
    }

    /// Reads a configuration file, or the configuration embedded in an
    /// artifact under a top-level `config` key.
    pub fn read(path: &Path) -> Result<RunConfig, CliError> {
        let text = fs::read_to_string(path).map_err(|e| suwr_core::Error::Io {
            path: path.into(),
            source: e,
        })?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let inner = match value.get("config") {
            Some(c) if c.get("command").is_some() => c.clone(),
            _ => value,
        };
        serde_json::from_value(inner).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
