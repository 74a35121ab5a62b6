use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::FeatureVector;

use super::synthetic::{SynKind, SYN_DIM};

/// Generator used for the synthetic benchmarks: one ChaCha20 stream per row
/// (stream id = row index), eleven `rand_distr::StandardNormal` (ziggurat)
/// draws followed by one uniform draw for the label.
pub const GENERATOR_ID: &str = "chacha20-stream-per-row/ziggurat-normal";
const TOY_GENERATOR_ID: &str = "full-enumeration";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Toy { d_pairs: usize },
    Syn(SynKind),
}

impl DatasetKind {
    pub fn dim(self) -> usize {
        match self {
            DatasetKind::Toy { d_pairs } => 2 * d_pairs,
            DatasetKind::Syn(_) => SYN_DIM,
        }
    }

    pub fn is_classification(self) -> bool {
        matches!(self, DatasetKind::Syn(_))
    }

    fn generator(self) -> &'static str {
        match self {
            DatasetKind::Toy { .. } => TOY_GENERATOR_ID,
            DatasetKind::Syn(_) => GENERATOR_ID,
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetKind::Toy { d_pairs: 5 } => write!(f, "toy"),
            DatasetKind::Toy { d_pairs } => write!(f, "toy{d_pairs}"),
            DatasetKind::Syn(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    /// `toy` (five pairs), `toyN` (N pairs) or `syn1`..`syn6`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("toy") {
            let d_pairs = if rest.is_empty() {
                5
            } else {
                rest.parse::<usize>()
                    .ok()
                    .filter(|&p| (1..=12).contains(&p))
                    .ok_or_else(|| Error::validation(format!("bad toy size in {s:?}")))?
            };
            return Ok(DatasetKind::Toy { d_pairs });
        }
        Ok(DatasetKind::Syn(lower.parse()?))
    }
}

impl Serialize for DatasetKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DatasetKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// JSON sidecar written next to every dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub kind: DatasetKind,
    pub n: usize,
    pub seed: u64,
    pub generator: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    kind: DatasetKind,
    seed: u64,
    rows: Vec<(FeatureVector, f64)>,
}

impl Dataset {
    pub fn new(kind: DatasetKind, seed: u64, rows: Vec<(FeatureVector, f64)>) -> Result<Self> {
        let d = kind.dim();
        for (i, (x, y)) in rows.iter().enumerate() {
            if x.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    actual: x.len(),
                });
            }
            if kind.is_classification() && *y != 0.0 && *y != 1.0 {
                return Err(Error::validation(format!(
                    "row {i}: label {y} is not binary"
                )));
            }
            if !y.is_finite() {
                return Err(Error::validation(format!("row {i}: label is not finite")));
            }
        }
        Ok(Dataset { kind, seed, rows })
    }

    pub fn kind(&self) -> DatasetKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[(FeatureVector, f64)] {
        &self.rows
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            kind: self.kind,
            n: self.rows.len(),
            seed: self.seed,
            generator: self.kind.generator().to_string(),
        }
    }

    /// Splits off the last `fraction` of rows (rounded down, at least one
    /// row stays on each side when possible).
    pub fn split_tail(&self, fraction: f64) -> (Dataset, Dataset) {
        let n = self.rows.len();
        let tail = ((n as f64 * fraction).floor() as usize).min(n.saturating_sub(1));
        let head = n - tail;
        (
            Dataset {
                kind: self.kind,
                seed: self.seed,
                rows: self.rows[..head].to_vec(),
            },
            Dataset {
                kind: self.kind,
                seed: self.seed,
                rows: self.rows[head..].to_vec(),
            },
        )
    }

    pub fn sidecar_path(csv: &Path) -> PathBuf {
        csv.with_extension("json")
    }

    /// Writes `f1..fd,label` CSV and the JSON sidecar next to it.
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        let mut out = String::new();
        let header: Vec<String> = (1..=self.dim()).map(|j| format!("f{j}")).collect();
        out.push_str(&header.join(","));
        out.push_str(",label\n");
        for (x, y) in &self.rows {
            for v in x.values() {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{y}\n"));
        }
        fs::write(csv_path, out).map_err(|e| Error::io(csv_path, e))?;
        let sidecar = Self::sidecar_path(csv_path);
        let meta = serde_json::to_string_pretty(&self.meta()).expect("meta serializes");
        fs::write(&sidecar, meta + "\n").map_err(|e| Error::io(&sidecar, e))?;
        Ok(())
    }

    pub fn read(csv_path: &Path) -> Result<Dataset> {
        let sidecar = Self::sidecar_path(csv_path);
        let meta_text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let meta: DatasetMeta =
            serde_json::from_str(&meta_text).map_err(|e| Error::format(&sidecar, e))?;
        let mut reader = csv::Reader::from_path(csv_path).map_err(|e| Error::format(csv_path, e))?;
        let d = meta.kind.dim();
        let headers = reader.headers().map_err(|e| Error::format(csv_path, e))?;
        let expected: Vec<String> = (1..=d)
            .map(|j| format!("f{j}"))
            .chain(std::iter::once("label".to_string()))
            .collect();
        if headers.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::format(
                csv_path,
                format!("header does not match f1..f{d},label"),
            ));
        }
        let mut rows = Vec::with_capacity(meta.n);
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::format(csv_path, e))?;
            let vals = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::format(csv_path, format!("row {}: {e}", i + 1)))?;
            let (y, x) = vals.split_last().expect("header guarantees columns");
            rows.push((FeatureVector::new(x.to_vec())?, *y));
        }
        if rows.len() != meta.n {
            return Err(Error::format(
                csv_path,
                format!("sidecar says {} rows, file has {}", meta.n, rows.len()),
            ));
        }
        Dataset::new(meta.kind, meta.seed, rows)
    }
}
