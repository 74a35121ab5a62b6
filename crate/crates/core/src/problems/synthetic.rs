//! Syn1–Syn6: eleven standard-normal features, binary labels with
//! `p(y = 1 | x) = 1 / (1 + g(x))`.
//!
//! Feature indices here are zero-based; the control-flow feature (the
//! eleventh) is index [`CONTROL_FEATURE`].

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::FeatureVector;

use super::dataset::{Dataset, DatasetKind};

pub const SYN_DIM: usize = 11;
pub const CONTROL_FEATURE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynKind {
    Syn1,
    Syn2,
    Syn3,
    Syn4,
    Syn5,
    Syn6,
}

impl SynKind {
    pub const ALL: [SynKind; 6] = [
        SynKind::Syn1,
        SynKind::Syn2,
        SynKind::Syn3,
        SynKind::Syn4,
        SynKind::Syn5,
        SynKind::Syn6,
    ];

    /// The two base functions a switching kind chooses between
    /// (`x[11] < 0` picks the first).
    fn branches(self) -> Option<(SynKind, SynKind)> {
        match self {
            SynKind::Syn4 => Some((SynKind::Syn1, SynKind::Syn2)),
            SynKind::Syn5 => Some((SynKind::Syn1, SynKind::Syn3)),
            SynKind::Syn6 => Some((SynKind::Syn2, SynKind::Syn3)),
            _ => None,
        }
    }

    pub fn has_control_flow(self) -> bool {
        self.branches().is_some()
    }

    fn base_relevant(self) -> &'static [usize] {
        match self {
            SynKind::Syn1 => &[0, 1],
            SynKind::Syn2 => &[2, 3, 4, 5],
            SynKind::Syn3 => &[6, 7, 8, 9],
            _ => unreachable!("switching kinds have no fixed relevant set"),
        }
    }
}

impl fmt::Display for SynKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = SynKind::ALL.iter().position(|k| k == self).unwrap() + 1;
        write!(f, "syn{n}")
    }
}

impl FromStr for SynKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "syn1" => Ok(SynKind::Syn1),
            "syn2" => Ok(SynKind::Syn2),
            "syn3" => Ok(SynKind::Syn3),
            "syn4" => Ok(SynKind::Syn4),
            "syn5" => Ok(SynKind::Syn5),
            "syn6" => Ok(SynKind::Syn6),
            other => Err(Error::validation(format!("unknown synthetic kind {other:?}"))),
        }
    }
}

fn g_base(kind: SynKind, x: &[f64]) -> f64 {
    match kind {
        SynKind::Syn1 => (x[0] * x[1]).exp(),
        SynKind::Syn2 => (x[2..6].iter().map(|v| v * v).sum::<f64>() - 4.0).exp(),
        SynKind::Syn3 => -10.0 * (2.0 * x[6]).sin() + 2.0 * x[7].abs() + x[8] + (-x[9]).exp(),
        _ => unreachable!(),
    }
}

/// `g_k(x)`. Switching kinds route `x[11] = 0` to the second branch.
pub fn g_eval(kind: SynKind, x: &[f64]) -> Result<f64> {
    if x.len() != SYN_DIM {
        return Err(Error::Dimension {
            expected: SYN_DIM,
            actual: x.len(),
        });
    }
    if let Some(j) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("feature {j} is not finite")));
    }
    let g = match kind.branches() {
        Some((neg, nonneg)) => {
            if x[CONTROL_FEATURE] < 0.0 {
                g_base(neg, x)
            } else {
                g_base(nonneg, x)
            }
        }
        None => g_base(kind, x),
    };
    Ok(g)
}

/// `p(y = 1 | x) = 1 / (1 + g)`, clipped to `[0, 1]`.
///
/// Only the Syn3 term can make `g` negative; for `g ≤ -1` the expression has
/// no probabilistic meaning and is mapped to 0, for `-1 < g < 0` to 1.
pub fn label_probability(g: f64) -> f64 {
    if g <= -1.0 {
        return 0.0;
    }
    (1.0 / (1.0 + g)).clamp(0.0, 1.0)
}

/// Ground-truth relevant features (zero-based) for `x`.
pub fn relevant_features(kind: SynKind, x: &[f64]) -> Result<BTreeSet<usize>> {
    if x.len() != SYN_DIM {
        return Err(Error::Dimension {
            expected: SYN_DIM,
            actual: x.len(),
        });
    }
    Ok(match kind.branches() {
        Some((neg, nonneg)) => {
            let branch = if x[CONTROL_FEATURE] < 0.0 { neg } else { nonneg };
            let mut set: BTreeSet<usize> = branch.base_relevant().iter().copied().collect();
            set.insert(CONTROL_FEATURE);
            set
        }
        None => kind.base_relevant().iter().copied().collect(),
    })
}

/// Random stream for row `row` of a dataset with the given seed. Rows are
/// independent streams so generation can be partitioned by row index.
pub(crate) fn row_rng(seed: u64, row: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(row);
    rng
}

/// `n` i.i.d. rows of a synthetic benchmark.
pub fn syn_sample(kind: SynKind, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::validation("n must be at least 1"));
    }
    let rows = (0..n as u64)
        .map(|row| {
            let mut rng = row_rng(seed, row);
            let x: Vec<f64> = (0..SYN_DIM).map(|_| rng.sample(StandardNormal)).collect();
            let p = label_probability(g_eval(kind, &x)?);
            let u: f64 = rng.gen();
            let y = if u < p { 1.0 } else { 0.0 };
            Ok((FeatureVector::new(x)?, y))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(DatasetKind::Syn(kind), seed, rows)
}
