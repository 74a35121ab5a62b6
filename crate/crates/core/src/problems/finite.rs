use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::FeatureVector;

const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SupportPoint {
    pub x: FeatureVector,
    pub prob: f64,
    /// `(label, p(label | x))` pairs.
    pub labels: Vec<(f64, f64)>,
}

impl SupportPoint {
    /// `E[y | x]`.
    pub fn expected_label(&self) -> f64 {
        self.labels.iter().map(|(y, p)| y * p).sum()
    }
}

/// A completely known joint distribution `p(x, y)` over a finite support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemRepr", into = "ProblemRepr")]
pub struct FiniteProblem {
    d: usize,
    points: Vec<SupportPoint>,
}

impl FiniteProblem {
    pub fn new(points: Vec<SupportPoint>) -> Result<Self> {
        let d = points
            .first()
            .map(|p| p.x.len())
            .ok_or_else(|| Error::validation("support must not be empty"))?;
        let problem = FiniteProblem { d, points };
        problem.validate()?;
        Ok(problem)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let mut total = 0.0;
        for (i, p) in self.points.iter().enumerate() {
            if p.x.len() != self.d {
                return Err(Error::Dimension {
                    expected: self.d,
                    actual: p.x.len(),
                });
            }
            if !(p.prob > 0.0) || !p.prob.is_finite() {
                return Err(Error::validation(format!(
                    "support point {i} has non-positive probability {}",
                    p.prob
                )));
            }
            if !seen.insert(&p.x) {
                return Err(Error::validation(format!(
                    "support point {i} duplicates an earlier point"
                )));
            }
            if p.labels.is_empty() {
                return Err(Error::validation(format!("support point {i} has no labels")));
            }
            let mut label_sum = 0.0;
            for &(y, q) in &p.labels {
                if !y.is_finite() || !(q >= 0.0) {
                    return Err(Error::validation(format!(
                        "support point {i} has invalid label entry ({y}, {q})"
                    )));
                }
                label_sum += q;
            }
            if (label_sum - 1.0).abs() > SUM_TOL {
                return Err(Error::validation(format!(
                    "label distribution of support point {i} sums to {label_sum}"
                )));
            }
            total += p.prob;
        }
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::validation(format!(
                "support probabilities sum to {total}"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[SupportPoint] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &SupportPoint {
        &self.points[i]
    }

    /// `E[y]`.
    pub fn mean_label(&self) -> f64 {
        self.points.iter().map(|p| p.prob * p.expected_label()).sum()
    }

    /// `Var(y)`, the loss of the best constant predictor.
    pub fn label_variance(&self) -> f64 {
        let mean = self.mean_label();
        self.points
            .iter()
            .map(|p| {
                p.prob
                    * p.labels
                        .iter()
                        .map(|(y, q)| q * (y - mean).powi(2))
                        .sum::<f64>()
            })
            .sum()
    }

    pub fn index_of(&self, x: &FeatureVector) -> Option<usize> {
        self.points.iter().position(|p| &p.x == x)
    }
}

#[derive(Serialize, Deserialize)]
struct ProblemRepr {
    support: Vec<Vec<f64>>,
    probabilities: Vec<f64>,
    labels: Vec<Vec<(f64, f64)>>,
}

impl TryFrom<ProblemRepr> for FiniteProblem {
    type Error = Error;

    fn try_from(r: ProblemRepr) -> Result<Self> {
        if r.support.len() != r.probabilities.len() || r.support.len() != r.labels.len() {
            return Err(Error::validation(format!(
                "support ({}), probabilities ({}) and labels ({}) differ in length",
                r.support.len(),
                r.probabilities.len(),
                r.labels.len()
            )));
        }
        let points = r
            .support
            .into_iter()
            .zip(r.probabilities)
            .zip(r.labels)
            .map(|((x, prob), labels)| {
                Ok(SupportPoint {
                    x: FeatureVector::new(x)?,
                    prob,
                    labels,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FiniteProblem::new(points)
    }
}

impl From<FiniteProblem> for ProblemRepr {
    fn from(p: FiniteProblem) -> Self {
        let mut r = ProblemRepr {
            support: Vec::with_capacity(p.points.len()),
            probabilities: Vec::with_capacity(p.points.len()),
            labels: Vec::with_capacity(p.points.len()),
        };
        for pt in p.points {
            r.support.push(pt.x.into_inner());
            r.probabilities.push(pt.prob);
            r.labels.push(pt.labels);
        }
        r
    }
}
