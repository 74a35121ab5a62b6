//! Small hand-checkable problems with a fixed selection policy.
//!
//! Both are also shipped as JSON under `crates/core/fixtures/`.

use serde::{Deserialize, Serialize};

use crate::audit::TabularPolicy;
use crate::error::{Error, Result};
use crate::mask::{FeatureVector, Mask};

use super::finite::{FiniteProblem, SupportPoint};

pub const TABLE1_JSON: &str = include_str!("../../fixtures/table1.json");
pub const TABLE3_JSON: &str = include_str!("../../fixtures/table3.json");

/// A problem together with a policy defined on its support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub problem: FiniteProblem,
    pub policy: TabularPolicy,
}

impl Fixture {
    pub fn from_json(text: &str) -> Result<Self> {
        let f: Fixture = serde_json::from_str(text)
            .map_err(|e| Error::validation(format!("fixture: {e}")))?;
        f.policy.check_against(&f.problem)?;
        Ok(f)
    }
}

fn point(x: &[f64], prob: f64, y: f64) -> SupportPoint {
    SupportPoint {
        x: FeatureVector::new(x.to_vec()).expect("finite"),
        prob,
        labels: vec![(y, 1.0)],
    }
}

/// Two uniform bits with `y = x1 + x2`, and a selector that leaks the label:
/// it shows the first bit only when both are set.
pub fn table1() -> (FiniteProblem, TabularPolicy) {
    let xs = [[1.0, 1.0], [0.0, 1.0], [1.0, 0.0], [0.0, 0.0]];
    let masks = [[true, false], [false, true], [false, true], [false, false]];
    let problem =
        FiniteProblem::new(xs.iter().map(|x| point(x, 0.25, x[0] + x[1])).collect()).unwrap();
    let policy = TabularPolicy::new(
        masks
            .iter()
            .map(|m| vec![(Mask::from_bits(m.to_vec()), 1.0)])
            .collect(),
    )
    .unwrap();
    (problem, policy)
}

/// One-hot support with labels 2, 1, 0; the selector reveals the hot bit.
pub fn table3() -> (FiniteProblem, TabularPolicy) {
    let third = 1.0 / 3.0;
    let problem = FiniteProblem::new(vec![
        point(&[1.0, 0.0, 0.0], third, 2.0),
        point(&[0.0, 1.0, 0.0], third, 1.0),
        point(&[0.0, 0.0, 1.0], 1.0 - 2.0 * third, 0.0),
    ])
    .unwrap();
    let policy = TabularPolicy::deterministic(&problem, |x| {
        let hot = x.iter().position(|&v| v == 1.0).unwrap();
        Mask::single(3, hot)
    });
    (problem, policy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_json_matches_construction() {
        let (p, z) = table1();
        let f = Fixture::from_json(TABLE1_JSON).unwrap();
        assert_eq!((f.problem, f.policy), (p, z));
        let (p, z) = table3();
        let f = Fixture::from_json(TABLE3_JSON).unwrap();
        assert_eq!(f.problem.len(), p.len());
        for i in 0..p.len() {
            assert_eq!(f.problem.point(i).x, p.point(i).x);
            assert!((f.problem.point(i).prob - p.point(i).prob).abs() < 1e-15);
            assert_eq!(f.problem.point(i).labels, p.point(i).labels);
        }
        assert_eq!(f.policy, z);
    }
}
