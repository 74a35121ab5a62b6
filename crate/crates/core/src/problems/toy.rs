use crate::mask::FeatureVector;

use super::dataset::{Dataset, DatasetKind};
use super::finite::{FiniteProblem, SupportPoint};

/// Label of the toy problem: the squared sum of products of feature pairs.
pub(crate) fn toy_label(x: &[f64]) -> f64 {
    let s: f64 = x.chunks_exact(2).map(|p| p[0] * p[1]).sum();
    s * s
}

/// Uniform distribution over `{0,1}^(2 d_pairs)` with deterministic label
/// `y = (Σ_i x[2i-1] x[2i])²`. Support point `k` has `x[j] = bit j of k`.
pub fn toy_problem(d_pairs: usize) -> FiniteProblem {
    assert!(d_pairs >= 1, "toy problem needs at least one feature pair");
    let d = 2 * d_pairs;
    let n = 1usize << d;
    let prob = 1.0 / n as f64;
    let points = (0..n)
        .map(|k| {
            let x: Vec<f64> = (0..d).map(|j| (k >> j & 1) as f64).collect();
            let y = toy_label(&x);
            SupportPoint {
                x: FeatureVector::new(x).expect("binary features are finite"),
                prob,
                labels: vec![(y, 1.0)],
            }
        })
        .collect();
    FiniteProblem::new(points).expect("toy problem is valid by construction")
}

/// The complete toy support as a dataset (one row per support point).
pub fn toy_dataset(d_pairs: usize) -> Dataset {
    let problem = toy_problem(d_pairs);
    let rows = problem
        .points()
        .iter()
        .map(|p| (p.x.clone(), p.labels[0].0))
        .collect();
    Dataset::new(DatasetKind::Toy { d_pairs }, 0, rows).expect("toy rows match kind")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_at_corners() {
        let p = toy_problem(5);
        assert_eq!(p.len(), 1024);
        assert_eq!(p.point(1023).labels, vec![(25.0, 1.0)]);
        assert_eq!(p.point(0).labels, vec![(0.0, 1.0)]);
        assert!(p.points().iter().all(|pt| pt.prob == 1.0 / 1024.0));
    }

    /// Brute-force moments over all 1024 points, counting by the number of
    /// active pairs k ~ Binomial(5, 1/4).
    #[test]
    fn moments_by_enumeration() {
        let p = toy_problem(5);
        let mut mean = 0.0;
        let mut second = 0.0;
        for k in 0..1024usize {
            let active = (0..5).filter(|i| k >> (2 * i) & 3 == 3).count() as f64;
            mean += active * active / 1024.0;
            second += active.powi(4) / 1024.0;
        }
        assert!((mean - 2.5).abs() < 1e-12);
        assert!((p.mean_label() - 2.5).abs() < 1e-12);
        assert!((p.label_variance() - (second - 6.25)).abs() < 1e-12);
    }

    #[test]
    fn swapping_a_pair_keeps_the_label() {
        let p = toy_problem(3);
        for pt in p.points() {
            for pair in 0..3 {
                let mut x = pt.x.values().to_vec();
                x.swap(2 * pair, 2 * pair + 1);
                assert_eq!(toy_label(&x), pt.labels[0].0);
            }
        }
    }
}
