//! Coordinate permutations that leave a finite problem unchanged, and the
//! orbit-reduced LP they induce.
//!
//! A permutation that maps the support onto itself with equal probabilities
//! and label distributions also permutes the LP rows and columns and keeps
//! every cost. Averaging an optimal `θ` over the generated group keeps it
//! feasible and optimal, so one value per column orbit is enough.

use std::collections::HashMap;

use crate::error::Result;
use crate::mask::{FeatureVector, MaskedInstance};
use crate::problems::FiniteProblem;

use super::lp::LpSystem;
use super::simplex::Column;

/// `y[perm[i]] = x[i]`.
fn permute<T: Copy>(x: &[T], perm: &[usize]) -> Vec<T> {
    let mut y = x.to_vec();
    for (i, &p) in perm.iter().enumerate() {
        y[p] = x[i];
    }
    y
}

fn same_labels(a: &[(f64, f64)], b: &[(f64, f64)]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let sorted = |v: &[(f64, f64)]| {
        let mut v = v.to_vec();
        v.sort_by(|p, q| p.0.total_cmp(&q.0));
        v
    };
    let (a, b) = (sorted(a), sorted(b));
    a.iter()
        .zip(&b)
        .all(|(p, q)| close(p.0, q.0) && close(p.1, q.1))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

/// Row permutation induced by `perm`, if `perm` is a symmetry of `problem`.
fn row_map(
    problem: &FiniteProblem,
    index: &HashMap<&FeatureVector, usize>,
    perm: &[usize],
) -> Option<Vec<u32>> {
    let mut map = Vec::with_capacity(problem.len());
    for pt in problem.points() {
        let y = FeatureVector::new(permute(pt.x.values(), perm)).ok()?;
        let &k = index.get(&y)?;
        let q = problem.point(k);
        if !close(pt.prob, q.prob) || !same_labels(&pt.labels, &q.labels) {
            return None;
        }
        map.push(k as u32);
    }
    Some(map)
}

/// Column permutation induced by `perm`, if every image exists and has the
/// same loss and mass.
fn column_map(sys: &LpSystem, perm: &[usize]) -> Option<Vec<u32>> {
    let mut map = Vec::with_capacity(sys.cols());
    for j in 0..sys.cols() {
        let v = MaskedInstance::from_parts(permute(sys.pattern(j).values(), perm));
        let k = sys.column_of(&v)?;
        if !close(sys.loss_of_column(j), sys.loss_of_column(k))
            || !close(sys.mass_of_column(j), sys.mass_of_column(k))
        {
            return None;
        }
        map.push(k as u32);
    }
    Some(map)
}

/// Transpositions and products of two disjoint transpositions that are
/// symmetries of the problem.
pub fn coordinate_symmetries(problem: &FiniteProblem) -> Vec<Vec<usize>> {
    let d = problem.dim();
    let index: HashMap<&FeatureVector, usize> = problem
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| (&p.x, i))
        .collect();
    let mut candidates = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            let mut p: Vec<usize> = (0..d).collect();
            p.swap(i, j);
            candidates.push(p.clone());
            for k in i + 1..d {
                for l in k + 1..d {
                    if k == j || l == j {
                        continue;
                    }
                    let mut q = p.clone();
                    q.swap(k, l);
                    candidates.push(q);
                }
            }
        }
    }
    candidates
        .into_iter()
        .filter(|p| row_map(problem, &index, p).is_some())
        .collect()
}

fn find(parent: &mut [u32], mut a: u32) -> u32 {
    while parent[a as usize] != a {
        let up = parent[parent[a as usize] as usize];
        parent[a as usize] = up;
        a = up;
    }
    a
}

fn orbits(n: usize, maps: &[Vec<u32>]) -> (Vec<u32>, usize) {
    let mut parent: Vec<u32> = (0..n as u32).collect();
    for map in maps {
        for (a, &b) in map.iter().enumerate() {
            let (ra, rb) = (find(&mut parent, a as u32), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb) as usize] = ra.min(rb);
            }
        }
    }
    let mut id = vec![u32::MAX; n];
    let mut orbit = vec![0u32; n];
    let mut count = 0;
    for a in 0..n {
        let r = find(&mut parent, a as u32) as usize;
        if id[r] == u32::MAX {
            id[r] = count as u32;
            count += 1;
        }
        orbit[a] = id[r];
    }
    (orbit, count)
}

/// The LP restricted to orbit-constant `θ`. Row `R` is the constraint of
/// one representative support point; column `O` carries coefficient
/// `#{j ∈ O : rep(R) ∈ col_j}` and the summed cost of its members.
#[derive(Debug, Clone)]
pub struct ReducedLp {
    rows: usize,
    columns: Vec<Column>,
    col_orbit: Vec<u32>,
}

impl ReducedLp {
    pub fn new(problem: &FiniteProblem, sys: &LpSystem) -> Result<Self> {
        let index: HashMap<&FeatureVector, usize> = problem
            .points()
            .iter()
            .enumerate()
            .map(|(i, p)| (&p.x, i))
            .collect();
        let mut row_maps = Vec::new();
        let mut col_maps = Vec::new();
        for perm in coordinate_symmetries(problem) {
            if let (Some(r), Some(c)) = (row_map(problem, &index, &perm), column_map(sys, &perm)) {
                row_maps.push(r);
                col_maps.push(c);
            }
        }
        let (row_orbit, rows) = orbits(sys.rows(), &row_maps);
        let (col_orbit, cols) = orbits(sys.cols(), &col_maps);
        let mut is_rep = vec![false; sys.rows()];
        let mut seen = vec![false; rows];
        for (i, &o) in row_orbit.iter().enumerate() {
            if !seen[o as usize] {
                seen[o as usize] = true;
                is_rep[i] = true;
            }
        }
        let mut members: Vec<Vec<u32>> = vec![Vec::new(); cols];
        for (j, &o) in col_orbit.iter().enumerate() {
            members[o as usize].push(j as u32);
        }
        let mut dense = vec![0.0; rows];
        let mut columns = Vec::with_capacity(cols);
        for group in &members {
            let mut touched: Vec<u32> = Vec::new();
            for &j in group {
                for &i in sys.column(j as usize) {
                    if is_rep[i as usize] {
                        let r = row_orbit[i as usize];
                        if dense[r as usize] == 0.0 {
                            touched.push(r);
                        }
                        dense[r as usize] += 1.0;
                    }
                }
            }
            touched.sort_unstable();
            columns.push(
                touched
                    .iter()
                    .map(|&r| (r, std::mem::take(&mut dense[r as usize])))
                    .collect(),
            );
        }
        Ok(ReducedLp {
            rows,
            columns,
            col_orbit,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    /// Orbit sums of the full cost vector.
    pub fn costs(&self, full: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.cols()];
        for (j, &o) in self.col_orbit.iter().enumerate() {
            c[o as usize] += full[j];
        }
        c
    }

    /// Full `θ` with every column set to its orbit's value.
    pub fn expand(&self, theta: &[f64]) -> Vec<f64> {
        self.col_orbit.iter().map(|&o| theta[o as usize]).collect()
    }
}
