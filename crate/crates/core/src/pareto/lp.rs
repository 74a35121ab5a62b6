use std::collections::HashMap;
use std::fmt::Write as _;

use indexmap::IndexMap;

use crate::audit::TabularPolicy;
use crate::error::{Error, Result};
use crate::mask::{apply_mask, Mask, MaskedInstance};
use crate::problems::FiniteProblem;

use super::simplex::{unit_columns, LpSolution, Simplex, SimplexOptions};

/// Default cap on the number of LP columns (masked-value patterns).
pub const DEFAULT_MAX_COLUMNS: usize = 1 << 20;

/// The optimal predictor `f*(x ⊙ h) = E[y | x ⊙ h]` for every reachable
/// masked-value pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorTable {
    index: HashMap<MaskedInstance, usize>,
    values: Vec<f64>,
}

impl PredictorTable {
    pub fn get(&self, v: &MaskedInstance) -> Option<f64> {
        self.index.get(v).map(|&k| self.values[k])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `min cᵀθ  s.t.  Aθ = 1, 0 ≤ θ ≤ 1` with one column per masked-value
/// pattern and one row per support point.
///
/// The loss and sparsity parts of the cost are kept apart so the same system
/// can be re-priced for another `λ` with [`LpSystem::set_lambda`].
#[derive(Debug, Clone)]
pub struct LpSystem {
    d: usize,
    m: usize,
    lambda: f64,
    patterns: Vec<MaskedInstance>,
    masks: Vec<Mask>,
    columns: Vec<Vec<u32>>,
    /// `Σ_{x ∈ col} p(x)`
    mass: Vec<f64>,
    /// `Σ_{x ∈ col} Σ_y p(x, y) (f* − y)²`
    loss: Vec<f64>,
    cost: Vec<f64>,
    feat_index: HashMap<MaskedInstance, usize>,
}

impl LpSystem {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    /// Row indices with a one in column `j`.
    pub fn column(&self, j: usize) -> &[u32] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<u32>] {
        &self.columns
    }

    pub fn b(&self) -> Vec<f64> {
        vec![1.0; self.m]
    }

    pub fn pattern(&self, j: usize) -> &MaskedInstance {
        &self.patterns[j]
    }

    pub fn mask(&self, j: usize) -> &Mask {
        &self.masks[j]
    }

    pub fn column_of(&self, v: &MaskedInstance) -> Option<usize> {
        self.feat_index.get(v).copied()
    }

    pub fn nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    pub fn set_lambda(&mut self, lambda: f64) -> Result<()> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::validation(format!("lambda must be finite and ≥ 0, got {lambda}")));
        }
        self.lambda = lambda;
        for j in 0..self.cost.len() {
            self.cost[j] = self.loss[j] + lambda * self.masks[j].count() as f64 * self.mass[j];
        }
        Ok(())
    }

    pub fn loss_of_column(&self, j: usize) -> f64 {
        self.loss[j]
    }

    pub fn mass_of_column(&self, j: usize) -> f64 {
        self.mass[j]
    }

    /// `‖Aθ − 1‖∞`.
    pub fn residual(&self, theta: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.m];
        for (t, col) in theta.iter().zip(&self.columns) {
            for &i in col {
                ax[i as usize] += t;
            }
        }
        ax.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Expected loss of `θ` with the optimal predictor.
    pub fn loss_of(&self, theta: &[f64]) -> f64 {
        theta.iter().zip(&self.loss).map(|(t, l)| t * l).sum()
    }

    /// Expected sparsity ratio `E[‖h‖] / d` of `θ`.
    pub fn sparsity_of(&self, theta: &[f64]) -> f64 {
        let count: f64 = theta
            .iter()
            .enumerate()
            .map(|(j, t)| t * self.mass[j] * self.masks[j].count() as f64)
            .sum();
        count / self.d as f64
    }

    /// Loss of the fixed-mask policy `ζ(h | x) = 1` for every `x`.
    pub fn fixed_mask_losses(&self) -> Vec<(Mask, f64)> {
        let mut by_mask: IndexMap<&Mask, f64> = IndexMap::new();
        for (h, l) in self.masks.iter().zip(&self.loss) {
            *by_mask.entry(h).or_insert(0.0) += l;
        }
        by_mask.into_iter().map(|(h, l)| (h.clone(), l)).collect()
    }

    /// Plain-text fixed-format dump, one line per column.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "LP rows={} cols={} nnz={} lambda={:.17e}",
            self.m,
            self.cols(),
            self.nnz(),
            self.lambda
        );
        let _ = writeln!(out, "{:>8} {:>25} {:<w$} rows", "col", "cost", "mask", w = self.d.max(4));
        for j in 0..self.cols() {
            let rows: Vec<String> = self.columns[j].iter().map(|r| r.to_string()).collect();
            let _ = writeln!(
                out,
                "{:>8} {:>25.17e} {:<w$} {}",
                j,
                self.cost[j],
                self.masks[j].to_string(),
                rows.join(" "),
                w = self.d.max(4)
            );
        }
        out
    }
}

pub fn build_lp(problem: &FiniteProblem, lambda: f64) -> Result<(LpSystem, PredictorTable)> {
    build_lp_capped(problem, lambda, DEFAULT_MAX_COLUMNS)
}

/// Enumerates every mask and groups the support by masked-value pattern.
/// Columns are ordered by mask code, then by first occurrence.
pub fn build_lp_capped(
    problem: &FiniteProblem,
    lambda: f64,
    max_columns: usize,
) -> Result<(LpSystem, PredictorTable)> {
    let d = problem.dim();
    if d >= 40 {
        return Err(Error::Capacity(format!("2^{d} masks cannot be enumerated")));
    }
    let m = problem.len();
    let means: Vec<f64> = problem.points().iter().map(|p| p.expected_label()).collect();

    let mut sys = LpSystem {
        d,
        m,
        lambda: 0.0,
        patterns: Vec::new(),
        masks: Vec::new(),
        columns: Vec::new(),
        mass: Vec::new(),
        loss: Vec::new(),
        cost: Vec::new(),
        feat_index: HashMap::new(),
    };
    let mut predictions = Vec::new();
    for code in 0..(1u64 << d) {
        let h = Mask::from_code(d, code);
        let mut groups: IndexMap<MaskedInstance, Vec<u32>> = IndexMap::new();
        for (i, pt) in problem.points().iter().enumerate() {
            groups.entry(apply_mask(&pt.x, &h)?).or_default().push(i as u32);
        }
        if sys.columns.len() + groups.len() > max_columns {
            return Err(Error::Capacity(format!(
                "more than {max_columns} masked-value patterns (d = {d}, {m} support points)"
            )));
        }
        for (pattern, rows) in groups {
            let mass: f64 = rows.iter().map(|&i| problem.point(i as usize).prob).sum();
            let f = rows
                .iter()
                .map(|&i| problem.point(i as usize).prob * means[i as usize])
                .sum::<f64>()
                / mass;
            let loss: f64 = rows
                .iter()
                .map(|&i| {
                    let pt = problem.point(i as usize);
                    pt.prob * pt.labels.iter().map(|(y, q)| q * (f - y).powi(2)).sum::<f64>()
                })
                .sum();
            sys.feat_index.insert(pattern.clone(), sys.columns.len());
            sys.patterns.push(pattern);
            sys.masks.push(h.clone());
            sys.columns.push(rows);
            sys.mass.push(mass);
            sys.loss.push(loss);
            predictions.push(f);
        }
    }
    sys.cost = vec![0.0; sys.columns.len()];
    sys.set_lambda(lambda)?;
    let table = PredictorTable {
        index: sys.feat_index.clone(),
        values: predictions,
    };
    Ok((sys, table))
}

pub fn solve_lp(sys: &LpSystem) -> Result<LpSolution> {
    Simplex::new(SimplexOptions::default()).solve(sys.m, &sys.cost, &unit_columns(&sys.columns))
}

/// Fans each column's `θ` out to every support point it covers.
pub fn lp_to_policy(sys: &LpSystem, theta: &[f64]) -> Result<TabularPolicy> {
    crate::error::check_dim(sys.cols(), theta.len())?;
    let mut rows: Vec<Vec<(Mask, f64)>> = vec![Vec::new(); sys.m];
    for (j, &t) in theta.iter().enumerate() {
        let t = t.clamp(0.0, 1.0);
        if t == 0.0 {
            continue;
        }
        for &i in &sys.columns[j] {
            rows[i as usize].push((sys.masks[j].clone(), t));
        }
    }
    for (i, row) in rows.iter_mut().enumerate() {
        let total: f64 = row.iter().map(|(_, p)| p).sum();
        let residual = (total - 1.0).abs();
        if residual > 1e-6 {
            return Err(Error::Conversion { row: i, residual });
        }
        for (_, p) in row.iter_mut() {
            *p /= total;
        }
    }
    TabularPolicy::new(rows)
}

/// The joint objective `E[(f*(x ⊙ h) − y)²] + λ E[‖h‖]` of a tabular policy,
/// evaluated directly from the problem.
pub fn policy_objective(
    problem: &FiniteProblem,
    policy: &TabularPolicy,
    table: &PredictorTable,
    lambda: f64,
) -> Result<f64> {
    policy.check_against(problem)?;
    let mut total = 0.0;
    for (i, pt) in problem.points().iter().enumerate() {
        for (h, z) in policy.row(i) {
            let v = apply_mask(&pt.x, h)?;
            let f = table
                .get(&v)
                .ok_or_else(|| Error::validation(format!("pattern {v} missing from predictor table")))?;
            let loss: f64 = pt.labels.iter().map(|(y, q)| q * (f - y).powi(2)).sum();
            total += pt.prob * z * (loss + lambda * h.count() as f64);
        }
    }
    Ok(total)
}
