//! Revised simplex for `min cᵀθ  s.t.  Aθ = 1, θ ≥ 0` with `A` given
//! column-wise as sparse `(row, value)` lists.
//!
//! The basis inverse is kept dense (column-major) and updated by elementary
//! row operations after every pivot. Pricing is Devex; the right-hand side
//! is perturbed while pivoting so that steps are never degenerate, and if a
//! run of zero steps still occurs the solver falls back to Bland's rule
//! until the objective moves again.

use crate::error::{Error, Result};

/// Sparse column: `(row, coefficient)` pairs.
pub type Column = Vec<(u32, f64)>;

#[derive(Debug, Clone)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Reduced costs above `-optimality_tol` count as non-negative.
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    /// Bound on `‖Aθ − b‖∞` for an accepted solution.
    pub feasibility_tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_limit: usize,
    /// Iterations between drift checks of the basis inverse.
    pub check_interval: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_iterations: 500_000,
            optimality_tol: 1e-11,
            pivot_tol: 1e-7,
            feasibility_tol: 1e-8,
            degenerate_limit: 50,
            check_interval: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub theta: Vec<f64>,
    pub objective: f64,
    /// Pivots used by this solve.
    pub iterations: usize,
    pub primal_residual: f64,
    pub min_reduced_cost: f64,
}

const NONE: usize = usize::MAX;

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    One,
    Two,
}

/// Solver state. Reusing one instance for a sequence of problems that differ
/// only in their costs warm-starts each solve from the previous basis.
#[derive(Debug, Clone)]
pub struct Simplex {
    opts: SimplexOptions,
    m: usize,
    n: usize,
    nnz: usize,
    basis: Vec<usize>,
    pos: Vec<usize>,
    binv: Vec<f64>,
    x: Vec<f64>,
    /// Current right-hand side: all ones, or ones plus a perturbation.
    rhs: Vec<f64>,
    /// Transpose of `A`.
    row_cols: Vec<Vec<(u32, f64)>>,
    iterations: usize,
}

impl Simplex {
    pub fn new(opts: SimplexOptions) -> Self {
        Simplex {
            opts,
            m: 0,
            n: 0,
            nnz: 0,
            basis: Vec::new(),
            pos: Vec::new(),
            binv: Vec::new(),
            x: Vec::new(),
            rhs: Vec::new(),
            row_cols: Vec::new(),
            iterations: 0,
        }
    }

    /// Basic variable per row position; indices `≥ n` are artificials.
    pub fn basis(&self) -> &[usize] {
        &self.basis
    }

    pub fn solve(&mut self, m: usize, costs: &[f64], columns: &[Column]) -> Result<LpSolution> {
        let n = costs.len();
        if columns.len() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: columns.len(),
            });
        }
        if m == 0 {
            return Err(Error::validation("LP has no rows"));
        }
        if let Some(j) = costs.iter().position(|c| !c.is_finite()) {
            return Err(Error::Numeric(format!("cost of column {j} is not finite")));
        }
        let mut nnz = 0;
        for (j, col) in columns.iter().enumerate() {
            if col.is_empty() {
                return Err(Error::validation(format!("column {j} is empty")));
            }
            for &(i, v) in col {
                if i as usize >= m {
                    return Err(Error::validation(format!("column {j} references row {i} of {m}")));
                }
                if !v.is_finite() || v == 0.0 {
                    return Err(Error::Numeric(format!("column {j} has coefficient {v}")));
                }
            }
            nnz += col.len();
        }
        let start = self.iterations;
        if self.m != m || self.n != n || self.nnz != nnz {
            self.cold_start(m, costs, columns);
            self.nnz = nnz;
        }
        self.rhs = vec![1.0; m];
        self.recompute_x();

        if self.basis.iter().any(|&v| v >= n) {
            let cost1 = |v: usize| if v >= n { 1.0 } else { 0.0 };
            self.iterate(Phase::One, &cost1, columns)?;
            let infeas: f64 = (0..m).filter(|&r| self.basis[r] >= n).map(|r| self.x[r]).sum();
            if infeas > self.opts.feasibility_tol {
                return Err(self.failure(start, "infeasible: artificial variables remain positive", columns, costs));
            }
        }

        let cost2 = |v: usize| if v >= n { 0.0 } else { costs[v] };
        if self.basis.iter().all(|&v| v < n) {
            // Shift b by B·ε so the current basis stays feasible and no basic
            // variable sits at zero; pivots then always make progress.
            // Dual feasibility does not depend on b, so the final basis only
            // needs a primal clean-up once b is restored.
            for r in 0..m {
                let eps = 1e-6 * (1.0 + unit_hash(r as u64));
                for (i, v) in self.entries(self.basis[r], columns) {
                    self.rhs[i] += eps * v;
                }
            }
            self.recompute_x();
            self.iterate(Phase::Two, &cost2, columns)?;
            self.rhs = vec![1.0; m];
            self.recompute_x();
            self.dual_cleanup(&cost2, columns)?;
        }
        let mut attempts = 0;
        loop {
            self.iterate(Phase::Two, &cost2, columns)?;
            let (primal, dual) = self.drift(&cost2, columns);
            let min_rc = self.min_reduced_cost(&cost2, columns);
            if primal <= 1e-10 && dual <= 1e-10 && min_rc >= -self.opts.optimality_tol {
                break;
            }
            attempts += 1;
            if attempts > 3 {
                return Err(self.failure(start, "could not certify optimality", columns, costs));
            }
            self.refactor(columns)?;
            self.dual_cleanup(&cost2, columns)?;
        }

        let theta = self.theta();
        let residual = primal_residual(m, &theta, columns);
        if residual > self.opts.feasibility_tol {
            return Err(self.failure(start, "primal residual above tolerance", columns, costs));
        }
        let objective = theta.iter().zip(costs).map(|(t, c)| t * c).sum();
        Ok(LpSolution {
            theta,
            objective,
            iterations: self.iterations - start,
            primal_residual: residual,
            min_reduced_cost: self.min_reduced_cost(&cost2, columns),
        })
    }

    fn theta(&self) -> Vec<f64> {
        let mut theta = vec![0.0; self.n];
        for r in 0..self.m {
            let v = self.basis[r];
            if v < self.n {
                theta[v] = self.x[r].max(0.0);
            }
        }
        theta
    }

    fn failure(&self, start: usize, reason: &str, columns: &[Column], costs: &[f64]) -> Error {
        let n = self.n;
        let cost2 = |v: usize| if v >= n { 0.0 } else { costs[v] };
        Error::Solver {
            iterations: self.iterations - start,
            reason: reason.to_string(),
            primal_residual: primal_residual(self.m, &self.theta(), columns),
            min_reduced_cost: self.min_reduced_cost(&cost2, columns),
        }
    }

    /// Starts from the cheapest positive singleton column of every row, or
    /// an artificial where a row has none. The basis matrix is diagonal.
    fn cold_start(&mut self, m: usize, costs: &[f64], columns: &[Column]) {
        let n = costs.len();
        self.m = m;
        self.n = n;
        self.basis = (0..m).map(|r| n + r).collect();
        let mut unit_cost = vec![f64::INFINITY; m];
        for (j, col) in columns.iter().enumerate() {
            if let [(r, v)] = col[..] {
                let r = r as usize;
                if v > 0.0 && costs[j] / v < unit_cost[r] {
                    unit_cost[r] = costs[j] / v;
                    self.basis[r] = j;
                }
            }
        }
        self.row_cols = vec![Vec::new(); m];
        for (j, col) in columns.iter().enumerate() {
            for &(i, v) in col {
                self.row_cols[i as usize].push((j as u32, v));
            }
        }
        self.pos = vec![NONE; n + m];
        for (r, &v) in self.basis.iter().enumerate() {
            self.pos[v] = r;
        }
        self.binv = vec![0.0; m * m];
        for r in 0..m {
            let v = self.basis[r];
            let diag = if v < n { columns[v][0].1 } else { 1.0 };
            self.binv[r * m + r] = 1.0 / diag;
        }
    }

    /// Entries of a structural or artificial column.
    fn entries<'a>(&self, v: usize, columns: &'a [Column]) -> Box<dyn Iterator<Item = (usize, f64)> + 'a> {
        if v < self.n {
            Box::new(columns[v].iter().map(|&(i, a)| (i as usize, a)))
        } else {
            Box::new(std::iter::once((v - self.n, 1.0)))
        }
    }

    fn recompute_x(&mut self) {
        let m = self.m;
        let mut x = vec![0.0; m];
        for c in 0..m {
            let col = &self.binv[c * m..(c + 1) * m];
            let b = self.rhs[c];
            for r in 0..m {
                x[r] += col[r] * b;
            }
        }
        self.x = x;
    }

    fn duals(&self, cost: &dyn Fn(usize) -> f64) -> Vec<f64> {
        let m = self.m;
        let cb: Vec<f64> = self.basis.iter().map(|&v| cost(v)).collect();
        (0..m)
            .map(|c| {
                let col = &self.binv[c * m..(c + 1) * m];
                col.iter().zip(&cb).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    fn reduced_costs(&self, cost: &dyn Fn(usize) -> f64, columns: &[Column]) -> Vec<f64> {
        let y = self.duals(cost);
        columns
            .iter()
            .enumerate()
            .map(|(j, col)| {
                if self.pos[j] != NONE {
                    0.0
                } else {
                    cost(j) - col.iter().map(|&(i, v)| v * y[i as usize]).sum::<f64>()
                }
            })
            .collect()
    }

    fn min_reduced_cost(&self, cost: &dyn Fn(usize) -> f64, columns: &[Column]) -> f64 {
        let dj = self.reduced_costs(cost, columns);
        (0..self.n)
            .filter(|&j| self.pos[j] == NONE)
            .map(|j| dj[j])
            .fold(0.0, f64::min)
    }

    /// Residuals of `B x = b` and `Bᵀ y = c_B` under the current inverse.
    fn drift(&self, cost: &dyn Fn(usize) -> f64, columns: &[Column]) -> (f64, f64) {
        let m = self.m;
        let y = self.duals(cost);
        let mut bx = vec![0.0; m];
        let mut dual = 0.0f64;
        for r in 0..m {
            let v = self.basis[r];
            let mut s = 0.0;
            for (i, a) in self.entries(v, columns) {
                bx[i] += a * self.x[r];
                s += a * y[i];
            }
            dual = dual.max((s - cost(v)).abs());
        }
        let primal = bx
            .iter()
            .zip(&self.rhs)
            .map(|(v, b)| (v - b).abs())
            .fold(0.0, f64::max);
        (primal, dual)
    }

    /// Rebuilds the inverse from scratch by Gauss-Jordan elimination.
    fn refactor(&mut self, columns: &[Column]) -> Result<()> {
        let m = self.m;
        // row-major B and its inverse, converted at the end
        let mut b = vec![0.0f64; m * m];
        for r in 0..m {
            for (i, a) in self.entries(self.basis[r], columns) {
                b[i * m + r] = a;
            }
        }
        let mut inv = vec![0.0f64; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for k in 0..m {
            let p = (k..m)
                .max_by(|&a, &c| b[a * m + k].abs().total_cmp(&b[c * m + k].abs()))
                .unwrap();
            if b[p * m + k].abs() < 1e-12 {
                return Err(Error::Numeric("basis matrix is singular".into()));
            }
            if p != k {
                for c in 0..m {
                    b.swap(p * m + c, k * m + c);
                    inv.swap(p * m + c, k * m + c);
                }
            }
            let piv = b[k * m + k];
            for c in 0..m {
                b[k * m + c] /= piv;
                inv[k * m + c] /= piv;
            }
            let (brow, irow) = (b[k * m..(k + 1) * m].to_vec(), inv[k * m..(k + 1) * m].to_vec());
            for r in 0..m {
                if r == k {
                    continue;
                }
                let f = b[r * m + k];
                if f == 0.0 {
                    continue;
                }
                for c in 0..m {
                    b[r * m + c] -= f * brow[c];
                    inv[r * m + c] -= f * irow[c];
                }
            }
        }
        for r in 0..m {
            for c in 0..m {
                self.binv[c * m + r] = inv[r * m + c];
            }
        }
        self.recompute_x();
        Ok(())
    }

    /// `B⁻¹ a_j`.
    fn ftran(&self, j: usize, columns: &[Column], alpha: &mut [f64]) {
        let m = self.m;
        alpha.iter_mut().for_each(|a| *a = 0.0);
        for &(i, v) in &columns[j] {
            let col = &self.binv[i as usize * m..(i as usize + 1) * m];
            for r in 0..m {
                alpha[r] += v * col[r];
            }
        }
    }

    /// Dual simplex from a dual-feasible basis until `x ≥ 0`.
    fn dual_cleanup(&mut self, cost: &dyn Fn(usize) -> f64, columns: &[Column]) -> Result<()> {
        let m = self.m;
        let feas = 1e-11;
        let mut alpha = vec![0.0; m];
        loop {
            let (r, xr) = self
                .x
                .iter()
                .copied()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("at least one row");
            if xr >= -feas {
                for v in self.x.iter_mut() {
                    *v = v.max(0.0);
                }
                return Ok(());
            }
            if self.iterations >= self.opts.max_iterations {
                return Err(Error::Solver {
                    iterations: self.iterations,
                    reason: "iteration cap exceeded in primal clean-up".into(),
                    primal_residual: -xr,
                    min_reduced_cost: self.min_reduced_cost(cost, columns),
                });
            }
            let y = self.duals(cost);
            let rho: Vec<f64> = (0..m).map(|c| self.binv[c * m + r]).collect();
            let mut entering = NONE;
            let mut best = f64::INFINITY;
            let mut best_a = 0.0f64;
            for (j, col) in columns.iter().enumerate() {
                if self.pos[j] != NONE {
                    continue;
                }
                let a: f64 = col.iter().map(|&(i, v)| v * rho[i as usize]).sum();
                if a >= -self.opts.pivot_tol {
                    continue;
                }
                let d = (cost(j) - col.iter().map(|&(i, v)| v * y[i as usize]).sum::<f64>()).max(0.0);
                let ratio = d / -a;
                if ratio < best - 1e-14 || (ratio <= best + 1e-14 && a.abs() > best_a.abs()) {
                    best = ratio;
                    best_a = a;
                    entering = j;
                }
            }
            if entering == NONE {
                return Err(Error::Solver {
                    iterations: self.iterations,
                    reason: "infeasible: no entering column in primal clean-up".into(),
                    primal_residual: -xr,
                    min_reduced_cost: self.min_reduced_cost(cost, columns),
                });
            }
            self.ftran(entering, columns, &mut alpha);
            let step = self.x[r] / alpha[r];
            for k in 0..m {
                self.x[k] -= step * alpha[k];
            }
            self.x[r] = step;
            self.pivot(r, entering, &alpha);
        }
    }

    /// Replaces the basic variable of row `leave` by `entering` and updates
    /// the inverse.
    fn pivot(&mut self, leave: usize, entering: usize, alpha: &[f64]) {
        let m = self.m;
        let ar = alpha[leave];
        for c in 0..m {
            let col = &mut self.binv[c * m..(c + 1) * m];
            let piv = col[leave] / ar;
            if piv != 0.0 {
                for r in 0..m {
                    col[r] -= alpha[r] * piv;
                }
            }
            col[leave] = piv;
        }
        let old = self.basis[leave];
        self.pos[old] = NONE;
        self.basis[leave] = entering;
        self.pos[entering] = leave;
        self.iterations += 1;
    }

    /// Primal simplex with Devex pricing. Reduced costs are updated from the
    /// pivot row, which is assembled from the nonzeros of row `r` of `B⁻¹`.
    fn iterate(&mut self, phase: Phase, cost: &dyn Fn(usize) -> f64, columns: &[Column]) -> Result<()> {
        let m = self.m;
        let n = self.n;
        let tol = self.opts.optimality_tol;
        let mut degenerate = 0usize;
        let mut since_check = 0usize;
        let mut alpha = vec![0.0; m];
        let mut rho = vec![0.0; m];
        let mut prow = vec![0.0; n];
        let mut seen = vec![false; n];
        let mut touched: Vec<u32> = Vec::new();
        let mut weights = vec![1.0; n];
        let mut dj = self.reduced_costs(cost, columns);
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(Error::Solver {
                    iterations: self.iterations,
                    reason: "iteration cap exceeded".into(),
                    primal_residual: self.drift(cost, columns).0,
                    min_reduced_cost: self.min_reduced_cost(cost, columns),
                });
            }
            since_check += 1;
            if since_check >= self.opts.check_interval {
                since_check = 0;
                let (p, d) = self.drift(cost, columns);
                if p > 1e-10 || d > 1e-10 {
                    self.refactor(columns)?;
                }
                dj = self.reduced_costs(cost, columns);
            }

            let bland = degenerate >= self.opts.degenerate_limit;
            let mut entering = NONE;
            if bland {
                entering = (0..n)
                    .find(|&j| self.pos[j] == NONE && dj[j] < -tol)
                    .unwrap_or(NONE);
            } else {
                let mut score = 0.0;
                for j in 0..n {
                    let d = dj[j];
                    if d < -tol && self.pos[j] == NONE {
                        let s = d * d / weights[j];
                        if s > score {
                            score = s;
                            entering = j;
                        }
                    }
                }
            }
            if entering == NONE {
                // confirm against freshly computed reduced costs
                let fresh = self.reduced_costs(cost, columns);
                if (0..n).any(|j| self.pos[j] == NONE && fresh[j] < -tol) {
                    dj = fresh;
                    continue;
                }
                return Ok(());
            }
            let dq = dj[entering];
            self.ftran(entering, columns, &mut alpha);

            let mut leave = NONE;
            let mut ratio = f64::INFINITY;
            for r in 0..m {
                let a = alpha[r];
                let artificial = self.basis[r] >= n;
                let cand = if a > self.opts.pivot_tol {
                    self.x[r].max(0.0) / a
                } else if phase == Phase::Two && artificial && a.abs() > self.opts.pivot_tol {
                    // an artificial at zero must leave rather than go negative
                    0.0
                } else {
                    continue;
                };
                let better = if leave == NONE || cand < ratio - 1e-14 {
                    true
                } else if cand <= ratio + 1e-14 {
                    if bland {
                        self.basis[r] < self.basis[leave]
                    } else {
                        a.abs() > alpha[leave].abs()
                    }
                } else {
                    false
                };
                if better {
                    leave = r;
                    ratio = cand;
                }
            }
            if leave == NONE {
                return Err(Error::Solver {
                    iterations: self.iterations,
                    reason: "unbounded direction".into(),
                    primal_residual: self.drift(cost, columns).0,
                    min_reduced_cost: dq,
                });
            }

            // pivot row ρᵀA with ρ = row `leave` of B⁻¹
            for c in 0..m {
                rho[c] = self.binv[c * m + leave];
            }
            for &j in &touched {
                prow[j as usize] = 0.0;
                seen[j as usize] = false;
            }
            touched.clear();
            for (i, &r) in rho.iter().enumerate() {
                if r != 0.0 {
                    for &(j, v) in &self.row_cols[i] {
                        if !seen[j as usize] {
                            seen[j as usize] = true;
                            touched.push(j);
                        }
                        prow[j as usize] += r * v;
                    }
                }
            }
            let arq = alpha[leave];
            let theta_d = dq / arq;
            let wq = weights[entering];
            for &j in &touched {
                let j = j as usize;
                if self.pos[j] != NONE {
                    continue;
                }
                let a = prow[j];
                dj[j] -= theta_d * a;
                let w = (a / arq).powi(2) * wq;
                if w > weights[j] {
                    weights[j] = w;
                }
            }
            let old = self.basis[leave];
            if old < n {
                dj[old] = -theta_d;
                weights[old] = (wq / (arq * arq)).max(1.0);
            }
            dj[entering] = 0.0;

            let step = ratio;
            for r in 0..m {
                self.x[r] -= step * alpha[r];
                if self.x[r].abs() < 1e-13 {
                    self.x[r] = 0.0;
                }
            }
            self.x[leave] = step;

            self.pivot(leave, entering, &alpha);

            if step <= 1e-14 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
        }
    }
}

/// Deterministic value in `[0, 1)` (splitmix64 finalizer).
fn unit_hash(k: u64) -> f64 {
    let mut z = k.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// `‖Aθ − 1‖∞`.
pub fn primal_residual(m: usize, theta: &[f64], columns: &[Column]) -> f64 {
    let mut ax = vec![0.0; m];
    for (t, col) in theta.iter().zip(columns) {
        if *t != 0.0 {
            for &(i, v) in col {
                ax[i as usize] += t * v;
            }
        }
    }
    ax.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max)
}

/// 0/1 columns as weighted columns.
pub fn unit_columns(columns: &[Vec<u32>]) -> Vec<Column> {
    columns
        .iter()
        .map(|c| c.iter().map(|&i| (i, 1.0)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cols(c: &[&[u32]]) -> Vec<Column> {
        unit_columns(&c.iter().map(|c| c.to_vec()).collect::<Vec<_>>())
    }

    #[test]
    fn two_variable_example() {
        let s = Simplex::new(SimplexOptions::default())
            .solve(1, &[1.0, 0.0], &cols(&[&[0], &[0]]))
            .unwrap();
        assert_eq!(s.theta, vec![0.0, 1.0]);
        assert_eq!(s.objective, 0.0);
    }

    /// Brute force over every basis: solve `B x = 1` by elimination, keep the
    /// feasible ones, take the cheapest.
    fn vertex_oracle(m: usize, c: &[f64], cols: &[Column]) -> Option<f64> {
        let n = c.len();
        let mut best: Option<f64> = None;
        for code in 0u32..(1 << n) {
            if code.count_ones() as usize != m {
                continue;
            }
            let chosen: Vec<usize> = (0..n).filter(|j| code >> j & 1 == 1).collect();
            let mut a = vec![vec![0.0f64; m + 1]; m];
            for (k, &j) in chosen.iter().enumerate() {
                for &(i, v) in &cols[j] {
                    a[i as usize][k] = v;
                }
            }
            for row in a.iter_mut() {
                row[m] = 1.0;
            }
            let mut ok = true;
            for k in 0..m {
                let p = (k..m).max_by(|&x, &y| a[x][k].abs().total_cmp(&a[y][k].abs())).unwrap();
                if a[p][k].abs() < 1e-9 {
                    ok = false;
                    break;
                }
                a.swap(p, k);
                for r in 0..m {
                    if r != k {
                        let f = a[r][k] / a[k][k];
                        for cc in 0..=m {
                            a[r][cc] -= f * a[k][cc];
                        }
                    }
                }
            }
            if !ok {
                continue;
            }
            let x: Vec<f64> = (0..m).map(|k| a[k][m] / a[k][k]).collect();
            if x.iter().any(|&v| v < -1e-9) {
                continue;
            }
            let obj: f64 = chosen.iter().zip(&x).map(|(&j, v)| c[j] * v).sum();
            best = Some(best.map_or(obj, |b: f64| b.min(obj)));
        }
        best
    }

    #[test]
    fn matches_vertex_enumeration_on_random_lps() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..300 {
            let m = rng.gen_range(1..=4);
            let weighted = case % 2 == 1;
            let mut cs: Vec<Column> = Vec::new();
            for i in 0..m {
                if rng.gen_bool(0.7) || i == 0 {
                    cs.push(vec![(i as u32, 1.0)]);
                }
            }
            while cs.len() < 9 {
                let mut col: Column = Vec::new();
                for i in 0..m as u32 {
                    if rng.gen_bool(0.5) {
                        let v = if weighted { rng.gen_range(1..4) as f64 } else { 1.0 };
                        col.push((i, v));
                    }
                }
                if !col.is_empty() {
                    cs.push(col);
                }
            }
            let c: Vec<f64> = (0..cs.len()).map(|_| rng.gen_range(-1.0..2.0)).collect();
            let oracle = vertex_oracle(m, &c, &cs);
            match Simplex::new(SimplexOptions::default()).solve(m, &c, &cs) {
                Ok(s) => {
                    let o = oracle.expect("solver found a solution, oracle must too");
                    assert!((s.objective - o).abs() < 1e-9, "{} vs {o}", s.objective);
                    assert!(s.primal_residual <= 1e-9);
                    assert!(s.theta.iter().all(|&t| t >= 0.0));
                }
                Err(e) => assert!(oracle.is_none(), "{e}"),
            }
        }
    }

    #[test]
    fn warm_start_after_cost_change() {
        let cs = cols(&[&[0], &[1], &[0, 1]]);
        let mut s = Simplex::new(SimplexOptions::default());
        let a = s.solve(2, &[1.0, 1.0, 3.0], &cs).unwrap();
        assert!((a.objective - 2.0).abs() < 1e-12);
        let b = s.solve(2, &[1.0, 1.0, 0.5], &cs).unwrap();
        assert!((b.objective - 0.5).abs() < 1e-12);
        assert_eq!(b.theta, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn infeasible_system_is_reported() {
        // rows 0 and 2 force both columns to 1, row 1 then sums to 2
        let cs = cols(&[&[0, 1], &[1, 2]]);
        let err = Simplex::new(SimplexOptions::default()).solve(3, &[1.0, 1.0], &cs);
        assert!(matches!(err, Err(Error::Solver { .. })));
    }

    #[test]
    fn fractional_vertex_without_unit_columns() {
        let cs = cols(&[&[0, 1], &[1, 2], &[0, 2]]);
        let s = Simplex::new(SimplexOptions::default()).solve(3, &[1.0; 3], &cs).unwrap();
        assert!((s.objective - 1.5).abs() < 1e-12);
        assert!(s.theta.iter().all(|t| (t - 0.5).abs() < 1e-12));
    }

    #[test]
    fn rejects_malformed_columns() {
        let mut s = Simplex::new(SimplexOptions::default());
        assert!(s.solve(1, &[1.0], &[vec![(3, 1.0)]]).is_err());
        assert!(s.solve(1, &[1.0], &[vec![]]).is_err());
        assert!(s.solve(1, &[f64::NAN], &[vec![(0, 1.0)]]).is_err());
    }
}
