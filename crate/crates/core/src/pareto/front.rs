use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audit::TabularPolicy;
use crate::error::{Error, Result};
use crate::problems::FiniteProblem;

use super::lp::{build_lp, lp_to_policy, LpSystem, PredictorTable};
use super::simplex::{LpSolution, Simplex, SimplexOptions};
use super::symmetry::ReducedLp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrontKind {
    LocalOptimal,
    GlobalOptimal,
    Measured,
}

impl fmt::Display for FrontKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrontKind::LocalOptimal => "local-optimal",
            FrontKind::GlobalOptimal => "global-optimal",
            FrontKind::Measured => "measured",
        })
    }
}

impl FromStr for FrontKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local-optimal" => Ok(FrontKind::LocalOptimal),
            "global-optimal" => Ok(FrontKind::GlobalOptimal),
            "measured" => Ok(FrontKind::Measured),
            _ => Err(Error::validation(format!("unknown front kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontPoint {
    /// The λ that produced the point; `None` for fixed-mask points.
    pub lambda: Option<f64>,
    /// Mean sparsity ratio `E[‖h‖] / d`.
    pub sparsity: f64,
    pub loss: f64,
}

impl FrontPoint {
    pub fn dominates(&self, other: &FrontPoint) -> bool {
        self.sparsity <= other.sparsity
            && self.loss <= other.loss
            && (self.sparsity < other.sparsity || self.loss < other.loss)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub kind: FrontKind,
    pub points: Vec<FrontPoint>,
}

impl ParetoFront {
    pub fn new(kind: FrontKind, points: Vec<FrontPoint>) -> Self {
        ParetoFront { kind, points }
    }

    /// Drops dominated points; of identical points the one with the lowest λ
    /// stays. The result is sorted by sparsity.
    pub fn pruned(&self) -> ParetoFront {
        let mut order: Vec<&FrontPoint> = self.points.iter().collect();
        order.sort_by(|a, b| {
            let la = a.lambda.unwrap_or(f64::INFINITY);
            let lb = b.lambda.unwrap_or(f64::INFINITY);
            la.total_cmp(&lb)
        });
        let mut kept: Vec<FrontPoint> = Vec::new();
        for p in &order {
            let dominated = self.points.iter().any(|q| q.dominates(p));
            let duplicate = kept
                .iter()
                .any(|k| k.sparsity == p.sparsity && k.loss == p.loss);
            if !dominated && !duplicate {
                kept.push(**p);
            }
        }
        kept.sort_by(|a, b| a.sparsity.total_cmp(&b.sparsity));
        ParetoFront {
            kind: self.kind,
            points: kept,
        }
    }

    /// Piecewise-linear interpolation of the (pruned) front at sparsity `s`.
    /// Beyond the densest point the front stays flat; below the sparsest
    /// point there is nothing to compare against.
    pub fn loss_at(&self, s: f64) -> Option<f64> {
        let front = self.pruned();
        let pts = &front.points;
        let first = pts.first()?;
        if s < first.sparsity - 1e-12 {
            return None;
        }
        for w in pts.windows(2) {
            if s <= w[1].sparsity {
                let (a, b) = (w[0], w[1]);
                if b.sparsity - a.sparsity <= 0.0 {
                    return Some(a.loss.min(b.loss));
                }
                let t = ((s - a.sparsity) / (b.sparsity - a.sparsity)).clamp(0.0, 1.0);
                return Some(a.loss + t * (b.loss - a.loss));
            }
        }
        Some(pts.last()?.loss)
    }
}

fn fmt_lambda(l: Option<f64>) -> String {
    l.map(|v| v.to_string()).unwrap_or_default()
}

/// `lambda,sparsity,loss,kind` for every point of every front.
pub fn fronts_to_csv(fronts: &[&ParetoFront]) -> String {
    let mut out = String::from("lambda,sparsity,loss,kind\n");
    for f in fronts {
        for p in &f.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_lambda(p.lambda),
                p.sparsity,
                p.loss,
                f.kind
            ));
        }
    }
    out
}

pub fn write_fronts(path: &Path, fronts: &[&ParetoFront]) -> Result<()> {
    fs::write(path, fronts_to_csv(fronts)).map_err(|e| Error::io(path, e))
}

/// Reads a front CSV back, one [`ParetoFront`] per kind in order of first
/// appearance.
pub fn read_fronts(path: &Path) -> Result<Vec<ParetoFront>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    let headers = reader.headers().map_err(|e| Error::format(path, e))?;
    if headers.iter().ne(["lambda", "sparsity", "loss", "kind"]) {
        return Err(Error::format(path, "header must be lambda,sparsity,loss,kind"));
    }
    let mut fronts: Vec<ParetoFront> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e))?;
        let bad = |what: &str| Error::format(path, format!("row {}: bad {what}", i + 1));
        let lambda = match &rec[0] {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|_| bad("lambda"))?),
        };
        let sparsity = rec[1].parse::<f64>().map_err(|_| bad("sparsity"))?;
        let loss = rec[2].parse::<f64>().map_err(|_| bad("loss"))?;
        let kind: FrontKind = rec[3].parse().map_err(|_| bad("kind"))?;
        let point = FrontPoint {
            lambda,
            sparsity,
            loss,
        };
        match fronts.iter_mut().find(|f| f.kind == kind) {
            Some(f) => f.points.push(point),
            None => fronts.push(ParetoFront::new(kind, vec![point])),
        }
    }
    Ok(fronts)
}

/// An LP system plus a warm-started solver, for solving the same problem at
/// many values of `λ`. Solves go through the symmetry-reduced LP and are
/// expanded back to one `θ` per column.
pub struct LocalSolver {
    sys: LpSystem,
    table: PredictorTable,
    reduced: ReducedLp,
    simplex: Simplex,
}

impl LocalSolver {
    pub fn new(problem: &FiniteProblem) -> Result<Self> {
        let (sys, table) = build_lp(problem, 0.0)?;
        let reduced = ReducedLp::new(problem, &sys)?;
        Ok(LocalSolver {
            sys,
            table,
            reduced,
            simplex: Simplex::new(SimplexOptions::default()),
        })
    }

    pub fn system(&self) -> &LpSystem {
        &self.sys
    }

    pub fn predictor(&self) -> &PredictorTable {
        &self.table
    }

    pub fn reduced(&self) -> &ReducedLp {
        &self.reduced
    }

    pub fn solve(&mut self, lambda: f64) -> Result<(LpSolution, FrontPoint)> {
        self.sys.set_lambda(lambda)?;
        let r = &self.reduced;
        let red = self.simplex.solve(r.rows(), &r.costs(self.sys.cost()), r.columns())?;
        let theta = r.expand(&red.theta);
        let primal_residual = self.sys.residual(&theta);
        if primal_residual > SimplexOptions::default().feasibility_tol {
            return Err(Error::Solver {
                iterations: red.iterations,
                reason: "expanded solution violates the full constraints".into(),
                primal_residual,
                min_reduced_cost: red.min_reduced_cost,
            });
        }
        let sol = LpSolution {
            objective: theta.iter().zip(self.sys.cost()).map(|(t, c)| t * c).sum(),
            theta,
            primal_residual,
            ..red
        };
        let point = FrontPoint {
            lambda: Some(lambda),
            sparsity: self.sys.sparsity_of(&sol.theta),
            loss: self.sys.loss_of(&sol.theta).max(0.0),
        };
        Ok((sol, point))
    }

    pub fn policy(&self, sol: &LpSolution) -> Result<TabularPolicy> {
        lp_to_policy(&self.sys, &sol.theta)
    }
}

/// One LP solve per `λ`, reported as (sparsity, loss) of the optimal
/// no-leakage policy, pruned to the non-dominated set.
pub fn local_front(problem: &FiniteProblem, lambdas: &[f64]) -> Result<ParetoFront> {
    if lambdas.is_empty() {
        return Err(Error::validation("at least one lambda is required"));
    }
    let mut solver = LocalSolver::new(problem)?;
    let mut points = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        points.push(solver.solve(l)?.1);
    }
    Ok(ParetoFront::new(FrontKind::LocalOptimal, points).pruned())
}

/// The exact local front. The achievable (sparsity, loss) region of
/// no-leakage policies is convex (mixtures stay feasible and both
/// coordinates are linear in θ), so its lower boundary is found by bisecting
/// on the slope `λ` between known vertices until every segment is confirmed.
pub fn local_hull(problem: &FiniteProblem) -> Result<ParetoFront> {
    let mut solver = LocalSolver::new(problem)?;
    local_hull_with(&mut solver, problem.label_variance())
}

pub fn local_hull_with(solver: &mut LocalSolver, label_variance: f64) -> Result<ParetoFront> {
    let d = solver.system().dim() as f64;
    let objective = |p: &FrontPoint, lambda: f64| p.loss + lambda * d * p.sparsity;

    let (_, lo) = solver.solve(0.0)?;
    let mut lambda_hi = label_variance.max(1e-3);
    let mut hi = solver.solve(lambda_hi)?.1;
    let mut doublings = 0;
    while hi.sparsity > 1e-12 {
        doublings += 1;
        if doublings > 60 {
            return Err(Error::Numeric("no saturating lambda found".into()));
        }
        lambda_hi *= 2.0;
        hi = solver.solve(lambda_hi)?.1;
    }

    let mut vertices = vec![lo, hi];
    let mut stack = vec![(lo, hi)];
    while let Some((a, b)) = stack.pop() {
        // a is denser than b
        let ds = a.sparsity - b.sparsity;
        if ds <= 1e-12 {
            continue;
        }
        let slope = (b.loss - a.loss) / (d * ds);
        if !(slope > 0.0) {
            continue;
        }
        let (_, p) = solver.solve(slope)?;
        let line = objective(&a, slope);
        let got = objective(&p, slope);
        if got < line - 1e-10 * (1.0 + line.abs())
            && p.sparsity < a.sparsity - 1e-12
            && p.sparsity > b.sparsity + 1e-12
        {
            vertices.push(p);
            stack.push((a, p));
            stack.push((p, b));
        }
    }
    Ok(ParetoFront::new(FrontKind::LocalOptimal, vertices).pruned())
}

/// Brute force over fixed masks: each mask's loss with the optimal predictor.
pub fn global_front(problem: &FiniteProblem) -> Result<ParetoFront> {
    let (sys, _) = build_lp(problem, 0.0)?;
    Ok(global_front_from(&sys))
}

pub fn global_front_from(sys: &LpSystem) -> ParetoFront {
    let points = sys
        .fixed_mask_losses()
        .into_iter()
        .map(|(h, loss)| FrontPoint {
            lambda: None,
            sparsity: h.sparsity_ratio(),
            loss: loss.max(0.0),
        })
        .collect();
    ParetoFront::new(FrontKind::GlobalOptimal, points).pruned()
}
