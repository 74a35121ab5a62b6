//! The no-leakage linear program, its optimal predictor, and Pareto fronts
//! of local (per-instance) and global (fixed-mask) selection.

mod front;
mod lp;
pub mod simplex;
mod symmetry;

pub use front::{
    fronts_to_csv, global_front, global_front_from, local_front, local_hull, local_hull_with,
    read_fronts, write_fronts, FrontKind, FrontPoint, LocalSolver, ParetoFront,
};
pub use lp::{
    build_lp, build_lp_capped, lp_to_policy, policy_objective, solve_lp, LpSystem,
    PredictorTable, DEFAULT_MAX_COLUMNS,
};
pub use simplex::{LpSolution, Simplex, SimplexOptions};
pub use symmetry::{coordinate_symmetries, ReducedLp};
