use suwr_core::audit::{run_check, Check, LP_TOL};
use suwr_core::pareto::{build_lp, lp_to_policy, solve_lp, LocalSolver};
use suwr_core::problems::toy_problem;

/// The unreduced 1024 × 59049 program solved directly, compared against the
/// symmetry-reduced solve. Takes long; run with `--ignored`.
#[test]
#[ignore]
fn unreduced_toy_lp_matches_reduced_solve() {
    let problem = toy_problem(5);
    let mut reduced = LocalSolver::new(&problem).unwrap();
    for lambda in [0.3, 0.8] {
        let (sys, _) = build_lp(&problem, lambda).unwrap();
        assert_eq!((sys.rows(), sys.cols()), (1024, 59049));
        let sol = solve_lp(&sys).unwrap();
        let (small, _) = reduced.solve(lambda).unwrap();
        assert!(
            (sol.objective - small.objective).abs() <= 1e-6,
            "λ={lambda}: {} vs {}",
            sol.objective,
            small.objective
        );
        let policy = lp_to_policy(&sys, &sol.theta).unwrap();
        for check in [Check::LabelLeakage, Check::FeatureLeakage, Check::Corollary] {
            assert!(run_check(check, &problem, &policy, LP_TOL).unwrap().is_clean());
        }
    }
}
