//! Exact leakage audits over enumerable problems.
//!
//! Every check works on the joint `p(x, y, h) = p(x, y) ζ(h | x)` by full
//! enumeration. For a mask `h` the support points are grouped by their
//! selected values `x ⊙ h`; each group is one `(h, x[s_in])` event, and the
//! comparisons run only where the conditioning events have probability above
//! [`POSITIVITY_CUTOFF`].

use std::collections::HashSet;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{apply_mask, Mask, MaskedInstance};
use crate::problems::FiniteProblem;

/// Probabilities at or below this are treated as zero when deciding
/// membership of the positive-probability set.
pub const POSITIVITY_CUTOFF: f64 = 1e-12;
/// Default tolerance for exact tabular policies.
pub const EXACT_TOL: f64 = 1e-9;
/// Default tolerance for policies recovered from an LP basis.
pub const LP_TOL: f64 = 1e-6;
pub const MAX_WITNESSES: usize = 100;

const NORMALIZATION_TOL: f64 = 1e-9;

/// `ζ(h | x)` tabulated for every support point of a [`FiniteProblem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyRepr", into = "PolicyRepr")]
pub struct TabularPolicy {
    rows: Vec<Vec<(Mask, f64)>>,
}

#[derive(Serialize, Deserialize)]
struct PolicyEntry {
    mask: Mask,
    prob: f64,
}

#[derive(Serialize, Deserialize)]
struct PolicyRepr {
    rows: Vec<Vec<PolicyEntry>>,
}

impl TryFrom<PolicyRepr> for TabularPolicy {
    type Error = Error;

    fn try_from(r: PolicyRepr) -> Result<Self> {
        TabularPolicy::new(
            r.rows
                .into_iter()
                .map(|row| row.into_iter().map(|e| (e.mask, e.prob)).collect())
                .collect(),
        )
    }
}

impl From<TabularPolicy> for PolicyRepr {
    fn from(p: TabularPolicy) -> Self {
        PolicyRepr {
            rows: p
                .rows
                .into_iter()
                .map(|row| {
                    row.into_iter()
                        .map(|(mask, prob)| PolicyEntry { mask, prob })
                        .collect()
                })
                .collect(),
        }
    }
}

impl TabularPolicy {
    pub fn new(rows: Vec<Vec<(Mask, f64)>>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            let mut seen = HashSet::new();
            let mut total = 0.0;
            for (h, p) in row {
                if !(*p >= 0.0) || !p.is_finite() {
                    return Err(Error::validation(format!(
                        "row {i}: mask {h} has invalid probability {p}"
                    )));
                }
                if !seen.insert(h) {
                    return Err(Error::validation(format!("row {i}: mask {h} listed twice")));
                }
                total += p;
            }
            if (total - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::validation(format!(
                    "row {i}: probabilities sum to {total}"
                )));
            }
        }
        Ok(TabularPolicy { rows })
    }

    /// `ζ(h | x) = 2^-d` for every mask.
    pub fn uniform(problem: &FiniteProblem) -> Self {
        let d = problem.dim();
        let p = 1.0 / (1u64 << d) as f64;
        let row: Vec<(Mask, f64)> = Mask::enumerate(d).map(|h| (h, p)).collect();
        TabularPolicy {
            rows: vec![row; problem.len()],
        }
    }

    /// Deterministic policy `ζ(rule(x) | x) = 1`.
    pub fn deterministic(problem: &FiniteProblem, rule: impl Fn(&[f64]) -> Mask) -> Self {
        TabularPolicy {
            rows: problem
                .points()
                .iter()
                .map(|p| vec![(rule(p.x.values()), 1.0)])
                .collect(),
        }
    }

    pub fn rows(&self) -> &[Vec<(Mask, f64)>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[(Mask, f64)] {
        &self.rows[i]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `ζ(h | x_i)`; zero for masks not listed.
    pub fn prob(&self, i: usize, h: &Mask) -> f64 {
        self.rows[i]
            .iter()
            .find(|(m, _)| m == h)
            .map_or(0.0, |(_, p)| *p)
    }

    /// Checks that the policy is defined on exactly the problem's support.
    pub fn check_against(&self, problem: &FiniteProblem) -> Result<()> {
        if self.rows.len() != problem.len() {
            return Err(Error::validation(format!(
                "policy has {} rows, problem support has {} points",
                self.rows.len(),
                problem.len()
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if let Some((h, _)) = row.iter().find(|(h, _)| h.len() != problem.dim()) {
                return Err(Error::validation(format!(
                    "row {i}: mask {h} has length {}, problem dimension is {}",
                    h.len(),
                    problem.dim()
                )));
            }
        }
        Ok(())
    }

    /// Expected `‖h‖ / d` under `p(x)`.
    pub fn mean_sparsity(&self, problem: &FiniteProblem) -> f64 {
        problem
            .points()
            .iter()
            .zip(&self.rows)
            .map(|(pt, row)| {
                pt.prob
                    * row
                        .iter()
                        .map(|(h, p)| p * h.sparsity_ratio())
                        .sum::<f64>()
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    /// Label distribution unchanged by conditioning on the selection.
    LabelLeakage,
    /// Distribution of non-selected features unchanged by the selection.
    FeatureLeakage,
    /// `ζ(h | x) = ζ(h | x')` whenever `x ⊙ h = x' ⊙ h`.
    Corollary,
    /// Selection probability independent of the label.
    LabelCondition,
    /// Selection probability independent of non-selected features.
    FeatureCondition,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Check::LabelLeakage => "label-leakage",
            Check::FeatureLeakage => "feature-leakage",
            Check::Corollary => "corollary",
            Check::LabelCondition => "label-condition",
            Check::FeatureCondition => "feature-condition",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Clean,
    Violated,
}

/// One comparison that disagrees by more than the tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub mask: Mask,
    pub selected: MaskedInstance,
    /// What is being compared, e.g. `y=2` or `x=(1, 0)`.
    pub subject: String,
    /// The unconditioned quantity (or `ζ(h|x)` for the corollary).
    pub reference: f64,
    /// The selection-conditioned quantity (or `ζ(h|x')`).
    pub conditioned: f64,
    pub discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub check: Check,
    pub verdict: Verdict,
    pub tolerance: f64,
    pub positivity_cutoff: f64,
    pub max_discrepancy: f64,
    /// Number of comparisons exceeding the tolerance (witnesses are capped).
    pub violations: usize,
    /// Largest discrepancy first, at most [`MAX_WITNESSES`].
    pub witnesses: Vec<Witness>,
}

impl LeakageReport {
    pub fn is_clean(&self) -> bool {
        self.verdict == Verdict::Clean
    }
}

struct ReportBuilder {
    check: Check,
    tol: f64,
    max: f64,
    witnesses: Vec<Witness>,
}

impl ReportBuilder {
    fn new(check: Check, tol: f64) -> Self {
        ReportBuilder {
            check,
            tol,
            max: 0.0,
            witnesses: Vec::new(),
        }
    }

    fn compare(
        &mut self,
        mask: &Mask,
        selected: &MaskedInstance,
        subject: impl FnOnce() -> String,
        reference: f64,
        conditioned: f64,
    ) {
        let diff = (reference - conditioned).abs();
        self.max = self.max.max(diff);
        if diff > self.tol {
            self.witnesses.push(Witness {
                mask: mask.clone(),
                selected: selected.clone(),
                subject: subject(),
                reference,
                conditioned,
                discrepancy: diff,
            });
        }
    }

    fn finish(mut self) -> LeakageReport {
        let violations = self.witnesses.len();
        // stable: ties keep enumeration order
        self.witnesses
            .sort_by(|a, b| b.discrepancy.total_cmp(&a.discrepancy));
        self.witnesses.truncate(MAX_WITNESSES);
        LeakageReport {
            check: self.check,
            verdict: if violations > 0 {
                Verdict::Violated
            } else {
                Verdict::Clean
            },
            tolerance: self.tol,
            positivity_cutoff: POSITIVITY_CUTOFF,
            max_discrepancy: self.max,
            violations,
            witnesses: self.witnesses,
        }
    }
}

/// The support points sharing one `x ⊙ h` value, with `ζ(h | x)` for each.
struct Group {
    selected: MaskedInstance,
    members: Vec<(usize, f64)>,
}

/// Groups by selected values, for every mask that has positive probability
/// somewhere. Order is deterministic (first occurrence).
fn groups(problem: &FiniteProblem, policy: &TabularPolicy) -> Result<Vec<(Mask, Vec<Group>)>> {
    policy.check_against(problem)?;
    let mut masks: IndexMap<&Mask, ()> = IndexMap::new();
    for row in policy.rows() {
        for (h, p) in row {
            if *p > 0.0 {
                masks.insert(h, ());
            }
        }
    }
    let mut out = Vec::with_capacity(masks.len());
    for h in masks.keys() {
        let mut by_value: IndexMap<MaskedInstance, Vec<(usize, f64)>> = IndexMap::new();
        for (i, pt) in problem.points().iter().enumerate() {
            let v = apply_mask(&pt.x, h)?;
            by_value.entry(v).or_default().push((i, policy.prob(i, h)));
        }
        let gs = by_value
            .into_iter()
            .map(|(selected, members)| Group { selected, members })
            .collect();
        out.push(((*h).clone(), gs));
    }
    Ok(out)
}

fn fmt_x(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("({})", parts.join(", "))
}

/// Per-label masses `(y, Σ p(x,y), Σ p(x,y) ζ(h|x))` within a group.
fn label_masses(problem: &FiniteProblem, g: &Group) -> IndexMap<u64, (f64, f64, f64)> {
    let mut m: IndexMap<u64, (f64, f64, f64)> = IndexMap::new();
    for &(i, z) in &g.members {
        let pt = problem.point(i);
        for &(y, q) in &pt.labels {
            let key = if y == 0.0 { 0 } else { y.to_bits() };
            let e = m.entry(key).or_insert((y, 0.0, 0.0));
            e.1 += pt.prob * q;
            e.2 += pt.prob * q * z;
        }
    }
    m
}

fn masses(problem: &FiniteProblem, g: &Group) -> (f64, f64) {
    g.members.iter().fold((0.0, 0.0), |(n, s), &(i, z)| {
        let p = problem.point(i).prob;
        (n + p, s + p * z)
    })
}

/// `p(y | x[s_in])` against `p(y | x[s_in], h)`.
pub fn check_label_leakage(
    problem: &FiniteProblem,
    policy: &TabularPolicy,
    tol: f64,
) -> Result<LeakageReport> {
    let mut report = ReportBuilder::new(Check::LabelLeakage, tol);
    for (h, gs) in groups(problem, policy)? {
        for g in &gs {
            let (nat, sel) = masses(problem, g);
            if sel <= POSITIVITY_CUTOFF {
                continue;
            }
            for (_, (y, nat_y, sel_y)) in label_masses(problem, g) {
                if nat_y <= POSITIVITY_CUTOFF {
                    continue;
                }
                report.compare(&h, &g.selected, || format!("y={y}"), nat_y / nat, sel_y / sel);
            }
        }
    }
    Ok(report.finish())
}

/// `p(x[s_ex] | x[s_in])` against `p(x[s_ex] | x[s_in], h)`.
pub fn check_feature_leakage(
    problem: &FiniteProblem,
    policy: &TabularPolicy,
    tol: f64,
) -> Result<LeakageReport> {
    let mut report = ReportBuilder::new(Check::FeatureLeakage, tol);
    for (h, gs) in groups(problem, policy)? {
        for g in &gs {
            let (nat, sel) = masses(problem, g);
            if sel <= POSITIVITY_CUTOFF {
                continue;
            }
            for &(i, z) in &g.members {
                if z <= POSITIVITY_CUTOFF {
                    continue;
                }
                let p = problem.point(i).prob;
                report.compare(
                    &h,
                    &g.selected,
                    || format!("x={}", fmt_x(problem.point(i).x.values())),
                    p / nat,
                    p * z / sel,
                );
            }
        }
    }
    Ok(report.finish())
}

/// `ζ(h | x) = ζ(h | x')` for every pair with `x ⊙ h = x' ⊙ h`.
pub fn check_corollary(
    problem: &FiniteProblem,
    policy: &TabularPolicy,
    tol: f64,
) -> Result<LeakageReport> {
    let mut report = ReportBuilder::new(Check::Corollary, tol);
    for (h, gs) in groups(problem, policy)? {
        for g in &gs {
            if g.members.len() < 2 {
                continue;
            }
            // the extreme pair carries the group's largest discrepancy
            let hi = g.members.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
            let lo = g.members.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
            report.compare(
                &h,
                &g.selected,
                || {
                    format!(
                        "x={} vs x'={}",
                        fmt_x(problem.point(hi.0).x.values()),
                        fmt_x(problem.point(lo.0).x.values())
                    )
                },
                hi.1,
                lo.1,
            );
        }
    }
    Ok(report.finish())
}

/// `p(h | x[s_in])` against `p(h | x[s_in], y)`.
pub fn check_label_condition(
    problem: &FiniteProblem,
    policy: &TabularPolicy,
    tol: f64,
) -> Result<LeakageReport> {
    let mut report = ReportBuilder::new(Check::LabelCondition, tol);
    for (h, gs) in groups(problem, policy)? {
        for g in &gs {
            let (nat, sel) = masses(problem, g);
            if sel <= POSITIVITY_CUTOFF {
                continue;
            }
            for (_, (y, nat_y, sel_y)) in label_masses(problem, g) {
                if nat_y <= POSITIVITY_CUTOFF {
                    continue;
                }
                report.compare(&h, &g.selected, || format!("y={y}"), sel / nat, sel_y / nat_y);
            }
        }
    }
    Ok(report.finish())
}

/// `p(h | x[s_in])` against `p(h | x[s_in], x[s_ex]) = ζ(h | x)`.
pub fn check_feature_condition(
    problem: &FiniteProblem,
    policy: &TabularPolicy,
    tol: f64,
) -> Result<LeakageReport> {
    let mut report = ReportBuilder::new(Check::FeatureCondition, tol);
    for (h, gs) in groups(problem, policy)? {
        for g in &gs {
            let (nat, sel) = masses(problem, g);
            if sel <= POSITIVITY_CUTOFF {
                continue;
            }
            for &(i, z) in &g.members {
                if z <= POSITIVITY_CUTOFF {
                    continue;
                }
                report.compare(
                    &h,
                    &g.selected,
                    || format!("x={}", fmt_x(problem.point(i).x.values())),
                    sel / nat,
                    z,
                );
            }
        }
    }
    Ok(report.finish())
}

pub fn run_check(
    check: Check,
    problem: &FiniteProblem,
    policy: &TabularPolicy,
    tol: f64,
) -> Result<LeakageReport> {
    match check {
        Check::LabelLeakage => check_label_leakage(problem, policy, tol),
        Check::FeatureLeakage => check_feature_leakage(problem, policy, tol),
        Check::Corollary => check_corollary(problem, policy, tol),
        Check::LabelCondition => check_label_condition(problem, policy, tol),
        Check::FeatureCondition => check_feature_condition(problem, policy, tol),
    }
}

/// Verdicts of the definition form and the condition form side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equivalence {
    pub definitions_clean: bool,
    pub conditions_clean: bool,
}

impl Equivalence {
    pub fn holds(&self) -> bool {
        self.definitions_clean == self.conditions_clean
    }
}

/// Compares "no label and no feature leakage" (definitions) against the
/// selection-probability conditions (label condition, feature condition and
/// the pairwise corollary form). The two must always agree.
pub fn audit_equivalence(
    problem: &FiniteProblem,
    policy: &TabularPolicy,
    tol: f64,
) -> Result<Equivalence> {
    let definitions_clean = check_label_leakage(problem, policy, tol)?.is_clean()
        && check_feature_leakage(problem, policy, tol)?.is_clean();
    let conditions_clean = check_label_condition(problem, policy, tol)?.is_clean()
        && check_feature_condition(problem, policy, tol)?.is_clean()
        && check_corollary(problem, policy, tol)?.is_clean();
    Ok(Equivalence {
        definitions_clean,
        conditions_clean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::FeatureVector;
    use crate::problems::fixtures;
    use crate::problems::{toy_problem, SupportPoint};

    #[test]
    fn table1_is_leaky_everywhere() {
        let (problem, policy) = fixtures::table1();
        let label = check_label_leakage(&problem, &policy, EXACT_TOL).unwrap();
        assert_eq!(label.verdict, Verdict::Violated);
        // conditioning on h=(1,0), x[1]=1 forces y=2 while p(y=2 | x[1]=1) = 0.5
        let w = label
            .witnesses
            .iter()
            .find(|w| w.mask == Mask::from_bits(vec![true, false]) && w.subject == "y=2")
            .unwrap();
        assert_eq!((w.reference, w.conditioned), (0.5, 1.0));

        assert!(!check_feature_leakage(&problem, &policy, EXACT_TOL).unwrap().is_clean());

        let cor = check_corollary(&problem, &policy, EXACT_TOL).unwrap();
        assert!(!cor.is_clean());
        assert!(cor.witnesses.iter().any(|w| w.mask == Mask::from_bits(vec![true, false])
            && w.reference == 1.0
            && w.conditioned == 0.0));
        assert!(audit_equivalence(&problem, &policy, EXACT_TOL).unwrap().holds());
    }

    #[test]
    fn table3_is_clean() {
        let (problem, policy) = fixtures::table3();
        for check in [Check::LabelLeakage, Check::FeatureLeakage, Check::Corollary] {
            let r = run_check(check, &problem, &policy, EXACT_TOL).unwrap();
            assert!(r.is_clean(), "{check}: {r:?}");
        }
    }

    #[test]
    fn uniform_policy_is_clean() {
        let problem = toy_problem(2);
        let policy = TabularPolicy::uniform(&problem);
        let eq = audit_equivalence(&problem, &policy, EXACT_TOL).unwrap();
        assert!(eq.definitions_clean && eq.conditions_clean);
        let (t1, _) = fixtures::table1();
        let u = TabularPolicy::uniform(&t1);
        assert!(audit_equivalence(&t1, &u, EXACT_TOL).unwrap().conditions_clean);
    }

    #[test]
    fn full_and_empty_deterministic_policies_are_clean() {
        let problem = toy_problem(2);
        for rule in [Mask::full(4), Mask::empty(4)] {
            let policy = TabularPolicy::deterministic(&problem, |_| rule.clone());
            for check in [Check::LabelLeakage, Check::FeatureLeakage, Check::Corollary] {
                assert!(run_check(check, &problem, &policy, EXACT_TOL).unwrap().is_clean());
            }
        }
    }

    #[test]
    fn policy_constant_in_x_passes_corollary() {
        let problem = toy_problem(1);
        let row = vec![
            (Mask::from_bits(vec![true, false]), 0.3),
            (Mask::from_bits(vec![false, true]), 0.7),
        ];
        let policy = TabularPolicy::new(vec![row; 4]).unwrap();
        assert!(check_corollary(&problem, &policy, EXACT_TOL).unwrap().is_clean());
    }

    #[test]
    fn single_entry_perturbation_is_detected() {
        let tol = EXACT_TOL;
        let problem = toy_problem(1);
        let base = TabularPolicy::uniform(&problem);
        for i in 0..problem.len() {
            for (a, b) in [(0usize, 1usize), (1, 2), (3, 0), (2, 3)] {
                let mut rows = base.rows().to_vec();
                rows[i][a].1 += 10.0 * tol;
                rows[i][b].1 -= 10.0 * tol;
                let policy = TabularPolicy::new(rows).unwrap();
                assert!(!check_corollary(&problem, &policy, tol).unwrap().is_clean());
                assert!(!check_feature_leakage(&problem, &policy, tol).unwrap().is_clean());
                assert!(audit_equivalence(&problem, &policy, tol).unwrap().holds());
            }
        }
    }

    #[test]
    fn label_only_leak_is_caught_by_label_check() {
        // one x, two labels: nothing to leak about features, but a
        // policy may not depend on y, which a tabular policy cannot anyway
        let problem = FiniteProblem::new(vec![SupportPoint {
            x: FeatureVector::new(vec![1.0]).unwrap(),
            prob: 1.0,
            labels: vec![(0.0, 0.5), (1.0, 0.5)],
        }])
        .unwrap();
        let policy = TabularPolicy::new(vec![vec![
            (Mask::full(1), 0.4),
            (Mask::empty(1), 0.6),
        ]])
        .unwrap();
        for check in [Check::LabelLeakage, Check::LabelCondition, Check::Corollary] {
            assert!(run_check(check, &problem, &policy, EXACT_TOL).unwrap().is_clean());
        }
    }

    #[test]
    fn witnesses_are_sorted_and_capped() {
        let problem = toy_problem(3);
        // leaky: select the first feature iff the label is large
        let policy = TabularPolicy::deterministic(&problem, |x| {
            if x.chunks(2).any(|p| p[0] * p[1] > 0.0) {
                Mask::from_indices(6, &[0]).unwrap()
            } else {
                Mask::from_indices(6, &[1]).unwrap()
            }
        });
        let r = check_feature_leakage(&problem, &policy, EXACT_TOL).unwrap();
        assert!(!r.is_clean());
        assert!(r.witnesses.len() <= MAX_WITNESSES);
        assert!(r.violations >= r.witnesses.len());
        assert!(r
            .witnesses
            .windows(2)
            .all(|w| w[0].discrepancy >= w[1].discrepancy));
        assert_eq!(r.witnesses[0].discrepancy, r.max_discrepancy);
    }

    #[test]
    fn rejects_mismatched_policy() {
        let problem = toy_problem(1);
        let policy = TabularPolicy::new(vec![vec![(Mask::full(2), 1.0)]]).unwrap();
        assert!(matches!(
            check_corollary(&problem, &policy, EXACT_TOL),
            Err(Error::Validation(_))
        ));
        assert!(TabularPolicy::new(vec![vec![(Mask::full(2), 0.9)]]).is_err());
    }

    #[test]
    fn report_json_round_trip() {
        let (problem, policy) = fixtures::table1();
        let r = check_label_leakage(&problem, &policy, EXACT_TOL).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        let back: LeakageReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
