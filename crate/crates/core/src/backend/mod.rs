//! Pluggable MILP solving.
//!
//! [`BranchAndBound`] is the built-in exact solver, [`BruteForce`] the
//! enumeration oracle, and [`ExternalSolver`] shells out to any command that
//! reads LP text and writes `name value` lines.

mod bnb;
mod brute;
mod external;
pub mod simplex;

use serde::{Deserialize, Serialize};
use web_time::Instant;

use crate::milp::{Assignment, MilpInstance};

pub use bnb::{branch_and_bound, branch_and_bound_traced, BnbTrace};
pub use brute::{brute_force, BRUTE_FORCE_LIMIT};
pub use external::{external_solve, ExternalSolver, EXTERNAL_SOLVER_ENV};

/// Box applied to infinite bounds of continuous variables inside the
/// relaxation.
pub const LP_BOX: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    Timeout,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub assignment: Option<Assignment>,
    pub objective: f64,
    pub bound: f64,
    pub wall_time_s: f64,
    pub nodes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl SolveResult {
    pub fn failure(status: SolveStatus, started: Instant, message: impl Into<String>) -> Self {
        Self {
            status,
            assignment: None,
            objective: f64::INFINITY,
            bound: f64::NEG_INFINITY,
            wall_time_s: started.elapsed().as_secs_f64(),
            nodes: 0,
            message: Some(message.into()),
        }
    }

    pub fn has_solution(&self) -> bool {
        self.assignment.is_some()
    }

    /// Same result ignoring timing.
    pub fn same_outcome(&self, other: &SolveResult) -> bool {
        self.status == other.status
            && self.assignment == other.assignment
            && self.objective.to_bits() == other.objective.to_bits()
            && self.bound.to_bits() == other.bound.to_bits()
            && self.nodes == other.nodes
    }
}

/// Anything that can solve a MILP. Implementations must be safe to call
/// concurrently on distinct instances.
pub trait MilpBackend: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, inst: &MilpInstance, time_limit_s: f64) -> SolveResult;
}

#[derive(Debug, Clone, Copy)]
pub struct BranchAndBound {
    pub gap_tol: f64,
}

impl Default for BranchAndBound {
    fn default() -> Self {
        Self { gap_tol: 1e-6 }
    }
}

impl MilpBackend for BranchAndBound {
    fn name(&self) -> &str {
        "bnb"
    }

    fn solve(&self, inst: &MilpInstance, time_limit_s: f64) -> SolveResult {
        branch_and_bound(inst, time_limit_s, self.gap_tol)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BruteForce;

impl MilpBackend for BruteForce {
    fn name(&self) -> &str {
        "brute"
    }

    fn solve(&self, inst: &MilpInstance, _time_limit_s: f64) -> SolveResult {
        brute_force(inst)
    }
}

/// Relaxation bounds: infinite bounds of continuous variables are boxed.
fn boxed_bounds(lower: &[f64], upper: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let lo = lower.iter().map(|&l| if l.is_finite() { l } else { -LP_BOX }).collect();
    let up = upper.iter().zip(lower).map(|(&u, &l)| if u.is_finite() { u } else { LP_BOX.max(l) }).collect();
    (lo, up)
}

pub(crate) fn row_lists(inst: &MilpInstance) -> Vec<Vec<(usize, f64)>> {
    let mut rows = vec![Vec::new(); inst.num_cons];
    for c in &inst.coefs {
        rows[c.row].push((c.col, c.val));
    }
    rows
}

pub(crate) enum RelaxOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Error(String),
}

/// LP relaxation with explicit bound vectors (used per B&B node).
pub(crate) fn relax_with_bounds(inst: &MilpInstance, rows: &[Vec<(usize, f64)>], lower: &[f64], upper: &[f64]) -> RelaxOutcome {
    let (lo, up) = boxed_bounds(lower, upper);
    let lp = simplex::DenseLp {
        cost: &inst.obj,
        rows,
        rhs: &inst.rhs,
        lower: &lo,
        upper: &up,
    };
    match simplex::solve(&lp) {
        simplex::LpOutcome::Optimal { x, objective } => {
            let hits_box = (0..inst.num_vars).any(|j| (!lower[j].is_finite() && x[j] <= -LP_BOX + 1.0) || (!upper[j].is_finite() && x[j] >= LP_BOX - 1.0));
            if hits_box {
                RelaxOutcome::Error("relaxation is unbounded".into())
            } else {
                RelaxOutcome::Optimal { x, objective }
            }
        }
        simplex::LpOutcome::Infeasible => RelaxOutcome::Infeasible,
        simplex::LpOutcome::Unbounded => RelaxOutcome::Error("relaxation is unbounded".into()),
        simplex::LpOutcome::IterationLimit => RelaxOutcome::Error("simplex iteration limit reached".into()),
    }
}

/// Solves the LP relaxation (integrality dropped). The returned assignment
/// is the relaxed optimum and may be fractional in the integer block.
pub fn lp_relax(inst: &MilpInstance) -> SolveResult {
    let started = Instant::now();
    let rows = row_lists(inst);
    match relax_with_bounds(inst, &rows, &inst.lower, &inst.upper) {
        RelaxOutcome::Optimal { x, objective } => SolveResult {
            status: SolveStatus::Optimal,
            assignment: Some(Assignment {
                values: x,
                objective: Some(objective),
            }),
            objective,
            bound: objective,
            wall_time_s: started.elapsed().as_secs_f64(),
            nodes: 1,
            message: None,
        },
        RelaxOutcome::Infeasible => SolveResult::failure(SolveStatus::Infeasible, started, "relaxation infeasible"),
        RelaxOutcome::Error(msg) => SolveResult::failure(SolveStatus::Error, started, msg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{toy_instance, Coef};

    #[test]
    fn toy_relaxation() {
        let r = lp_relax(&toy_instance());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!(r.objective.abs() < 1e-12);
        assert_eq!(r.assignment.unwrap().values, vec![0.0, 0.0]);
    }

    #[test]
    fn single_variable() {
        let inst = MilpInstance::new("one", 0, 1, vec![1.0], vec![], vec![], vec![0.0], vec![3.0]).unwrap();
        let r = lp_relax(&inst);
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn infeasible_pair() {
        let inst = MilpInstance::new(
            "inf",
            0,
            1,
            vec![1.0],
            vec![Coef { row: 0, col: 0, val: 1.0 }, Coef { row: 1, col: 0, val: -1.0 }],
            vec![0.0, -1.0],
            vec![f64::NEG_INFINITY],
            vec![f64::INFINITY],
        )
        .unwrap();
        assert_eq!(lp_relax(&inst).status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_is_error() {
        let inst = MilpInstance::new("unb", 0, 1, vec![-1.0], vec![], vec![], vec![0.0], vec![f64::INFINITY]).unwrap();
        assert_eq!(lp_relax(&inst).status, SolveStatus::Error);
    }
}
