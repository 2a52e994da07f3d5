use std::cmp::Ordering;
use std::collections::BinaryHeap;
use web_time::Instant;

use super::{relax_with_bounds, row_lists, RelaxOutcome, SolveResult, SolveStatus};
use crate::milp::{Assignment, MilpInstance, FEAS_TOL};

const INT_TOL: f64 = 1e-6;

struct Node {
    bound: f64,
    id: u64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap, so the smallest bound (then the oldest node) compares largest.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.id.cmp(&self.id))
    }
}

/// Incumbent history of a B&B run.
#[derive(Debug, Clone, Default)]
pub struct BnbTrace {
    /// Incumbent objective after each processed node (`inf` before the first).
    pub incumbents: Vec<f64>,
}

/// Most fractional integer variable; ties go to the lowest index.
fn branching_variable(x: &[f64], q: usize) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in x[..q].iter().enumerate() {
        let frac = v - v.floor();
        let dist = frac.min(1.0 - frac);
        if dist > INT_TOL && best.is_none_or(|(_, d)| dist > d + 1e-12) {
            best = Some((i, dist));
        }
    }
    best.map(|(i, _)| i)
}

pub fn branch_and_bound(inst: &MilpInstance, time_limit_s: f64, gap_tol: f64) -> SolveResult {
    branch_and_bound_traced(inst, time_limit_s, gap_tol).0
}

/// Best-first branch and bound on the LP relaxation, branching on the most
/// fractional variable.
pub fn branch_and_bound_traced(inst: &MilpInstance, time_limit_s: f64, gap_tol: f64) -> (SolveResult, BnbTrace) {
    let started = Instant::now();
    let q = inst.num_int;
    let rows = row_lists(inst);
    let mut trace = BnbTrace::default();

    let mut next_id = 0u64;
    let mut solve_node = |lower: Vec<f64>, upper: Vec<f64>| -> Result<Option<Node>, String> {
        match relax_with_bounds(inst, &rows, &lower, &upper) {
            RelaxOutcome::Optimal { x, objective } => {
                next_id += 1;
                Ok(Some(Node {
                    bound: objective,
                    id: next_id,
                    lower,
                    upper,
                    x,
                }))
            }
            RelaxOutcome::Infeasible => Ok(None),
            RelaxOutcome::Error(e) => Err(e),
        }
    };

    let mut heap = BinaryHeap::new();
    match solve_node(inst.lower.clone(), inst.upper.clone()) {
        Ok(Some(root)) => heap.push(root),
        Ok(None) => {
            let mut r = SolveResult::failure(SolveStatus::Infeasible, started, "root relaxation infeasible");
            r.nodes = 1;
            return (r, trace);
        }
        Err(e) => return (SolveResult::failure(SolveStatus::Error, started, e), trace),
    }

    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut nodes = 0u64;
    let mut timed_out = false;

    while let Some(node) = heap.pop() {
        let inc_obj = incumbent.as_ref().map_or(f64::INFINITY, |(_, o)| *o);
        if node.bound >= inc_obj - gap_tol {
            // Best-first: every remaining node is at least as bad.
            heap.clear();
            break;
        }
        if started.elapsed().as_secs_f64() > time_limit_s {
            heap.push(node);
            timed_out = true;
            break;
        }
        nodes += 1;
        match branching_variable(&node.x, q) {
            None => {
                if let Some(cand) = integral_candidate(inst, &rows, &node) {
                    let obj = inst.objective(&cand);
                    if obj < inc_obj {
                        incumbent = Some((cand, obj));
                    }
                }
            }
            Some(i) => {
                let v = node.x[i];
                let mut down_upper = node.upper.clone();
                down_upper[i] = v.floor();
                let mut up_lower = node.lower.clone();
                up_lower[i] = v.ceil();
                for (lo, up) in [(node.lower.clone(), down_upper), (up_lower, node.upper.clone())] {
                    match solve_node(lo, up) {
                        Ok(Some(child)) => heap.push(child),
                        Ok(None) => {}
                        Err(e) => {
                            return (SolveResult::failure(SolveStatus::Error, started, e), trace);
                        }
                    }
                }
            }
        }
        trace.incumbents.push(incumbent.as_ref().map_or(f64::INFINITY, |(_, o)| *o));
    }

    let wall_time_s = started.elapsed().as_secs_f64();
    let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let result = match incumbent {
        Some((x, obj)) => SolveResult {
            status: if timed_out { SolveStatus::Timeout } else { SolveStatus::Optimal },
            assignment: Some(Assignment {
                values: x,
                objective: Some(obj),
            }),
            objective: obj,
            bound: if timed_out { open_bound.min(obj) } else { obj },
            wall_time_s,
            nodes,
            message: None,
        },
        None => SolveResult {
            status: if timed_out { SolveStatus::Timeout } else { SolveStatus::Infeasible },
            assignment: None,
            objective: f64::INFINITY,
            bound: if timed_out { open_bound } else { f64::INFINITY },
            wall_time_s,
            nodes,
            message: None,
        },
    };
    (result, trace)
}

/// Rounds the integer block of an integral relaxation point; if that breaks
/// feasibility numerically the continuous block is re-solved with the
/// integers fixed.
fn integral_candidate(inst: &MilpInstance, rows: &[Vec<(usize, f64)>], node: &Node) -> Option<Vec<f64>> {
    let q = inst.num_int;
    let mut x = node.x.clone();
    for v in &mut x[..q] {
        *v = v.round();
    }
    inst.project_in_place(&mut x, false);
    let a = Assignment::new(x.clone());
    if inst.evaluate(&a, FEAS_TOL).ok()?.feasible {
        return Some(x);
    }
    let mut lower = node.lower.clone();
    let mut upper = node.upper.clone();
    lower[..q].copy_from_slice(&x[..q]);
    upper[..q].copy_from_slice(&x[..q]);
    match relax_with_bounds(inst, rows, &lower, &upper) {
        RelaxOutcome::Optimal { x, .. } => {
            let a = Assignment::new(x.clone());
            inst.evaluate(&a, FEAS_TOL).ok()?.feasible.then_some(x)
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{brute_force, lp_relax};
    use crate::milp::{toy_instance, Coef};

    #[test]
    fn toy_matches_brute_force() {
        let inst = toy_instance();
        let b = branch_and_bound(&inst, 10.0, 1e-6);
        let o = brute_force(&inst);
        assert_eq!(b.status, SolveStatus::Optimal);
        assert!((b.objective - o.objective).abs() < 1e-9);
    }

    #[test]
    fn pure_lp_equals_relaxation() {
        let mut inst = toy_instance();
        inst.num_int = 0;
        let b = branch_and_bound(&inst, 10.0, 1e-6);
        let r = lp_relax(&inst);
        assert_eq!(b.objective, r.objective);
        assert_eq!(b.assignment.unwrap().values, r.assignment.unwrap().values);
    }

    #[test]
    fn knapsack_branching() {
        // max 5a + 4b + 3c s.t. 2a + 3b + c <= 5, 4a + b + 2c <= 11, binary
        let inst = MilpInstance::new(
            "ks",
            3,
            1,
            vec![-5.0, -4.0, -3.0],
            vec![
                Coef { row: 0, col: 0, val: 2.0 },
                Coef { row: 0, col: 1, val: 3.0 },
                Coef { row: 0, col: 2, val: 1.0 },
                Coef { row: 1, col: 0, val: 4.0 },
                Coef { row: 1, col: 1, val: 1.0 },
                Coef { row: 1, col: 2, val: 2.0 },
            ],
            vec![5.0, 11.0],
            vec![0.0; 3],
            vec![1.0; 3],
        )
        .unwrap();
        let (b, trace) = branch_and_bound_traced(&inst, 10.0, 1e-6);
        assert_eq!(b.objective, brute_force(&inst).objective);
        assert!(trace.incumbents.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_time_limit_times_out() {
        let inst = toy_instance();
        let b = branch_and_bound(&inst, -1.0, 1e-6);
        assert_eq!(b.status, SolveStatus::Timeout);
    }
}
