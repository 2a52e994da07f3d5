use web_time::Instant;

use super::{relax_with_bounds, row_lists, RelaxOutcome, SolveResult, SolveStatus};
use crate::milp::{Assignment, MilpInstance, FEAS_TOL};

/// Largest enumeration the oracle accepts, `(K+1)^q ≤ 2^20`.
pub const BRUTE_FORCE_LIMIT: u64 = 1 << 20;

/// Enumerates every integer assignment; the continuous block of each is
/// solved as an LP (or evaluated directly when there is none).
pub fn brute_force(inst: &MilpInstance) -> SolveResult {
    let started = Instant::now();
    let q = inst.num_int;
    let base = inst.int_bound as u64 + 1;
    let too_big = (0..q).try_fold(1u64, |acc, _| acc.checked_mul(base).filter(|&v| v <= BRUTE_FORCE_LIMIT));
    if too_big.is_none() {
        return SolveResult::failure(SolveStatus::Error, started, format!("enumeration bound exceeded: ({base})^{q} > 2^20"));
    }
    let rows = row_lists(inst);
    let ranges: Vec<(i64, i64)> = (0..q).map(|i| (inst.lower[i].ceil() as i64, inst.upper[i].floor() as i64)).collect();
    if ranges.iter().any(|(lo, hi)| lo > hi) {
        return SolveResult::failure(SolveStatus::Infeasible, started, "empty integer range");
    }

    let mut digits: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut count = 0u64;
    loop {
        count += 1;
        if let Some((x, obj)) = complete(inst, &rows, &digits) {
            if best.as_ref().is_none_or(|(_, b)| obj < *b) {
                best = Some((x, obj));
            }
        }
        // Odometer increment.
        let mut k = 0;
        loop {
            if k == q {
                return finish(best, started, count);
            }
            if digits[k] < ranges[k].1 {
                digits[k] += 1;
                break;
            }
            digits[k] = ranges[k].0;
            k += 1;
        }
    }
}

fn complete(inst: &MilpInstance, rows: &[Vec<(usize, f64)>], digits: &[i64]) -> Option<(Vec<f64>, f64)> {
    let q = inst.num_int;
    if q == inst.num_vars {
        let x: Vec<f64> = digits.iter().map(|&d| d as f64).collect();
        let r = inst.evaluate(&Assignment::new(x.clone()), FEAS_TOL).ok()?;
        return r.feasible.then_some((x, r.objective));
    }
    let mut lower = inst.lower.clone();
    let mut upper = inst.upper.clone();
    for (i, &d) in digits.iter().enumerate() {
        lower[i] = d as f64;
        upper[i] = d as f64;
    }
    match relax_with_bounds(inst, rows, &lower, &upper) {
        RelaxOutcome::Optimal { x, objective } => {
            let ok = inst.evaluate(&Assignment::new(x.clone()), FEAS_TOL).ok()?.feasible;
            ok.then_some((x, objective))
        }
        _ => None,
    }
}

fn finish(best: Option<(Vec<f64>, f64)>, started: Instant, count: u64) -> SolveResult {
    match best {
        Some((x, obj)) => SolveResult {
            status: SolveStatus::Optimal,
            assignment: Some(Assignment {
                values: x,
                objective: Some(obj),
            }),
            objective: obj,
            bound: obj,
            wall_time_s: started.elapsed().as_secs_f64(),
            nodes: count,
            message: None,
        },
        None => {
            let mut r = SolveResult::failure(SolveStatus::Infeasible, started, "no feasible assignment");
            r.nodes = count;
            r
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::lp_relax;
    use crate::milp::{toy_instance, Coef};

    fn two_node_mis() -> MilpInstance {
        MilpInstance::new(
            "mis2",
            2,
            1,
            vec![-1.0, -1.0],
            vec![Coef { row: 0, col: 0, val: 1.0 }, Coef { row: 0, col: 1, val: 1.0 }],
            vec![1.0],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn mis_optimum() {
        let r = brute_force(&two_node_mis());
        assert_eq!(r.objective, -1.0);
        assert_eq!(r.nodes, 4);
    }

    #[test]
    fn pure_lp_equals_relaxation() {
        let mut inst = toy_instance();
        inst.num_int = 0;
        assert_eq!(brute_force(&inst).objective, lp_relax(&inst).objective);
    }

    #[test]
    fn infeasible() {
        let inst = MilpInstance::new(
            "inf",
            1,
            1,
            vec![1.0],
            vec![Coef { row: 0, col: 0, val: -1.0 }],
            vec![-2.0],
            vec![0.0],
            vec![1.0],
        )
        .unwrap();
        assert_eq!(brute_force(&inst).status, SolveStatus::Infeasible);
    }

    #[test]
    fn too_large() {
        let inst = MilpInstance::new("big", 21, 1, vec![0.0; 21], vec![], vec![], vec![0.0; 21], vec![1.0; 21]).unwrap();
        assert_eq!(brute_force(&inst).status, SolveStatus::Error);
    }
}
