use std::process::{Command, Stdio};
use std::thread::sleep;
use std::time::Duration;
use web_time::Instant;

use super::{MilpBackend, SolveResult, SolveStatus};
use crate::lpfile::{read_solution, var_names, write_lp};
use crate::milp::{Assignment, MilpInstance, FEAS_TOL};

/// Environment variable holding the external solver command template.
pub const EXTERNAL_SOLVER_ENV: &str = "FMIP_EXTERNAL_SOLVER";

/// Shell command template with `{input}`, `{output}` and `{time_limit}`
/// placeholders, run through `sh -c`.
#[derive(Debug, Clone)]
pub struct ExternalSolver {
    pub cmd_template: String,
}

impl ExternalSolver {
    pub fn from_env() -> Option<Self> {
        std::env::var(EXTERNAL_SOLVER_ENV)
            .ok()
            .filter(|s| !s.trim().is_empty())
            .map(|cmd_template| Self { cmd_template })
    }
}

impl MilpBackend for ExternalSolver {
    fn name(&self) -> &str {
        "external"
    }

    fn solve(&self, inst: &MilpInstance, time_limit_s: f64) -> SolveResult {
        external_solve(inst, &self.cmd_template, time_limit_s)
    }
}

pub fn external_solve(inst: &MilpInstance, cmd_template: &str, time_limit_s: f64) -> SolveResult {
    let started = Instant::now();
    let err = |msg: String| SolveResult::failure(SolveStatus::Error, started, msg);

    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return err(format!("tempdir: {e}")),
    };
    let input = dir.path().join("model.lp");
    let output = dir.path().join("model.sol");
    if let Err(e) = std::fs::write(&input, write_lp(inst)) {
        return err(format!("writing {}: {e}", input.display()));
    }
    let cmd = cmd_template
        .replace("{input}", &input.display().to_string())
        .replace("{output}", &output.display().to_string())
        .replace("{time_limit}", &format!("{time_limit_s}"));

    let mut child = match Command::new("sh").arg("-c").arg(&cmd).stdout(Stdio::null()).stderr(Stdio::piped()).spawn() {
        Ok(c) => c,
        Err(e) => return err(format!("spawning `{cmd}`: {e}")),
    };

    // The solver gets its own limit plus a grace period before it is killed.
    let deadline = time_limit_s.max(0.0) + 1.0 + 0.1 * time_limit_s.max(0.0);
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) => {
                if started.elapsed().as_secs_f64() > deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    return SolveResult::failure(SolveStatus::Timeout, started, format!("external solver exceeded {deadline:.1}s"));
                }
                sleep(Duration::from_millis(10));
            }
            Err(e) => return err(format!("waiting for solver: {e}")),
        }
    };
    let stderr = child
        .wait_with_output()
        .map(|o| String::from_utf8_lossy(&o.stderr).into_owned())
        .unwrap_or_default();
    if !status.success() {
        return err(format!("external solver exited with {status}: {}", stderr.trim()));
    }
    let text = match std::fs::read_to_string(&output) {
        Ok(t) => t,
        Err(e) => return err(format!("reading solution {}: {e}; stderr: {}", output.display(), stderr.trim())),
    };
    let values = match read_solution(&text, &var_names(inst)) {
        Ok(Some(v)) => v,
        Ok(None) => return SolveResult::failure(SolveStatus::Infeasible, started, "solver reported no solution"),
        Err(e) => return err(e.to_string()),
    };
    let assignment = Assignment::new(values);
    match inst.evaluate(&assignment, FEAS_TOL) {
        Ok(r) if r.feasible => SolveResult {
            status: SolveStatus::Feasible,
            objective: r.objective,
            bound: f64::NEG_INFINITY,
            assignment: Some(Assignment {
                objective: Some(r.objective),
                ..assignment
            }),
            wall_time_s: started.elapsed().as_secs_f64(),
            nodes: 0,
            message: None,
        },
        Ok(r) => err(format!("external solution infeasible (max violation {})", r.max_violation)),
        Err(e) => err(e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::toy_instance;

    #[test]
    fn scripted_solver() {
        let r = external_solve(&toy_instance(), "printf 'x0 0\\nx1 0\\n' > {output}", 5.0);
        assert_eq!(r.status, SolveStatus::Feasible, "{:?}", r.message);
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn solver_sees_lp_file() {
        let r = external_solve(&toy_instance(), "grep -q 'Subject To' {input} && echo 'x1 1' > {output}", 5.0);
        assert_eq!(r.status, SolveStatus::Feasible);
        assert_eq!(r.objective, 1.0);
    }

    #[test]
    fn unknown_variable_is_error() {
        let r = external_solve(&toy_instance(), "echo 'y 1' > {output}", 5.0);
        assert_eq!(r.status, SolveStatus::Error);
    }

    #[test]
    fn nonzero_exit_is_error() {
        let r = external_solve(&toy_instance(), "echo boom >&2; exit 3", 5.0);
        assert_eq!(r.status, SolveStatus::Error);
        assert!(r.message.unwrap().contains("boom"));
    }

    #[test]
    fn timeout() {
        let r = external_solve(&toy_instance(), "sleep 5", 0.0);
        assert_eq!(r.status, SolveStatus::Timeout);
        assert!(r.assignment.is_none());
    }
}
