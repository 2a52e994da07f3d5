//! Acceptance run: every criterion of the verification suite, including the
//! memorization and guidance-effect experiments, with one PASS/FAIL line each.

use fmip_core::selfcheck::{check_rate_rows, model_rates, run_suite, CheckStatus};
use ndarray::Array2;

fn main() {
    let manifest = run_suite(true, |r| {
        let tag = match r.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIP",
        };
        println!("{tag} [{:>3}] {} ({:.1}s): {}", r.id, r.name, r.seconds, r.detail);
    });

    let flipped = |p: &Array2<f64>, d: &[usize], t: f64| -model_rates(p, d, t);
    let caught = !check_rate_rows(&flipped).passed;
    println!("{} [3c*] corrupted rate sign is rejected", if caught { "PASS" } else { "FAIL" });

    let all = manifest.checks.iter().all(|c| c.status == CheckStatus::Pass) && caught;
    println!("acceptance: {}", if all { "all criteria pass" } else { "FAILED" });
    if !all {
        std::process::exit(1);
    }
}
