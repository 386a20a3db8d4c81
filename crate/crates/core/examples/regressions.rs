//! The built-in regression suite, one line per check.

use smolsim::harness::{run_regressions, RegressionSuite};

fn main() {
    let report = run_regressions(&RegressionSuite::default());
    for w in &report.warnings {
        println!("warning: {w}");
    }
    for r in &report.results {
        println!("{}", r.line());
    }
    println!("overall: {}", if report.passed() { "pass" } else { "fail" });
}
