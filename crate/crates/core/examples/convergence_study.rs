//! Reduced convergence study: fewer replicas and sizes than the default
//! scenario so it finishes in a minute or two.

use smolsim::config::ScenarioFile;
use smolsim::harness::{run_study, RunOptions};

fn main() -> smolsim::Result<()> {
    let mut file = ScenarioFile::default_shattering();
    file.study.n_values = vec![500, 2000, 8000];
    file.study.replicas = 4;
    file.snapshots = 4;
    let out = std::env::temp_dir().join("smolsim_study");
    let opts = RunOptions { out_dir: Some(out.clone()), ..Default::default() };
    let res = run_study(&file.build()?, &opts)?;
    for r in &res.report.rows {
        println!(
            "N = {:>5}  alpha_hat = {:.3}  max d2 = {:.3e} +- {:.1e}  D_est = {:.3e}",
            r.n,
            r.alpha_hat,
            r.mean_max_d2,
            r.se_max_d2.unwrap_or(f64::NAN),
            r.mean_d_est
        );
    }
    println!(
        "decreasing: {}, C = {:.3}, bound violations: {}",
        res.report.strictly_decreasing(),
        res.report.bound_constant,
        res.report.bound_violations
    );
    println!("report in {}", out.display());
    Ok(())
}
