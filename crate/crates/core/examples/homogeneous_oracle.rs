//! Homogeneous binary shattering against the logistic solution: mean dimer
//! fraction at t = 1 over independent replicas, and the shift when the step
//! is halved.

use smolsim::harness::homogeneous_check;

fn main() -> smolsim::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let replicas = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(30);
    let start = std::time::Instant::now();
    let h = homogeneous_check(n, replicas, 11, 0)?;
    println!("N = {n}, {replicas} replicas");
    println!("oracle s2(1)      = {:.6}", h.oracle);
    println!("dt = 1e-3         : {:.6} +- {:.6} ({:+.2} SE)", h.mean, h.se, h.oracle_z);
    println!("dt = 5e-4         : {:.6} +- {:.6}", h.mean_half_dt, h.se_half_dt);
    println!("halving shift     : {:+.2} pooled SE", h.halving_z);
    println!("elapsed           : {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}
