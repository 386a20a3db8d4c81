//! Replica variance of <S_1, cos(2 pi x / L)> for pure diffusion at N and 4N.

use smolsim::harness::{diffusion_pairings, fluctuation_ratio};
use smolsim::observables::fluctuation_probe;

fn main() -> smolsim::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let replicas = 100;
    let snaps = diffusion_pairings(n, replicas, 13, 0)?;
    let length = snaps[0].length;
    let stats = fluctuation_probe(&snaps, 0, |x| (std::f64::consts::TAU * x[0] / length).cos())?;
    println!("N = {n}: mean {:.5}, variance {:.3e}", stats.mean, stats.variance);
    let ratio = fluctuation_ratio(n, replicas, 13)?;
    println!("Var(N) / Var(4N) = {ratio:.3} (1/N scaling gives 4)");
    Ok(())
}
