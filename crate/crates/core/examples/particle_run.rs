//! One particle run of the default scenario, printing species counts and
//! writing the final configuration as CSV.

use smolsim::config::ScenarioFile;
use smolsim::harness::replica_rng;
use smolsim::io::write_particles_csv;
use smolsim::observables::mass_report;
use smolsim::particles::{run, sample_initial_state};

fn main() -> smolsim::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4000);
    let sc = ScenarioFile::default_shattering().build()?;
    let mut state = sample_initial_state(&sc.table, &sc.initial, n, replica_rng(sc.seed, 0, 0))?;
    let kernel = sc.scaling(state.total_atoms()).interaction_kernel();
    let times = [0.0, 0.25, 0.5, 0.75, 1.0];
    let snaps = run(&mut state, &sc.table, &kernel, &sc.step, sc.t_end, &times)?;
    println!("alpha = {:.3}, N = {}", kernel.alpha, state.total_atoms());
    for s in &snaps {
        let m = mass_report(s);
        println!("t = {:.2}  counts {:?}  atoms {}", s.t, s.counts(), m.total_atoms);
    }
    let events: u64 = state.counters.events.iter().sum();
    println!("{events} events, {} clamped rates", state.counters.clipped);
    let path = std::env::temp_dir().join("smolsim_particles.csv");
    write_particles_csv(std::fs::File::create(&path)?, &state.snapshot())?;
    println!("wrote {}", path.display());
    Ok(())
}
