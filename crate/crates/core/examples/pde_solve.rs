//! Reference densities of the default scenario on the grid.

use smolsim::config::ScenarioFile;
use smolsim::io::write_grid_csv;
use smolsim::pde::solve;

fn main() -> smolsim::Result<()> {
    let sc = ScenarioFile::default_shattering().build()?;
    let start = std::time::Instant::now();
    let traj = solve(&sc.initial, &sc.table, &sc.pde, &sc.snapshot_times)?;
    println!("{} steps of {:.2e} in {:.2} s", traj.steps, sc.pde.dt, start.elapsed().as_secs_f64());
    for (t, f) in traj.times.iter().zip(&traj.fields) {
        let mass: Vec<f64> = (0..f.species()).map(|r| f.integral(r)).collect();
        println!("t = {t:.2}  <s_r,1> = {mass:.5?}  total mass {:.12}", f.mass(&sc.table.masses));
    }
    println!("clipped mass {:.2e}", traj.clipped_mass);
    let path = std::env::temp_dir().join("smolsim_pde_final.csv");
    write_grid_csv(std::fs::File::create(&path)?, traj.fields.last().unwrap())?;
    println!("wrote {}", path.display());
    Ok(())
}
