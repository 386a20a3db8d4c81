//! Spatially uniform data: the grid solver against the ODE oracle and the
//! closed-form logistic curve of binary shattering.

use smolsim::grid::{Grid, GridField};
use smolsim::material::SpeciesTable;
use smolsim::pde::{ode_trajectory, solve, PdeConfig};

fn main() -> smolsim::Result<()> {
    let table = SpeciesTable::binary_shattering(1, [1.0, 0.5], 1.0, 5.0);
    let grid = Grid::new(1, 32, 1.0)?;
    let s0 = [0.0, 0.5];
    let times = [0.25, 0.5, 1.0, 2.0];
    let fields = GridField::from_fn(grid, 2, |r, _| s0[r]);
    let traj = solve(&fields, &table, &PdeConfig::new(5e-4), &times)?;
    let ode = ode_trajectory(&table, &s0, &times);
    for ((t, f), o) in times.iter().zip(&traj.fields).zip(&ode) {
        let logistic = (-t).exp() / (1.0 + (-t).exp());
        println!(
            "t = {t:.2}  grid s2 {:.10}  ode s2 {:.10}  logistic {logistic:.10}",
            f.values[1][0], o[1]
        );
    }
    Ok(())
}
