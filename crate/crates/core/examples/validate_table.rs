//! Builds species tables and prints what validation finds, including a
//! table whose fragmentation does not conserve atoms.

use smolsim::config::ScenarioFile;
use smolsim::material::SpeciesTable;

fn main() -> smolsim::Result<()> {
    let mut good = SpeciesTable::binary_shattering(1, [1.0, 0.5], 1.0, 5.0);
    println!("binary shattering: valid = {}", good.validate().is_valid());

    // A monomer that splits into two monomers creates an atom.
    let mut bad = good.clone();
    bad.frag.set(0, 0, 0, 2);
    bad.frag.recompute_hat();
    let report = bad.validate();
    println!("broken table: {} problem(s)\n{report}", report.violations.len());

    let mut file = ScenarioFile::default_shattering();
    file.scaling.beta = 0.9;
    file.dim = 2;
    let report = file.validate();
    println!("{} with beta = 0.9 in 2d: {} problem(s)\n{report}", file.name, report.violations.len());
    Ok(())
}
