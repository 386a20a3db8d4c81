//! Effective field of a random cloud through the naive sum, the cell list
//! and the spectral evaluator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smolsim::kernels::{convolve_empirical_naive, kernel_mass, CellList, Kernel, SpectralField};

fn main() {
    let (dim, length, n) = (2, 1.0, 4000);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let positions: Vec<f64> = (0..n * dim).map(|_| rng.random::<f64>() * length).collect();
    let weight = 1.0 / n as f64;

    for alpha in [10.0, 40.0] {
        let kernel = Kernel::new(dim, alpha);
        let cells = CellList::new(&positions, kernel, length);
        let spectral = SpectralField::new(&positions, weight, &kernel, length);
        println!("alpha = {alpha}: cutoff {:.3}, grid mass {:.12}", kernel.cutoff(), kernel_mass(&kernel, length, 512));
        for q in [[0.5, 0.5], [0.01, 0.99]] {
            let naive = convolve_empirical_naive(&positions, weight, &kernel, length, &q, None);
            let binned = cells.sum(&q, None) * weight;
            println!(
                "  at {q:?}: naive {naive:.10}, cell list {binned:.10}, spectral {:.10}",
                spectral.eval(&q)
            );
        }
    }
}
