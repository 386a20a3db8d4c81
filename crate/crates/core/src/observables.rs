//! Diagnostics comparing a particle snapshot with a macroscopic density:
//! smoothed L2 distances, a dual-norm distance over a finite test-function
//! dictionary, exact mass bookkeeping and replica fluctuation statistics.

use std::f64::consts::{PI, TAU};

use crate::grid::{min_image, GridField};
use crate::kernels::{smooth_to_grid, Kernel};
use crate::particles::ParticleSnapshot;
use crate::{Error, Result};

/// Empirical measure of one species: unit point masses of weight `1/N`.
#[derive(Debug, Clone, Copy)]
pub struct EmpiricalMeasure<'a> {
    pub snapshot: &'a ParticleSnapshot,
    pub species: usize,
}

impl<'a> EmpiricalMeasure<'a> {
    pub fn new(snapshot: &'a ParticleSnapshot, species: usize) -> Self {
        Self { snapshot, species }
    }

    /// `<S_r, 1> = N_r / N`.
    pub fn total(&self) -> f64 {
        self.snapshot.count(self.species) as f64 * self.snapshot.weight()
    }

    /// `<S_r, f>`.
    pub fn pair(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let dim = self.snapshot.dim;
        self.snapshot.positions[self.species]
            .chunks_exact(dim)
            .map(f)
            .sum::<f64>()
            * self.snapshot.weight()
    }
}

/// Smoothed empirical densities `h_r = S_r * W_hat` on `grid`.
pub fn smoothed_density(
    snapshot: &ParticleSnapshot,
    smoothing: &Kernel,
    grid: crate::grid::Grid,
) -> Result<GridField> {
    let refs: Vec<&[f64]> = snapshot.positions.iter().map(Vec::as_slice).collect();
    smooth_to_grid(&refs, snapshot.weight(), smoothing, grid)
}

/// Per-species `||h_r - s_r||_2^2` by the rectangle rule on the grid of `pde`.
pub fn l2_distance_sq(
    snapshot: &ParticleSnapshot,
    pde: &GridField,
    smoothing: &Kernel,
) -> Result<Vec<f64>> {
    let h = smoothed_density(snapshot, smoothing, pde.grid)?;
    Ok(field_distance_sq(&h, pde))
}

/// Per-species squared L2 distance between two fields on the same grid.
pub fn field_distance_sq(a: &GridField, b: &GridField) -> Vec<f64> {
    let dv = a.grid.cell_volume();
    a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>() * dv)
        .collect()
}

/// `||h||^2 - 2 <h, s> + ||s||^2` per species; equals [`field_distance_sq`]
/// up to roundoff.
pub fn expanded_distance_sq(h: &GridField, s: &GridField) -> Vec<f64> {
    (0..h.species())
        .map(|r| h.l2_norm_sq(r) - 2.0 * h.inner(r, &s.values[r]) + s.l2_norm_sq(r))
        .collect()
}

/// Shape of a dictionary member. Every member depends on a single axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestShape {
    Cos { axis: usize, mode: u32 },
    Sin { axis: usize, mode: u32 },
    /// Periodised Gaussian bump `exp(-|x_a - c|^2 / (2 w^2))`.
    Bump { axis: usize, center: f64, width: f64 },
}

/// A dictionary member `amplitude * shape(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction {
    pub shape: TestShape,
    pub amplitude: f64,
    length: f64,
}

impl TestFunction {
    /// Scales `shape` so that `||f||_inf + ||grad f||_inf + ||f||_2 = 1` on
    /// the box `[0, length)^dim`.
    pub fn normalized(shape: TestShape, dim: usize, length: f64) -> Self {
        let (sup, grad, l2_1d) = match shape {
            TestShape::Cos { mode, .. } | TestShape::Sin { mode, .. } => {
                (1.0, TAU * mode as f64 / length, (length / 2.0).sqrt())
            }
            TestShape::Bump { width, .. } => (
                1.0,
                (-0.5f64).exp() / width,
                (width * PI.sqrt()).sqrt(),
            ),
        };
        let l2 = l2_1d * length.powf((dim as f64 - 1.0) / 2.0);
        Self {
            shape,
            amplitude: 1.0 / (sup + grad + l2),
            length,
        }
    }

    fn axis(&self) -> usize {
        match self.shape {
            TestShape::Cos { axis, .. } | TestShape::Sin { axis, .. } | TestShape::Bump { axis, .. } => axis,
        }
    }

    /// Shape along the active axis, before scaling.
    fn profile(&self, s: f64) -> f64 {
        match self.shape {
            TestShape::Cos { mode, .. } => (TAU * mode as f64 * s / self.length).cos(),
            TestShape::Sin { mode, .. } => (TAU * mode as f64 * s / self.length).sin(),
            TestShape::Bump { center, width, .. } => {
                let d = min_image(s - center, self.length);
                (-d * d / (2.0 * width * width)).exp()
            }
        }
    }

    fn profile_slope(&self, s: f64) -> f64 {
        match self.shape {
            TestShape::Cos { mode, .. } => {
                let k = TAU * mode as f64 / self.length;
                -k * (k * s).sin()
            }
            TestShape::Sin { mode, .. } => {
                let k = TAU * mode as f64 / self.length;
                k * (k * s).cos()
            }
            TestShape::Bump { center, width, .. } => {
                let d = min_image(s - center, self.length);
                -d / (width * width) * (-d * d / (2.0 * width * width)).exp()
            }
        }
    }

    /// Profile of `f * W_alpha` (untruncated, on the line).
    fn smoothed_profile(&self, s: f64, alpha: f64) -> f64 {
        match self.shape {
            TestShape::Cos { mode, .. } | TestShape::Sin { mode, .. } => {
                let k = TAU * mode as f64 / self.length;
                (-k * k / (2.0 * alpha * alpha)).exp() * self.profile(s)
            }
            TestShape::Bump { center, width, .. } => {
                let var = width * width + 1.0 / (alpha * alpha);
                let d = min_image(s - center, self.length);
                width / var.sqrt() * (-d * d / (2.0 * var)).exp()
            }
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.amplitude * self.profile(x[self.axis()])
    }

    /// Sampled `sup |f - f * W_alpha|`.
    pub fn smoothing_defect_sup(&self, alpha: f64) -> f64 {
        let n = 8192;
        (0..n)
            .map(|i| {
                let s = i as f64 * self.length / n as f64;
                (self.profile(s) - self.smoothed_profile(s, alpha)).abs()
            })
            .fold(0.0, f64::max)
            * self.amplitude
    }

    /// `(sup |f|, sup |grad f|, ||f||_2)` by sampling and quadrature.
    pub fn numeric_norms(&self, dim: usize) -> (f64, f64, f64) {
        let n = 8192;
        let h = self.length / n as f64;
        let mut sup: f64 = 0.0;
        let mut grad: f64 = 0.0;
        let mut sq = 0.0;
        for i in 0..n {
            let s = i as f64 * h;
            let v = self.profile(s);
            sup = sup.max(v.abs());
            grad = grad.max(self.profile_slope(s).abs());
            sq += v * v * h;
        }
        let l2 = (sq * self.length.powi(dim as i32 - 1)).sqrt();
        (
            self.amplitude * sup,
            self.amplitude * grad,
            self.amplitude * l2,
        )
    }
}

/// Finite family of normalized test functions.
#[derive(Debug, Clone, PartialEq)]
pub struct TestDictionary {
    pub dim: usize,
    pub length: f64,
    pub members: Vec<TestFunction>,
}

impl TestDictionary {
    /// Per axis: `cos` and `sin` of modes 1 to 4 and 8 bumps of width `L/16`
    /// at the centres of 8 equal slabs. Each member's combined norm is
    /// checked numerically.
    pub fn standard(dim: usize, length: f64) -> Result<Self> {
        let mut shapes = Vec::new();
        for axis in 0..dim {
            for mode in 1..=4 {
                shapes.push(TestShape::Cos { axis, mode });
                shapes.push(TestShape::Sin { axis, mode });
            }
            for j in 0..8 {
                shapes.push(TestShape::Bump {
                    axis,
                    center: (j as f64 + 0.5) * length / 8.0,
                    width: length / 16.0,
                });
            }
        }
        Self::from_shapes(dim, length, &shapes)
    }

    pub fn from_shapes(dim: usize, length: f64, shapes: &[TestShape]) -> Result<Self> {
        if shapes.is_empty() {
            return Err(Error::Config("test dictionary must not be empty".into()));
        }
        let members: Vec<TestFunction> = shapes
            .iter()
            .map(|&s| TestFunction::normalized(s, dim, length))
            .collect();
        for f in &members {
            let (a, b, c) = f.numeric_norms(dim);
            if a + b + c > 1.0 + 1e-9 {
                return Err(Error::Invariant(format!(
                    "test function {:?} has combined norm {}",
                    f.shape,
                    a + b + c
                )));
            }
        }
        Ok(Self {
            dim,
            length,
            members,
        })
    }
}

/// Dual-norm distance estimate over a dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricEstimate {
    /// `max_f |<S_r - s_r, f>|` per species.
    pub per_species: Vec<f64>,
    /// Maximising member per species.
    pub argmax: Vec<usize>,
}

impl MetricEstimate {
    /// Sum over species. A lower bound of the supremum over the full unit
    /// ball, since the dictionary is finite.
    pub fn total(&self) -> f64 {
        self.per_species.iter().sum()
    }
}

/// `<S_r, f> - <s_r, f>` for every species and dictionary member, with the
/// density pairing by the rectangle rule.
pub fn pairing_gaps(
    snapshot: &ParticleSnapshot,
    pde: &GridField,
    dict: &TestDictionary,
) -> Vec<Vec<f64>> {
    let grid = pde.grid;
    let coords: Vec<_> = (0..grid.node_count()).map(|i| grid.coord(i)).collect();
    (0..snapshot.positions.len())
        .map(|r| {
            let measure = EmpiricalMeasure::new(snapshot, r);
            dict.members
                .iter()
                .map(|f| {
                    let particle = measure.pair(|x| f.eval(x));
                    let density: f64 = coords
                        .iter()
                        .zip(&pde.values[r])
                        .map(|(x, s)| s * f.eval(x))
                        .sum::<f64>()
                        * grid.cell_volume();
                    particle - density
                })
                .collect()
        })
        .collect()
}

pub fn metric_d(
    snapshot: &ParticleSnapshot,
    pde: &GridField,
    dict: &TestDictionary,
) -> MetricEstimate {
    let gaps = pairing_gaps(snapshot, pde, dict);
    let mut per_species = Vec::with_capacity(gaps.len());
    let mut argmax = Vec::with_capacity(gaps.len());
    for row in gaps {
        let (i, v) = row
            .iter()
            .map(|g| g.abs())
            .enumerate()
            .fold((0, 0.0), |best, (i, v)| if v > best.1 { (i, v) } else { best });
        per_species.push(v);
        argmax.push(i);
    }
    MetricEstimate {
        per_species,
        argmax,
    }
}

/// Checks `|<S_r - s_r, f>| <= <S_r, 1> sup|f - f*W_hat| + ||f||_2 ||d_r||_2`
/// for every member and species. Returns the number of violations beyond
/// `slack`.
pub fn pairing_bound_violations(
    snapshot: &ParticleSnapshot,
    pde: &GridField,
    dict: &TestDictionary,
    smoothing: &Kernel,
    d2: &[f64],
    slack: f64,
) -> usize {
    let gaps = pairing_gaps(snapshot, pde, dict);
    let defects: Vec<f64> = dict
        .members
        .iter()
        .map(|f| f.smoothing_defect_sup(smoothing.alpha))
        .collect();
    let l2: Vec<f64> = dict.members.iter().map(|f| f.numeric_norms(dict.dim).2).collect();
    let mut bad = 0;
    for (r, row) in gaps.iter().enumerate() {
        let total = EmpiricalMeasure::new(snapshot, r).total();
        for (i, g) in row.iter().enumerate() {
            let bound = total * defects[i] + l2[i] * d2[r].sqrt();
            if g.abs() > bound + slack {
                bad += 1;
            }
        }
    }
    bad
}

/// Exact integer bookkeeping of a snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MassReport {
    /// `sum_r m_r N_r`.
    pub total_atoms: u64,
    /// `m_r N_r` per species.
    pub species_atoms: Vec<u64>,
    pub particles: u64,
    pub system_size: u64,
    /// Atom count differs from the system size.
    pub mass_violation: bool,
    /// More particles than atoms at time zero.
    pub count_violation: bool,
}

impl MassReport {
    pub fn ok(&self) -> bool {
        !self.mass_violation && !self.count_violation
    }
}

pub fn mass_report(snapshot: &ParticleSnapshot) -> MassReport {
    let counts = snapshot.counts();
    let species_atoms: Vec<u64> = counts
        .iter()
        .zip(&snapshot.masses)
        .map(|(&c, &m)| c as u64 * m as u64)
        .collect();
    let total_atoms = species_atoms.iter().sum();
    let particles = counts.iter().map(|&c| c as u64).sum();
    MassReport {
        total_atoms,
        species_atoms,
        particles,
        system_size: snapshot.total_atoms,
        mass_violation: total_atoms != snapshot.total_atoms,
        count_violation: particles > snapshot.total_atoms,
    }
}

/// Spread of `<S_r, f>` across independent replicas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluctuationStats {
    pub replicas: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
}

pub const MIN_FLUCTUATION_REPLICAS: usize = 30;

pub fn fluctuation_probe(
    snapshots: &[ParticleSnapshot],
    species: usize,
    f: impl Fn(&[f64]) -> f64,
) -> Result<FluctuationStats> {
    if snapshots.len() < MIN_FLUCTUATION_REPLICAS {
        return Err(Error::TooFewSamples {
            needed: MIN_FLUCTUATION_REPLICAS,
            got: snapshots.len(),
        });
    }
    let values: Vec<f64> = snapshots
        .iter()
        .map(|s| EmpiricalMeasure::new(s, species).pair(&f))
        .collect();
    let (mean, variance) = mean_and_variance(&values);
    Ok(FluctuationStats {
        replicas: values.len(),
        mean,
        variance,
    })
}

/// Sample mean and unbiased variance (zero for a single value).
pub fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Standard error of the mean.
pub fn standard_error(values: &[f64]) -> f64 {
    let (_, var) = mean_and_variance(values);
    (var / values.len() as f64).sqrt()
}

/// One point for the consistency bound `D <= C (1/alpha_hat + ||d||_2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPoint {
    pub alpha_hat: f64,
    pub d_est: f64,
    /// `sum_r ||d_r||_2`.
    pub l2: f64,
}

impl BoundPoint {
    pub fn ratio(&self) -> f64 {
        self.d_est / (1.0 / self.alpha_hat + self.l2)
    }
}

/// Smallest `C` making every calibration point satisfy the bound.
pub fn fit_bound_constant(calibration: &[BoundPoint]) -> f64 {
    calibration.iter().map(BoundPoint::ratio).fold(0.0, f64::max)
}

pub fn bound_violations(points: &[BoundPoint], c: f64) -> usize {
    points
        .iter()
        .filter(|p| p.d_est > c * (1.0 / p.alpha_hat + p.l2) * (1.0 + 1e-12))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::particles::Counters;
    use proptest::prelude::*;

    fn snapshot(dim: usize, length: f64, positions: Vec<Vec<f64>>, n: u64) -> ParticleSnapshot {
        let masses = (1..=positions.len() as u32).collect();
        ParticleSnapshot {
            dim,
            length,
            t: 0.0,
            positions,
            masses,
            total_atoms: n,
            counters: Counters::default(),
        }
    }

    #[test]
    fn empty_snapshot_and_zero_field_have_zero_distance() {
        let g = Grid::new(1, 256, 10.0).unwrap();
        let s = snapshot(1, 10.0, vec![vec![]], 1);
        let d = l2_distance_sq(&s, &GridField::zeros(g, 1), &Kernel::new(1, 2.0)).unwrap();
        assert_eq!(d, vec![0.0]);
    }

    #[test]
    fn single_particle_distance_is_squared_kernel_mass() {
        let alpha = 4.0;
        let n = 10u64;
        let g = Grid::new(1, 1024, 10.0).unwrap();
        let s = snapshot(1, 10.0, vec![vec![g.coord(300)[0]]], n);
        let d = l2_distance_sq(&s, &GridField::zeros(g, 1), &Kernel::new(1, alpha)).unwrap();
        let exact = alpha / (2.0 * PI.sqrt() * (n * n) as f64);
        assert!((d[0] - exact).abs() < 1e-6 * exact, "{} vs {exact}", d[0]);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let g = Grid::new(1, 16, 10.0).unwrap();
        let s = snapshot(1, 10.0, vec![vec![1.0]], 1);
        assert!(matches!(
            l2_distance_sq(&s, &GridField::zeros(g, 1), &Kernel::new(1, 4.0)),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn identical_fields_have_zero_distance_and_expansion_agrees() {
        let g = Grid::new(1, 512, 10.0).unwrap();
        let s = snapshot(1, 10.0, vec![vec![1.0, 2.5, 7.0]], 3);
        let k = Kernel::new(1, 3.0);
        let h = smoothed_density(&s, &k, g).unwrap();
        assert_eq!(field_distance_sq(&h, &h), vec![0.0]);
        let other = GridField::from_fn(g, 1, |_, x| 0.05 + 0.01 * x[0]);
        let a = field_distance_sq(&h, &other)[0];
        let b = expanded_distance_sq(&h, &other)[0];
        assert!((a - b).abs() <= 1e-10 * a);
    }

    #[test]
    fn dictionary_is_normalized() {
        for dim in 1..=2 {
            let dict = TestDictionary::standard(dim, 10.0).unwrap();
            assert_eq!(dict.members.len(), 16 * dim);
            for f in &dict.members {
                let (a, b, c) = f.numeric_norms(dim);
                assert!((a + b + c - 1.0).abs() < 1e-6, "{:?}: {}", f.shape, a + b + c);
            }
        }
        assert!(TestDictionary::from_shapes(1, 1.0, &[]).is_err());
    }

    #[test]
    fn single_particle_pairing_with_centered_bump() {
        let shape = TestShape::Bump {
            axis: 0,
            center: 3.0,
            width: 0.5,
        };
        let dict = TestDictionary::from_shapes(1, 10.0, &[shape]).unwrap();
        let g = Grid::new(1, 64, 10.0).unwrap();
        let s = snapshot(1, 10.0, vec![vec![3.0]], 20);
        let est = metric_d(&s, &GridField::zeros(g, 1), &dict);
        let f = dict.members[0];
        assert!((est.per_species[0] - f.eval(&[3.0]) / 20.0).abs() < 1e-15);
    }

    #[test]
    fn measure_against_its_own_histogram_vanishes() {
        // particles on nodes, density = point masses / cell volume at those nodes
        let g = Grid::new(1, 100, 10.0).unwrap();
        let idx = [3usize, 17, 17, 60, 99];
        let pos: Vec<f64> = idx.iter().map(|&i| g.coord(i)[0]).collect();
        let s = snapshot(1, 10.0, vec![pos], 5);
        let mut field = GridField::zeros(g, 1);
        for &i in &idx {
            field.values[0][i] += 0.2 / g.cell_volume();
        }
        let dict = TestDictionary::standard(1, 10.0).unwrap();
        let est = metric_d(&s, &field, &dict);
        assert!(est.total() < 1e-14, "{}", est.total());
    }

    #[test]
    fn mass_report_counts_atoms() {
        let s = snapshot(1, 10.0, vec![vec![1.0, 2.0], vec![3.0]], 4);
        let m = mass_report(&s);
        assert_eq!(m.total_atoms, 4);
        assert_eq!(m.species_atoms, vec![2, 2]);
        assert!(m.ok());
        let bad = snapshot(1, 10.0, vec![vec![1.0], vec![3.0]], 4);
        assert!(mass_report(&bad).mass_violation);
    }

    #[test]
    fn fluctuation_probe_examples() {
        let fixed = snapshot(1, 10.0, vec![vec![1.0, 4.0]], 2);
        let reps = vec![fixed; 30];
        let stats = fluctuation_probe(&reps, 0, |x| x[0].sin()).unwrap();
        assert_eq!(stats.variance, 0.0);
        assert!(matches!(
            fluctuation_probe(&reps[..10], 0, |_| 1.0),
            Err(Error::TooFewSamples { needed: 30, got: 10 })
        ));
    }

    #[test]
    fn bound_fit_is_tight_on_calibration() {
        let pts = [
            BoundPoint { alpha_hat: 2.0, d_est: 0.1, l2: 0.3 },
            BoundPoint { alpha_hat: 4.0, d_est: 0.2, l2: 0.05 },
        ];
        let c = fit_bound_constant(&pts);
        assert_eq!(bound_violations(&pts, c), 0);
        assert_eq!(bound_violations(&pts, 0.9 * c), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn pairing_bound_holds(xs in proptest::collection::vec(0.0f64..10.0, 1..60), amp in 0.0f64..0.2) {
            let g = Grid::new(1, 512, 10.0).unwrap();
            let n = xs.len() as u64;
            let s = snapshot(1, 10.0, vec![xs], n);
            let k = Kernel::new(1, 3.0);
            let pde = GridField::from_fn(g, 1, |_, x| amp * (1.0 + (x[0]).cos()) / 10.0);
            let d2 = l2_distance_sq(&s, &pde, &k).unwrap();
            let dict = TestDictionary::standard(1, 10.0).unwrap();
            prop_assert_eq!(pairing_bound_violations(&s, &pde, &dict, &k, &d2, 1e-9), 0);
        }

        #[test]
        fn decomposition_identity(xs in proptest::collection::vec(0.0f64..10.0, 1..40), amp in 0.0f64..1.0) {
            let g = Grid::new(1, 256, 10.0).unwrap();
            let n = xs.len() as u64;
            let s = snapshot(1, 10.0, vec![xs], n);
            let h = smoothed_density(&s, &Kernel::new(1, 2.0), g).unwrap();
            let pde = GridField::from_fn(g, 1, |_, x| amp * x[0] / 50.0);
            let a = field_distance_sq(&h, &pde)[0];
            let b = expanded_distance_sq(&h, &pde)[0];
            prop_assert!((a - b).abs() <= 1e-10 * (h.l2_norm_sq(0) + pde.l2_norm_sq(0)));
        }
    }
}
