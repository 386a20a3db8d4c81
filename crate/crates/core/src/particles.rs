//! Microscopic particle system: Brownian transport with drift, effective-field
//! collision clocks, and shattering.
//!
//! Time is advanced on a fixed grid. Within a step all event rates are taken
//! from the configuration at the start of the step (frozen field), each
//! particle fires at most once with probability `1 - exp(-A dt)` where `A` is
//! its total rate, and all removals and insertions are applied together after
//! every draw has been made. The transport update follows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::grid::GridField;
use crate::kernels::{convolve_empirical_naive, DensityField, FieldMethod, Kernel};
use crate::material::SpeciesTable;
use crate::{Error, Result};

/// Per-step settings of the particle integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub dt: f64,
    /// Cap on `dt * R * C_a`, the largest possible per-step event probability.
    pub max_event_prob: f64,
    pub field_method: FieldMethod,
}

impl StepConfig {
    pub const DEFAULT_MAX_EVENT_PROB: f64 = 0.1;

    pub fn new(dt: f64, table: &SpeciesTable) -> Result<Self> {
        Self::with_cap(dt, Self::DEFAULT_MAX_EVENT_PROB, table)
    }

    pub fn with_cap(dt: f64, max_event_prob: f64, table: &SpeciesTable) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("time step {dt} must be positive")));
        }
        let product = dt * table.species() as f64 * table.rate_cutoff;
        if product > max_event_prob {
            return Err(Error::StepTooLarge {
                product,
                max: max_event_prob,
            });
        }
        Ok(Self {
            dt,
            max_event_prob,
            field_method: FieldMethod::Auto,
        })
    }

    pub fn with_field_method(self, field_method: FieldMethod) -> Self {
        Self {
            field_method,
            ..self
        }
    }
}

/// Running totals kept alongside the particle state.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Counters {
    /// Fired events per channel, `events[r * R + q]`.
    pub events: Vec<u64>,
    pub rate_evals: u64,
    /// Rate evaluations clamped at `C_a`.
    pub clipped: u64,
    pub steps: u64,
}

impl Counters {
    pub fn clip_fraction(&self) -> f64 {
        if self.rate_evals == 0 {
            0.0
        } else {
            self.clipped as f64 / self.rate_evals as f64
        }
    }
}

/// Positions of every live particle, grouped by species, on `[0, L)^d`.
#[derive(Debug, Clone)]
pub struct ParticleState {
    pub dim: usize,
    pub length: f64,
    pub t: f64,
    /// `positions[r]` is flat with stride `dim`.
    pub positions: Vec<Vec<f64>>,
    masses: Vec<u32>,
    total_atoms: u64,
    pub counters: Counters,
    rng: ChaCha8Rng,
}

/// Frozen copy of a [`ParticleState`] without the random stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSnapshot {
    pub dim: usize,
    pub length: f64,
    pub t: f64,
    pub positions: Vec<Vec<f64>>,
    pub masses: Vec<u32>,
    pub total_atoms: u64,
    pub counters: Counters,
}

impl ParticleSnapshot {
    pub fn count(&self, r: usize) -> usize {
        self.positions[r].len() / self.dim
    }

    pub fn counts(&self) -> Vec<usize> {
        (0..self.positions.len()).map(|r| self.count(r)).collect()
    }

    /// Weight `1/N` of one particle in the empirical measures.
    pub fn weight(&self) -> f64 {
        1.0 / self.total_atoms as f64
    }
}

impl ParticleState {
    /// Builds a state from explicit positions. The system size is the atom
    /// count `sum_r m_r N_r` of the given configuration.
    pub fn from_positions(
        dim: usize,
        length: f64,
        masses: Vec<u32>,
        positions: Vec<Vec<f64>>,
        seed: u64,
    ) -> Result<Self> {
        Self::from_positions_with_rng(dim, length, masses, positions, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn from_positions_with_rng(
        dim: usize,
        length: f64,
        masses: Vec<u32>,
        positions: Vec<Vec<f64>>,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        if masses.len() != positions.len() {
            return Err(Error::Config(format!(
                "{} masses but {} position arrays",
                masses.len(),
                positions.len()
            )));
        }
        for (r, p) in positions.iter().enumerate() {
            if p.len() % dim != 0 {
                return Err(Error::Config(format!(
                    "positions of species {} not a multiple of dimension {dim}",
                    r + 1
                )));
            }
            if p.iter().any(|x| !(0.0..length).contains(x)) {
                return Err(Error::Config(format!(
                    "positions of species {} outside [0, {length})",
                    r + 1
                )));
            }
        }
        let total_atoms = atom_count(&masses, &positions, dim);
        let r = masses.len();
        Ok(Self {
            dim,
            length,
            t: 0.0,
            positions,
            masses,
            total_atoms,
            counters: Counters {
                events: vec![0; r * r],
                ..Counters::default()
            },
            rng,
        })
    }

    pub fn species(&self) -> usize {
        self.positions.len()
    }

    pub fn count(&self, r: usize) -> usize {
        self.positions[r].len() / self.dim
    }

    pub fn counts(&self) -> Vec<usize> {
        (0..self.species()).map(|r| self.count(r)).collect()
    }

    /// System size `N`: atoms at time zero.
    pub fn total_atoms(&self) -> u64 {
        self.total_atoms
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.total_atoms as f64
    }

    pub fn snapshot(&self) -> ParticleSnapshot {
        ParticleSnapshot {
            dim: self.dim,
            length: self.length,
            t: self.t,
            positions: self.positions.clone(),
            masses: self.masses.clone(),
            total_atoms: self.total_atoms,
            counters: self.counters.clone(),
        }
    }

    /// Exact mass and count bookkeeping.
    pub fn check_invariants(&self) -> Result<()> {
        let atoms = atom_count(&self.masses, &self.positions, self.dim);
        if atoms != self.total_atoms {
            return Err(Error::Invariant(format!(
                "atom count {atoms} != N = {}",
                self.total_atoms
            )));
        }
        let particles: u64 = self.counts().iter().map(|&c| c as u64).sum();
        if particles > self.total_atoms {
            return Err(Error::Invariant(format!(
                "{particles} particles exceed N = {}",
                self.total_atoms
            )));
        }
        Ok(())
    }
}

fn atom_count(masses: &[u32], positions: &[Vec<f64>], dim: usize) -> u64 {
    masses
        .iter()
        .zip(positions)
        .map(|(&m, p)| m as u64 * (p.len() / dim) as u64)
        .sum()
}

#[inline]
fn wrap(x: f64, length: f64) -> f64 {
    let y = x.rem_euclid(length);
    // rem_euclid of a tiny negative number can round up to `length`
    if y >= length {
        0.0
    } else {
        y
    }
}

/// Draws an initial configuration from the densities `s0` (one per species,
/// on the box of `s0.grid`).
///
/// The densities are first rescaled so that `sum_r m_r <s0_r, 1> = 1`; then
/// `N_r = round(N <s0_r, 1>)` particles are drawn i.i.d. from `s0_r`. Node
/// values are treated as cell averages over the cell centred on the node.
/// The returned state's system size is the realised atom count.
pub fn sample_initial_state(
    table: &SpeciesTable,
    s0: &GridField,
    n: u64,
    mut rng: ChaCha8Rng,
) -> Result<ParticleState> {
    let grid = s0.grid;
    let species = table.species();
    if s0.species() != species {
        return Err(Error::Config(format!(
            "initial data has {} species, table has {species}",
            s0.species()
        )));
    }
    if s0.values.iter().flatten().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::Config("initial density must be finite and nonnegative".into()));
    }
    let mass = s0.mass(&table.masses);
    if mass <= 0.0 {
        return Err(Error::ZeroInitialDensity);
    }
    let dim = grid.dim;
    let h = grid.spacing();
    let mut positions = Vec::with_capacity(species);
    for r in 0..species {
        let count = (n as f64 * s0.integral(r) / mass).round() as usize;
        let vals = &s0.values[r];
        let mut pos = Vec::with_capacity(count * dim);
        if count > 0 {
            if dim == 1 {
                let mut cdf = Vec::with_capacity(vals.len());
                let mut acc = 0.0;
                for v in vals {
                    acc += v;
                    cdf.push(acc);
                }
                for _ in 0..count {
                    let u = rng.random::<f64>() * acc;
                    let cell = cdf.partition_point(|&c| c <= u).min(vals.len() - 1);
                    let x = (cell as f64 - 0.5 + rng.random::<f64>()) * h;
                    pos.push(wrap(x, grid.length));
                }
            } else {
                let vmax = vals.iter().cloned().fold(0.0, f64::max);
                let nodes = vals.len();
                while pos.len() < count * dim {
                    let cell = rng.random_range(0..nodes);
                    if rng.random::<f64>() * vmax >= vals[cell] {
                        continue;
                    }
                    let ijk = grid.unflatten(cell);
                    for &i in ijk.iter().take(dim) {
                        let x = (i as f64 - 0.5 + rng.random::<f64>()) * h;
                        pos.push(wrap(x, grid.length));
                    }
                }
            }
        }
        positions.push(pos);
    }
    let state = ParticleState::from_positions_with_rng(
        dim,
        grid.length,
        table.masses.clone(),
        positions,
        rng,
    )?;
    if state.total_atoms() == 0 {
        return Err(Error::ZeroInitialDensity);
    }
    Ok(state)
}

/// Euler–Maruyama transport: `X += v_r(X, t) dt + sigma_r sqrt(dt) xi`,
/// wrapped into the box. Time is not advanced here.
pub fn sde_step(state: &mut ParticleState, table: &SpeciesTable, dt: f64) {
    let dim = state.dim;
    let length = state.length;
    let t = state.t;
    let sqrt_dt = dt.sqrt();
    for r in 0..state.species() {
        let sigma = table.sigma[r] * sqrt_dt;
        let velocity = &table.velocity[r];
        let moving = !velocity.is_zero();
        let rng = &mut state.rng;
        for x in state.positions[r].chunks_exact_mut(dim) {
            let v = if moving {
                velocity.eval(x, t)
            } else {
                [0.0; crate::MAX_DIM]
            };
            for a in 0..dim {
                let xi: f64 = if sigma != 0.0 {
                    rng.sample(StandardNormal)
                } else {
                    0.0
                };
                x[a] = wrap(x[a] + v[a] * dt + sigma * xi, length);
            }
        }
    }
}

/// Effective-field rate of particle `k` of species `r` against species `q`,
/// `min{C_a, a_hat_rq(X_k, t) (1/N) sum_{l != k} W(X_k - X_l)}`, evaluated by
/// direct summation over species `q` with the truncated kernel.
pub fn interaction_rate(
    state: &ParticleState,
    table: &SpeciesTable,
    kernel: &Kernel,
    r: usize,
    k: usize,
    q: usize,
) -> Result<f64> {
    let dim = state.dim;
    let x = &state.positions[r][k * dim..(k + 1) * dim];
    let a_hat = table.collision_rate(r, q, x, state.t)?;
    if a_hat == 0.0 {
        return Ok(0.0);
    }
    let exclude = if r == q { Some(k) } else { None };
    let field = convolve_empirical_naive(
        &state.positions[q],
        state.weight(),
        kernel,
        state.length,
        x,
        exclude,
    );
    Ok((a_hat * field).clamp(0.0, table.rate_cutoff))
}

/// One frozen-field event step. Returns the number of events fired.
pub fn interaction_step(
    state: &mut ParticleState,
    table: &SpeciesTable,
    kernel: &Kernel,
    cfg: &StepConfig,
) -> Result<u64> {
    let species = state.species();
    let dim = state.dim;
    let dt = cfg.dt;
    let t = state.t;
    let cutoff = table.rate_cutoff;
    let weight = state.weight();

    // rates[r][q][k] from the start-of-step configuration
    let mut rates: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; species]; species];
    for q in 0..species {
        let targets: Vec<usize> = (0..species)
            .filter(|&r| state.count(r) > 0 && !table.rate.vanishes(r, q))
            .collect();
        if targets.is_empty() || state.count(q) == 0 {
            continue;
        }
        let target_count: usize = targets.iter().map(|&r| state.count(r)).sum();
        let field = DensityField::build(
            &state.positions[q],
            weight,
            kernel,
            state.length,
            target_count,
            cfg.field_method,
        );
        for r in targets {
            let pos = &state.positions[r];
            let values = field.eval_all(pos, dim, r == q);
            let mut out = Vec::with_capacity(values.len());
            for (x, f) in pos.chunks_exact(dim).zip(values) {
                let raw = table.collision_rate_unchecked(r, q, x, t) * f.max(0.0);
                state.counters.rate_evals += 1;
                if raw > cutoff {
                    state.counters.clipped += 1;
                    out.push(cutoff);
                } else {
                    out.push(raw);
                }
            }
            rates[r][q] = Some(out);
        }
    }

    // draws: (species, index, channel)
    let mut fired: Vec<(usize, usize, usize)> = Vec::new();
    let mut channel_rates = vec![0.0; species];
    for (r, row) in rates.iter().enumerate() {
        if row.iter().all(Option::is_none) {
            continue;
        }
        for k in 0..state.count(r) {
            let mut total = 0.0;
            for (q, c) in channel_rates.iter_mut().enumerate() {
                *c = row[q].as_ref().map_or(0.0, |v| v[k]);
                total += *c;
            }
            if total <= 0.0 {
                continue;
            }
            let p = -(-total * dt).exp_m1();
            let u: f64 = state.rng.random();
            if u >= p {
                continue;
            }
            // reuse the accepted uniform to pick the channel
            let target = u / p * total;
            let mut acc = 0.0;
            let mut channel = species - 1;
            for (q, c) in channel_rates.iter().enumerate() {
                acc += c;
                if target < acc {
                    channel = q;
                    break;
                }
            }
            while channel_rates[channel] == 0.0 {
                channel -= 1;
            }
            fired.push((r, k, channel));
        }
    }
    if fired.is_empty() {
        return Ok(0);
    }

    // apply all removals and insertions together
    let mut removed: Vec<Vec<bool>> = (0..species).map(|r| vec![false; state.count(r)]).collect();
    let mut products: Vec<Vec<f64>> = vec![Vec::new(); species];
    for &(r, k, q) in &fired {
        removed[r][k] = true;
        state.counters.events[r * species + q] += 1;
        let x = &state.positions[r][k * dim..(k + 1) * dim];
        for (l, count) in table.frag.products(r, q) {
            for _ in 0..count {
                products[l].extend_from_slice(x);
            }
        }
    }
    for r in 0..species {
        let old = std::mem::take(&mut state.positions[r]);
        let mut kept: Vec<f64> = old
            .chunks_exact(dim)
            .zip(&removed[r])
            .filter(|(_, gone)| !**gone)
            .flat_map(|(x, _)| x.iter().copied())
            .collect();
        kept.extend_from_slice(&products[r]);
        state.positions[r] = kept;
    }
    Ok(fired.len() as u64)
}

/// Maps requested times onto the step grid.
fn snapshot_steps(times: &[f64], dt: f64, t_end: f64) -> Result<Vec<u64>> {
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("snapshot times must be sorted".into()));
    }
    if let Some(&last) = times.last() {
        if last > t_end * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::Config(format!(
                "snapshot time {last} beyond end time {t_end}"
            )));
        }
    }
    Ok(times.iter().map(|&ts| (ts / dt).round() as u64).collect())
}

/// Integrates to `t_end`, alternating an event step and a transport step on
/// the `dt` grid, and returns snapshots at the requested times (rounded to the
/// step grid). Invariants are checked after every step.
pub fn run(
    state: &mut ParticleState,
    table: &SpeciesTable,
    kernel: &Kernel,
    cfg: &StepConfig,
    t_end: f64,
    snapshot_times: &[f64],
) -> Result<Vec<ParticleSnapshot>> {
    run_with(state, table, kernel, cfg, t_end, snapshot_times, |_| {})
}

/// As [`run`], calling `observe` after every completed step.
pub fn run_with(
    state: &mut ParticleState,
    table: &SpeciesTable,
    kernel: &Kernel,
    cfg: &StepConfig,
    t_end: f64,
    snapshot_times: &[f64],
    mut observe: impl FnMut(&ParticleState),
) -> Result<Vec<ParticleSnapshot>> {
    let dt = cfg.dt;
    let steps = (t_end / dt).round() as u64;
    let wanted = snapshot_steps(snapshot_times, dt, t_end)?;
    let start_t = state.t;
    let mut out = Vec::with_capacity(wanted.len());
    let mut next = 0;
    state.check_invariants()?;
    for step in 0..=steps {
        while next < wanted.len() && wanted[next] == step {
            out.push(state.snapshot());
            next += 1;
        }
        if step == steps {
            break;
        }
        interaction_step(state, table, kernel, cfg)?;
        sde_step(state, table, dt);
        state.t = start_t + (step + 1) as f64 * dt;
        state.counters.steps += 1;
        state.check_invariants()?;
        observe(state);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::material::{CollisionRateSpec, VelocityField};

    fn shattering(rate: f64, sigma: f64) -> SpeciesTable {
        let mut t = SpeciesTable::binary_shattering(1, [sigma, sigma], rate, 10.0);
        assert!(t.validate().is_valid());
        t
    }

    #[test]
    fn step_config_enforces_event_cap() {
        let t = shattering(1.0, 1.0);
        assert!(StepConfig::new(0.005, &t).is_ok());
        assert!(matches!(
            StepConfig::new(0.01, &t),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn sampling_rounds_counts_and_rejects_zero() {
        let t = shattering(1.0, 1.0);
        let g = Grid::new(1, 100, 10.0).unwrap();
        // integrals 0.5 and 0.25 with masses (1, 2): total mass 1
        let s0 = GridField::from_fn(g, 2, |r, _| if r == 0 { 0.05 } else { 0.025 });
        let st = sample_initial_state(&t, &s0, 1000, ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(st.counts(), vec![500, 250]);
        assert_eq!(st.total_atoms(), 1000);

        let zero = GridField::zeros(g, 2);
        assert!(matches!(
            sample_initial_state(&t, &zero, 1000, ChaCha8Rng::seed_from_u64(1)),
            Err(Error::ZeroInitialDensity)
        ));
    }

    #[test]
    fn uniform_sampling_passes_ks() {
        let mut t = shattering(1.0, 1.0);
        t.masses = vec![1, 2];
        let g = Grid::new(1, 64, 10.0).unwrap();
        let s0 = GridField::from_fn(g, 2, |r, _| if r == 0 { 0.1 } else { 0.0 });
        for seed in 0..5 {
            let st = sample_initial_state(&t, &s0, 1000, ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(st.count(0), 1000);
            let mut xs = st.positions[0].clone();
            xs.sort_by(f64::total_cmp);
            let n = xs.len() as f64;
            let d = xs
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let f = x / 10.0;
                    (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
                })
                .fold(0.0, f64::max);
            // p = 0.01 critical value
            assert!(d < 1.628 / n.sqrt(), "seed {seed}: D = {d}");
        }
    }

    #[test]
    fn transport_examples() {
        let mut t = SpeciesTable::binary_shattering(1, [0.0, 0.0], 0.0, 10.0);
        let mut st =
            ParticleState::from_positions(1, 10.0, vec![1, 2], vec![vec![1.0, 9.9], vec![]], 0)
                .unwrap();
        sde_step(&mut st, &t, 0.5);
        assert_eq!(st.positions[0], vec![1.0, 9.9]);

        t.velocity[0] = VelocityField::Constant([1.0, 0.0, 0.0]);
        sde_step(&mut st, &t, 0.5);
        assert!((st.positions[0][0] - 1.5).abs() < 1e-15);
        assert!((st.positions[0][1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn brownian_variance_matches_sigma_squared_dt() {
        let t = shattering(0.0, 1.0);
        let n = 10_000;
        let mut st = ParticleState::from_positions(
            2,
            10.0,
            vec![1, 2],
            vec![vec![5.0; 2 * n], vec![]],
            42,
        )
        .unwrap();
        let mut t2 = t.clone();
        t2.dim = 2;
        sde_step(&mut st, &t2, 0.01);
        for a in 0..2 {
            let xs: Vec<f64> = st.positions[0].iter().skip(a).step_by(2).copied().collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((var - 0.01).abs() < 0.05 * 0.01, "axis {a}: {var}");
        }
    }

    #[test]
    fn rate_examples() {
        let mut t = shattering(1.0, 1.0);
        t.rate_cutoff = 10.0;
        let k = Kernel::new(1, 10.0);
        // no partner within the cutoff
        let st = ParticleState::from_positions(1, 10.0, vec![1, 2], vec![vec![1.0], vec![5.0]], 0)
            .unwrap();
        assert_eq!(interaction_rate(&st, &t, &k, 0, 0, 1).unwrap(), 0.0);

        // coincident partner of another species; N = 98 + 2 = 100 atoms
        let mut ones = vec![3.0];
        ones.extend(std::iter::repeat_n(8.0, 97));
        let st = ParticleState::from_positions(1, 10.0, vec![1, 2], vec![ones, vec![3.0]], 0)
            .unwrap();
        assert_eq!(st.total_atoms(), 100);
        let a = interaction_rate(&st, &t, &k, 0, 0, 1).unwrap();
        assert!((a - 0.039_894_228_040_143_27).abs() < 1e-12);

        // huge a_hat is clamped to C_a exactly
        t.rate = CollisionRateSpec::uniform(2, 1e6);
        assert_eq!(interaction_rate(&st, &t, &k, 0, 0, 1).unwrap(), 10.0);
        // self is excluded: lone species-2 particle sees nothing of its own kind
        assert_eq!(interaction_rate(&st, &t, &k, 1, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn zero_rates_fire_nothing() {
        let t = shattering(0.0, 1.0);
        let g = Grid::new(1, 100, 10.0).unwrap();
        let s0 = GridField::from_fn(g, 2, |_, _| 0.05);
        let mut st = sample_initial_state(&t, &s0, 600, ChaCha8Rng::seed_from_u64(9)).unwrap();
        let before = st.positions.clone();
        let cfg = StepConfig::new(0.001, &t).unwrap();
        let k = Kernel::new(1, 2.0);
        assert_eq!(interaction_step(&mut st, &t, &k, &cfg).unwrap(), 0);
        assert_eq!(st.positions, before);
    }

    #[test]
    fn shattering_event_conserves_atoms() {
        let t = shattering(1000.0, 1.0);
        // two species-2 particles on top of each other fire almost surely
        let mut st =
            ParticleState::from_positions(1, 10.0, vec![1, 2], vec![vec![], vec![4.0, 4.0]], 1)
                .unwrap();
        let cfg = StepConfig::new(0.004, &t).unwrap();
        let k = Kernel::new(1, 2.0);
        let mut fired = 0;
        while fired == 0 {
            fired = interaction_step(&mut st, &t, &k, &cfg).unwrap();
        }
        st.check_invariants().unwrap();
        assert_eq!(st.count(1), 2 - fired as usize);
        assert_eq!(st.count(0), 2 * fired as usize);
        assert!(st.positions[0].iter().all(|&x| x == 4.0));
    }

    #[test]
    fn thinning_probability_matches_poisson_clock() {
        // species-2 probes in a uniform lattice bath of species-1 partners;
        // the periodic field of the lattice is flat, so every probe has rate 0.05
        let m = 2000usize;
        let lattice = |shift: f64| (0..m).map(|i| (i as f64 + shift) / m as f64).collect::<Vec<_>>();
        let base =
            ParticleState::from_positions(1, 1.0, vec![1, 2], vec![lattice(0.0), lattice(0.5)], 0)
                .unwrap();
        let field = m as f64 / base.total_atoms() as f64;
        let a = 0.05 / field;
        let mut t = SpeciesTable::binary_shattering(1, [0.1, 0.1], 1.0, 5.0);
        t.rate = CollisionRateSpec::ConstantMatrix(vec![vec![0.0, a], vec![a, 0.0]]);
        assert!(t.validate().is_valid());
        let k = Kernel::new(1, 3.0);
        let cfg = StepConfig::with_cap(0.1, 1.0, &t)
            .unwrap()
            .with_field_method(FieldMethod::Spectral);
        let expected = 1.0 - (-0.005f64).exp();
        let steps = 50;
        let mut hits = 0u64;
        for i in 0..steps {
            let mut st = base.clone();
            st.rng = ChaCha8Rng::seed_from_u64(i);
            interaction_step(&mut st, &t, &k, &cfg).unwrap();
            // probe channel (2, 1) only
            hits += st.counters.events[2];
        }
        let trials = (steps as usize * m) as f64;
        let freq = hits as f64 / trials;
        let sd = (expected * (1.0 - expected) / trials).sqrt();
        assert!((freq - expected).abs() < 3.0 * sd, "{freq} vs {expected}");
    }

    #[test]
    fn run_is_deterministic_and_conserves_mass() {
        let t = shattering(1.0, 0.5);
        let g = Grid::new(1, 200, 10.0).unwrap();
        let s0 = GridField::from_fn(g, 2, |r, x| {
            if r == 1 {
                (-(x[0] - 5.0).powi(2)).exp()
            } else {
                0.0
            }
        });
        let cfg = StepConfig::new(0.001, &t).unwrap();
        let go = || {
            let mut st = sample_initial_state(&t, &s0, 2000, ChaCha8Rng::seed_from_u64(7)).unwrap();
            let k = Kernel::new(1, 2.0);
            run(&mut st, &t, &k, &cfg, 0.2, &[0.0, 0.1, 0.2]).unwrap()
        };
        let a = go();
        let b = go();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        for s in &a {
            let atoms: u64 = s.counts().iter().zip(&s.masses).map(|(&c, &m)| c as u64 * m as u64).sum();
            assert_eq!(atoms, s.total_atoms);
        }
        assert!(a[2].counters.events.iter().sum::<u64>() > 0);
    }

    #[test]
    fn zero_end_time_returns_initial_state() {
        let t = shattering(1.0, 1.0);
        let mut st =
            ParticleState::from_positions(1, 10.0, vec![1, 2], vec![vec![1.0], vec![2.0]], 3)
                .unwrap();
        let cfg = StepConfig::new(0.001, &t).unwrap();
        let snaps = run(&mut st, &t, &Kernel::new(1, 2.0), &cfg, 0.0, &[0.0]).unwrap();
        assert_eq!(snaps.len(), 1);
        assert_eq!(snaps[0].positions, vec![vec![1.0], vec![2.0]]);
        assert_eq!(snaps[0].t, 0.0);
    }

    #[test]
    fn pure_diffusion_keeps_counts() {
        let t = shattering(0.0, 1.0);
        let g = Grid::new(1, 100, 10.0).unwrap();
        let s0 = GridField::from_fn(g, 2, |_, _| 0.05);
        let mut st = sample_initial_state(&t, &s0, 900, ChaCha8Rng::seed_from_u64(2)).unwrap();
        let counts = st.counts();
        let cfg = StepConfig::new(0.005, &t).unwrap();
        let snaps = run(&mut st, &t, &Kernel::new(1, 2.0), &cfg, 1.0, &[0.5, 1.0]).unwrap();
        for s in snaps {
            assert_eq!(s.counts(), counts);
        }
    }

    #[test]
    fn unsorted_snapshots_rejected() {
        let t = shattering(1.0, 1.0);
        let mut st =
            ParticleState::from_positions(1, 10.0, vec![1, 2], vec![vec![1.0], vec![]], 3).unwrap();
        let cfg = StepConfig::new(0.001, &t).unwrap();
        let k = Kernel::new(1, 2.0);
        assert!(run(&mut st, &t, &k, &cfg, 1.0, &[0.5, 0.1]).is_err());
        assert!(run(&mut st, &t, &k, &cfg, 1.0, &[2.0]).is_err());
    }
}
