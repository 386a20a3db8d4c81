//! Finite-difference solver for the macroscopic reaction-diffusion system on
//! a periodic grid, plus a homogeneous ODE oracle.
//!
//! One step is split into upwind advection, explicit central diffusion and a
//! pointwise reaction update, in that order.

use crate::grid::GridField;
use crate::material::SpeciesTable;
use crate::{Error, Result, Vec3, MAX_DIM};

/// Time integrator for the pointwise reaction substep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReactionScheme {
    /// Classic fourth-order Runge–Kutta.
    #[default]
    Rk4,
    /// One forward Euler substep.
    Euler,
}

/// Clipped mass, relative to the initial total, at which a solve aborts.
const CLIP_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeConfig {
    /// Upper bound on the step; intervals between snapshots are split into
    /// equal steps no larger than this.
    pub dt: f64,
    pub scheme: ReactionScheme,
}

impl PdeConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            scheme: ReactionScheme::Rk4,
        }
    }

    /// Largest stable step times `fraction`, from the diffusion and advection
    /// limits of `table` on `grid`.
    pub fn auto(table: &SpeciesTable, grid: &crate::grid::Grid, fraction: f64) -> Self {
        Self::new(fraction * stable_dt(table, grid))
    }

    pub fn with_scheme(self, scheme: ReactionScheme) -> Self {
        Self { scheme, ..self }
    }
}

/// Stability limit: the explicit diffusion bound `h^2 / (d sigma^2)` and the
/// upwind bound `h / sum_a max|v_a|`, whichever is smaller.
pub fn stable_dt(table: &SpeciesTable, grid: &crate::grid::Grid) -> f64 {
    let h = grid.spacing();
    let d = grid.dim as f64;
    let mut limit = f64::INFINITY;
    for r in 0..table.species() {
        let s2 = table.sigma[r] * table.sigma[r];
        if s2 > 0.0 {
            limit = limit.min(h * h / (d * s2));
        }
        let v: f64 = (0..grid.dim)
            .map(|a| table.velocity[r].max_component(a, grid.dim, grid.length))
            .sum();
        if v > 0.0 {
            limit = limit.min(h / v);
        }
    }
    limit
}

/// Precomputed operator for one table on one grid.
#[derive(Debug, Clone)]
pub struct PdeOperator<'a> {
    table: &'a SpeciesTable,
    grid: crate::grid::Grid,
    /// `face_velocity[r][a][node]`: axis-`a` velocity at the face between
    /// `node` and its upper neighbour. Empty when species `r` does not move.
    face_velocity: Vec<Vec<Vec<f64>>>,
    /// `rates[r * R + q]`: per-node collision rate, `None` when it vanishes.
    rates: Vec<Option<Vec<f64>>>,
    /// `(q, l, r, 0.5 * e_hat[q][l][r])` for every nonzero gain coefficient.
    gains: Vec<(usize, usize, usize, f64)>,
}

impl<'a> PdeOperator<'a> {
    pub fn new(table: &'a SpeciesTable, grid: crate::grid::Grid) -> Self {
        let n = table.species();
        let h = grid.spacing();
        let nodes = grid.node_count();
        let face_velocity = table
            .velocity
            .iter()
            .map(|v| {
                if v.is_zero() {
                    return Vec::new();
                }
                (0..grid.dim)
                    .map(|a| {
                        (0..nodes)
                            .map(|i| {
                                let mut x = grid.coord(i);
                                x[a] += 0.5 * h;
                                v.eval(&x, 0.0)[a]
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let mut rates = Vec::with_capacity(n * n);
        for r in 0..n {
            for q in 0..n {
                if table.rate.vanishes(r, q) {
                    rates.push(None);
                } else {
                    rates.push(Some(
                        (0..nodes)
                            .map(|i| table.collision_rate_unchecked(r, q, &grid.coord(i), 0.0))
                            .collect(),
                    ));
                }
            }
        }
        let mut gains = Vec::new();
        for q in 0..n {
            for l in 0..n {
                for r in 0..n {
                    let e = table.frag.e_hat(q, l, r);
                    if e != 0 {
                        gains.push((q, l, r, 0.5 * e as f64));
                    }
                }
            }
        }
        Self {
            table,
            grid,
            face_velocity,
            rates,
            gains,
        }
    }

    pub fn check_cfl(&self, dt: f64) -> Result<()> {
        let limit = stable_dt(self.table, &self.grid);
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::Cfl(format!(
                "step {dt} exceeds the explicit stability limit {limit}"
            )));
        }
        Ok(())
    }

    fn advect(&self, vals: &mut [f64], r: usize, dt: f64) {
        if self.face_velocity[r].is_empty() {
            return;
        }
        let c = dt / self.grid.spacing();
        for (a, faces) in self.face_velocity[r].iter().enumerate() {
            let old = vals.to_vec();
            let flux: Vec<f64> = (0..old.len())
                .map(|i| {
                    let v = faces[i];
                    if v >= 0.0 {
                        v * old[i]
                    } else {
                        v * old[self.grid.shifted(i, a, 1)]
                    }
                })
                .collect();
            for (i, s) in vals.iter_mut().enumerate() {
                *s -= c * (flux[i] - flux[self.grid.shifted(i, a, -1)]);
            }
        }
    }

    fn diffuse(&self, vals: &mut [f64], r: usize, dt: f64) {
        let sigma = self.table.sigma[r];
        if sigma == 0.0 {
            return;
        }
        let h = self.grid.spacing();
        let k = 0.5 * sigma * sigma * dt / (h * h);
        let old = vals.to_vec();
        let dim = self.grid.dim;
        if dim == 1 {
            let n = old.len();
            for i in 0..n {
                let left = old[(i + n - 1) % n];
                let right = old[(i + 1) % n];
                vals[i] = old[i] + k * (left - 2.0 * old[i] + right);
            }
            return;
        }
        for (i, s) in vals.iter_mut().enumerate() {
            let mut lap = -2.0 * dim as f64 * old[i];
            for a in 0..dim {
                lap += old[self.grid.shifted(i, a, 1)] + old[self.grid.shifted(i, a, -1)];
            }
            *s = old[i] + k * lap;
        }
    }

    /// Reaction right-hand side at one node.
    fn reaction_rhs(&self, node: usize, s: &[f64], out: &mut [f64]) {
        let n = s.len();
        out.iter_mut().for_each(|o| *o = 0.0);
        for r in 0..n {
            for q in 0..n {
                if let Some(rate) = &self.rates[r * n + q] {
                    out[r] -= rate[node] * s[r] * s[q];
                }
            }
        }
        for &(q, l, r, coef) in &self.gains {
            if let Some(rate) = &self.rates[q * n + l] {
                out[r] += coef * rate[node] * s[q] * s[l];
            }
        }
    }

    fn react(&self, fields: &mut GridField, dt: f64, scheme: ReactionScheme) {
        let n = self.table.species();
        if self.rates.iter().all(Option::is_none) {
            return;
        }
        let mut s = vec![0.0; n];
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        for node in 0..self.grid.node_count() {
            for r in 0..n {
                s[r] = fields.values[r][node];
            }
            self.reaction_rhs(node, &s, &mut k1);
            match scheme {
                ReactionScheme::Euler => {
                    for r in 0..n {
                        fields.values[r][node] = s[r] + dt * k1[r];
                    }
                }
                ReactionScheme::Rk4 => {
                    for r in 0..n {
                        tmp[r] = s[r] + 0.5 * dt * k1[r];
                    }
                    self.reaction_rhs(node, &tmp, &mut k2);
                    for r in 0..n {
                        tmp[r] = s[r] + 0.5 * dt * k2[r];
                    }
                    self.reaction_rhs(node, &tmp, &mut k3);
                    for r in 0..n {
                        tmp[r] = s[r] + dt * k3[r];
                    }
                    self.reaction_rhs(node, &tmp, &mut k4);
                    for r in 0..n {
                        fields.values[r][node] =
                            s[r] + dt / 6.0 * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r]);
                    }
                }
            }
        }
    }

    /// Only the reaction substep; exposed for conservation checks.
    pub fn reaction_substep(&self, fields: &GridField, dt: f64, scheme: ReactionScheme) -> GridField {
        let mut out = fields.clone();
        self.react(&mut out, dt, scheme);
        out
    }

    /// One split step. Returns the new fields and the clipped negative mass.
    pub fn step(&self, fields: &GridField, dt: f64, scheme: ReactionScheme) -> Result<(GridField, f64)> {
        self.check_cfl(dt)?;
        let mut out = fields.clone();
        for r in 0..out.species() {
            self.advect(&mut out.values[r], r, dt);
            self.diffuse(&mut out.values[r], r, dt);
        }
        self.react(&mut out, dt, scheme);
        let clipped = clip_negative(&mut out, &self.table.masses);
        Ok((out, clipped))
    }
}

/// Sets negative node values to zero; returns the removed mass
/// `sum_r m_r sum |s_r^-| h^d`.
fn clip_negative(fields: &mut GridField, masses: &[u32]) -> f64 {
    let dv = fields.grid.cell_volume();
    let mut clipped = 0.0;
    for (r, vals) in fields.values.iter_mut().enumerate() {
        for v in vals.iter_mut() {
            if *v < 0.0 {
                clipped += masses[r] as f64 * -*v * dv;
                *v = 0.0;
            }
        }
    }
    clipped
}

/// One step of the split scheme with the default reaction integrator.
pub fn pde_step(fields: &GridField, table: &SpeciesTable, dt: f64) -> Result<GridField> {
    let op = PdeOperator::new(table, fields.grid);
    op.step(fields, dt, ReactionScheme::default()).map(|(f, _)| f)
}

/// Solution sampled at the requested times.
#[derive(Debug, Clone)]
pub struct PdeTrajectory {
    pub times: Vec<f64>,
    pub fields: Vec<GridField>,
    pub steps: u64,
    /// Total mass removed by clipping negative values.
    pub clipped_mass: f64,
}

impl PdeTrajectory {
    /// Field at the snapshot closest to `t`.
    pub fn at(&self, t: f64) -> &GridField {
        let i = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        &self.fields[i]
    }
}

/// Integrates from `t = 0` and captures the fields at each (sorted) snapshot
/// time. Each interval is split into equal steps no longer than `cfg.dt`, so
/// snapshots land exactly on the requested times.
pub fn solve(
    fields0: &GridField,
    table: &SpeciesTable,
    cfg: &PdeConfig,
    snapshot_times: &[f64],
) -> Result<PdeTrajectory> {
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(Error::Config(format!("PDE step {} must be positive", cfg.dt)));
    }
    if snapshot_times.iter().any(|t| *t < 0.0 || !t.is_finite())
        || snapshot_times.windows(2).any(|w| w[1] < w[0])
    {
        return Err(Error::Config("snapshot times must be sorted and nonnegative".into()));
    }
    let op = PdeOperator::new(table, fields0.grid);
    op.check_cfl(cfg.dt)?;
    let total = fields0.mass(&table.masses).max(f64::MIN_POSITIVE);
    let mut current = fields0.clone();
    let mut t = 0.0;
    let mut steps = 0;
    let mut clipped_mass = 0.0;
    let mut fields = Vec::with_capacity(snapshot_times.len());
    for &ts in snapshot_times {
        let span = ts - t;
        if span > 0.0 {
            let n = (span / cfg.dt).ceil().max(1.0) as u64;
            let dt = span / n as f64;
            for _ in 0..n {
                let (next, clipped) = op.step(&current, dt, cfg.scheme)?;
                clipped_mass += clipped;
                if clipped_mass > CLIP_TOLERANCE * total {
                    return Err(Error::ExcessiveClipping {
                        clipped: clipped_mass,
                        total,
                    });
                }
                current = next;
                steps += 1;
            }
            t = ts;
        }
        fields.push(current.clone());
    }
    Ok(PdeTrajectory {
        times: snapshot_times.to_vec(),
        fields,
        steps,
        clipped_mass,
    })
}

/// Step of the homogeneous oracle.
pub const ODE_DT: f64 = 1e-4;

/// Spatially homogeneous solution at `t_end`: classic RK4 with step
/// [`ODE_DT`] (the last step shortened) on the reaction system alone. Rates
/// are evaluated at the origin.
pub fn ode_oracle(table: &SpeciesTable, s0: &[f64], t_end: f64) -> Vec<f64> {
    ode_trajectory(table, s0, &[t_end]).pop().unwrap_or_default()
}

/// As [`ode_oracle`], sampled at several sorted times.
pub fn ode_trajectory(table: &SpeciesTable, s0: &[f64], times: &[f64]) -> Vec<Vec<f64>> {
    let n = table.species();
    let origin: Vec3 = [0.0; MAX_DIM];
    let a: Vec<f64> = (0..n * n)
        .map(|i| table.collision_rate_unchecked(i / n, i % n, &origin, 0.0))
        .collect();
    let rhs = |s: &[f64], out: &mut [f64]| {
        for r in 0..n {
            let mut v = 0.0;
            for q in 0..n {
                v -= a[r * n + q] * s[r] * s[q];
            }
            for q in 0..n {
                for l in 0..n {
                    let e = table.frag.e_hat(q, l, r);
                    if e != 0 {
                        v += 0.5 * e as f64 * a[q * n + l] * s[q] * s[l];
                    }
                }
            }
            out[r] = v;
        }
    };
    let mut s = s0.to_vec();
    let mut t = 0.0;
    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut tmp = vec![0.0; n];
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        while t < target - 1e-15 {
            let h = ODE_DT.min(target - t);
            rhs(&s, &mut k[0]);
            for r in 0..n {
                tmp[r] = s[r] + 0.5 * h * k[0][r];
            }
            rhs(&tmp, &mut k[1]);
            for r in 0..n {
                tmp[r] = s[r] + 0.5 * h * k[1][r];
            }
            rhs(&tmp, &mut k[2]);
            for r in 0..n {
                tmp[r] = s[r] + h * k[2][r];
            }
            rhs(&tmp, &mut k[3]);
            for r in 0..n {
                s[r] += h / 6.0 * (k[0][r] + 2.0 * k[1][r] + 2.0 * k[2][r] + k[3][r]);
            }
            t += h;
        }
        out.push(s.clone());
    }
    out
}

/// Periodised heat kernel of variance `var` centred at `center`, in one
/// dimension, on a box of side `length`.
pub fn periodic_gaussian_1d(x: f64, center: f64, var: f64, length: f64) -> f64 {
    let norm = (2.0 * std::f64::consts::PI * var).sqrt();
    let reach = (12.0 * var.sqrt() / length).ceil() as i64 + 1;
    (-reach..=reach)
        .map(|j| {
            let dx = x - center + j as f64 * length;
            (-dx * dx / (2.0 * var)).exp()
        })
        .sum::<f64>()
        / norm
}
