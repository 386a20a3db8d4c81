//! Model coefficients: masses, diffusion constants, velocity fields,
//! macroscopic collision rates and shattering tables.
//!
//! Species are indexed from 0 in the API. Masses are positive integers (atoms
//! of unit mass), so every conservation check here is exact integer
//! arithmetic.

use crate::grid::VectorGrid;
use crate::{Error, Result, ValidationReport, Vec3, Violation, MAX_DIM};

/// Transport velocity of one species.
#[derive(Debug, Clone, PartialEq)]
pub enum VelocityField {
    Zero,
    Constant(Vec3),
    /// Rigid rotation `omega * (-(y - cy), x - cx)` about `center`; 2-d only.
    /// Uses raw box coordinates, so the field jumps across the periodic seam.
    Rotational { center: [f64; 2], omega: f64 },
    /// Multilinear interpolation of node samples. Only Lipschitz, not C^1.
    GridSampled(VectorGrid),
}

impl VelocityField {
    pub fn eval(&self, x: &[f64], _t: f64) -> Vec3 {
        match self {
            VelocityField::Zero => [0.0; MAX_DIM],
            VelocityField::Constant(v) => *v,
            VelocityField::Rotational { center, omega } => {
                [-omega * (x[1] - center[1]), omega * (x[0] - center[0]), 0.0]
            }
            VelocityField::GridSampled(g) => g.eval(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            VelocityField::Zero => true,
            VelocityField::Constant(v) => v.iter().all(|c| *c == 0.0),
            VelocityField::Rotational { omega, .. } => *omega == 0.0,
            VelocityField::GridSampled(g) => g.components.iter().flatten().all(|c| *c == 0.0),
        }
    }

    /// Upper bound on `|v|` over the box `[0, length)^dim`.
    pub fn max_speed(&self, dim: usize, length: f64) -> f64 {
        match self {
            VelocityField::Zero => 0.0,
            VelocityField::Constant(v) => v[..dim].iter().map(|c| c * c).sum::<f64>().sqrt(),
            VelocityField::Rotational { center, omega } => {
                let far = |c: f64| c.abs().max((length - c).abs());
                omega.abs() * (far(center[0]).powi(2) + far(center[1]).powi(2)).sqrt()
            }
            VelocityField::GridSampled(g) => {
                let n = g.grid.node_count();
                (0..n)
                    .map(|i| {
                        g.components
                            .iter()
                            .map(|c| c[i] * c[i])
                            .sum::<f64>()
                            .sqrt()
                    })
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Largest single velocity component magnitude along `axis`.
    pub fn max_component(&self, axis: usize, dim: usize, length: f64) -> f64 {
        match self {
            VelocityField::Constant(v) => v[axis].abs(),
            VelocityField::GridSampled(g) => {
                g.components[axis].iter().fold(0.0, |m, c| m.max(c.abs()))
            }
            other => other.max_speed(dim, length),
        }
    }
}

/// Speed dependence `g(|v_r - v_q|)` of the cross-section collision rate.
#[derive(Debug, Clone, PartialEq)]
pub enum SpeedLaw {
    Constant(f64),
    Linear { intercept: f64, slope: f64 },
    /// Piecewise-linear through `(speeds[i], values[i])`, held constant
    /// outside the table.
    Table { speeds: Vec<f64>, values: Vec<f64> },
}

impl SpeedLaw {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            SpeedLaw::Constant(c) => *c,
            SpeedLaw::Linear { intercept, slope } => intercept + slope * s,
            SpeedLaw::Table { speeds, values } => {
                if s <= speeds[0] {
                    return values[0];
                }
                let last = speeds.len() - 1;
                if s >= speeds[last] {
                    return values[last];
                }
                let j = speeds.partition_point(|&v| v <= s);
                let (s0, s1) = (speeds[j - 1], speeds[j]);
                let w = (s - s0) / (s1 - s0);
                values[j - 1] * (1.0 - w) + values[j] * w
            }
        }
    }

    fn validate(&self, report: &mut ValidationReport) {
        match self {
            SpeedLaw::Constant(c) => {
                if !(c.is_finite() && *c >= 0.0) {
                    report.push(Violation::BadSpeedLaw(format!("constant {c} must be >= 0")));
                }
            }
            SpeedLaw::Linear { intercept, slope } => {
                if !(intercept.is_finite() && *intercept >= 0.0 && slope.is_finite() && *slope >= 0.0)
                {
                    report.push(Violation::BadSpeedLaw(format!(
                        "linear law needs intercept >= 0 and slope >= 0, got ({intercept}, {slope})"
                    )));
                }
            }
            SpeedLaw::Table { speeds, values } => {
                if speeds.is_empty() || speeds.len() != values.len() {
                    report.push(Violation::BadSpeedLaw(
                        "table needs matching, non-empty speed and value lists".into(),
                    ));
                    return;
                }
                if speeds.windows(2).any(|w| w[1] <= w[0]) {
                    report.push(Violation::BadSpeedLaw("table speeds must increase".into()));
                }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    report.push(Violation::BadSpeedLaw("table values must be >= 0".into()));
                }
            }
        }
    }
}

/// Macroscopic collision rate `a_hat_rq(x, t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum CollisionRateSpec {
    ConstantMatrix(Vec<Vec<f64>>),
    /// `scale * (l_r + l_q)^(d-1) * g(|v_r(x,t) - v_q(x,t)|)`.
    CrossSection {
        radii: Vec<f64>,
        speed_law: SpeedLaw,
        scale: f64,
    },
}

impl CollisionRateSpec {
    pub fn uniform(species: usize, value: f64) -> Self {
        CollisionRateSpec::ConstantMatrix(vec![vec![value; species]; species])
    }

    /// True when the channel `(r, q)` can never fire.
    pub fn vanishes(&self, r: usize, q: usize) -> bool {
        match self {
            CollisionRateSpec::ConstantMatrix(m) => m[r][q] == 0.0,
            CollisionRateSpec::CrossSection { scale, speed_law, .. } => {
                *scale == 0.0 || matches!(speed_law, SpeedLaw::Constant(c) if *c == 0.0)
            }
        }
    }

    fn eval_unchecked(
        &self,
        r: usize,
        q: usize,
        x: &[f64],
        t: f64,
        dim: usize,
        velocity: &[VelocityField],
    ) -> f64 {
        match self {
            CollisionRateSpec::ConstantMatrix(m) => m[r][q],
            CollisionRateSpec::CrossSection {
                radii,
                speed_law,
                scale,
            } => {
                let vr = velocity[r].eval(x, t);
                let vq = velocity[q].eval(x, t);
                let rel = (0..dim)
                    .map(|a| (vr[a] - vq[a]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                scale * (radii[r] + radii[q]).powi(dim as i32 - 1) * speed_law.eval(rel)
            }
        }
    }
}

/// Microscopic shattering coefficients `e[r][q][l]` and their symmetrised
/// macroscopic counterpart `e_hat[r][q][l] = e[r][q][l] + e[q][r][l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FragTable {
    species: usize,
    e: Vec<u32>,
    e_hat: Vec<u32>,
}

impl FragTable {
    /// All-zero table for `species` species.
    pub fn zeros(species: usize) -> Self {
        let n = species.pow(3);
        Self {
            species,
            e: vec![0; n],
            e_hat: vec![0; n],
        }
    }

    /// Builds a table from sparse `(r, q, l, count)` entries; later entries
    /// overwrite earlier ones.
    pub fn from_entries(species: usize, entries: &[(usize, usize, usize, u32)]) -> Result<Self> {
        let mut t = Self::zeros(species);
        for &(r, q, l, c) in entries {
            for idx in [r, q, l] {
                if idx >= species {
                    return Err(Error::SpeciesIndex {
                        index: idx,
                        count: species,
                    });
                }
            }
            t.set(r, q, l, c);
        }
        t.recompute_hat();
        Ok(t)
    }

    /// Every collision of `r` with any partner leaves `r` intact: `e[r][q][r] = 1`.
    pub fn elastic(species: usize) -> Self {
        let mut t = Self::zeros(species);
        for r in 0..species {
            for q in 0..species {
                t.set(r, q, r, 1);
            }
        }
        t.recompute_hat();
        t
    }

    #[inline]
    fn idx(&self, r: usize, q: usize, l: usize) -> usize {
        (r * self.species + q) * self.species + l
    }

    pub fn species(&self) -> usize {
        self.species
    }

    #[inline]
    pub fn e(&self, r: usize, q: usize, l: usize) -> u32 {
        self.e[self.idx(r, q, l)]
    }

    #[inline]
    pub fn e_hat(&self, r: usize, q: usize, l: usize) -> u32 {
        self.e_hat[self.idx(r, q, l)]
    }

    pub fn set(&mut self, r: usize, q: usize, l: usize, count: u32) {
        let i = self.idx(r, q, l);
        self.e[i] = count;
    }

    /// Overwrites a supplied `e_hat`; used by tests that inject inconsistent data.
    pub fn set_hat(&mut self, r: usize, q: usize, l: usize, count: u32) {
        let i = self.idx(r, q, l);
        self.e_hat[i] = count;
    }

    pub fn recompute_hat(&mut self) {
        for r in 0..self.species {
            for q in 0..self.species {
                for l in 0..self.species {
                    let v = self.e(r, q, l) + self.e(q, r, l);
                    let i = self.idx(r, q, l);
                    self.e_hat[i] = v;
                }
            }
        }
    }

    /// Random table satisfying the shattering constraint: for each `(r, q)`
    /// the mass `m_r` is split into a random multiset of masses `<= m_r`.
    pub fn random_shattering<R: rand::Rng + ?Sized>(masses: &[u32], rng: &mut R) -> Self {
        let n = masses.len();
        let mut t = Self::zeros(n);
        for r in 0..n {
            for q in 0..n {
                let mut left = masses[r];
                while left > 0 {
                    let fits = masses.iter().take_while(|&&m| m <= left).count();
                    let l = rng.random_range(0..fits);
                    t.set(r, q, l, t.e(r, q, l) + 1);
                    left -= masses[l];
                }
            }
        }
        t.recompute_hat();
        t
    }

    /// Fragments produced when a particle of species `r` shatters against `q`:
    /// `(l, count)` pairs with nonzero count.
    pub fn products(&self, r: usize, q: usize) -> impl Iterator<Item = (usize, u32)> + '_ {
        (0..self.species)
            .map(move |l| (l, self.e(r, q, l)))
            .filter(|(_, c)| *c > 0)
    }
}

/// All per-species coefficients of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesTable {
    pub dim: usize,
    pub masses: Vec<u32>,
    pub sigma: Vec<f64>,
    pub velocity: Vec<VelocityField>,
    pub rate: CollisionRateSpec,
    pub frag: FragTable,
    /// Upper bound `C_a` on microscopic event rates.
    pub rate_cutoff: f64,
}

impl SpeciesTable {
    pub fn species(&self) -> usize {
        self.masses.len()
    }

    /// `a_hat_rq(x, t)`.
    pub fn collision_rate(&self, r: usize, q: usize, x: &[f64], t: f64) -> Result<f64> {
        let n = self.species();
        for idx in [r, q] {
            if idx >= n {
                return Err(Error::SpeciesIndex { index: idx, count: n });
            }
        }
        Ok(self.collision_rate_unchecked(r, q, x, t))
    }

    #[inline]
    pub(crate) fn collision_rate_unchecked(&self, r: usize, q: usize, x: &[f64], t: f64) -> f64 {
        self.rate
            .eval_unchecked(r, q, x, t, self.dim, &self.velocity)
    }

    /// Checks every structural invariant and recomputes `e_hat` from `e`,
    /// overwriting whatever was stored.
    pub fn validate(&mut self) -> ValidationReport {
        self.frag.recompute_hat();
        let mut report = ValidationReport::default();
        let n = self.species();
        if n == 0 {
            report.push(Violation::NoSpecies);
            return report;
        }
        if !(1..=MAX_DIM).contains(&self.dim) {
            report.push(Violation::UnsupportedDimension { dim: self.dim });
        }
        if self.masses[0] != 1 {
            report.push(Violation::FirstMassNotUnit {
                mass: self.masses[0],
            });
        }
        for r in 0..n.saturating_sub(1) {
            if self.masses[r] >= self.masses[r + 1] {
                report.push(Violation::MassesNotIncreasing { r });
            }
        }
        for what in [("sigma", self.sigma.len()), ("velocity", self.velocity.len())] {
            if what.1 != n {
                report.push(Violation::DimensionMismatch {
                    what: what.0.into(),
                    expected: n,
                    found: what.1,
                });
            }
        }
        for (r, s) in self.sigma.iter().enumerate() {
            if !(*s > 0.0 && s.is_finite()) {
                report.push(Violation::NonPositiveSigma { r, sigma: *s });
            }
        }
        if !(self.rate_cutoff > 0.0 && self.rate_cutoff.is_finite()) {
            report.push(Violation::NonPositiveCutoff {
                value: self.rate_cutoff,
            });
        }
        self.validate_velocity(&mut report);
        self.validate_frag(&mut report);
        self.validate_rate(&mut report);
        report
    }

    fn validate_velocity(&self, report: &mut ValidationReport) {
        for (r, v) in self.velocity.iter().enumerate() {
            match v {
                VelocityField::Zero => {}
                VelocityField::Constant(c) => {
                    if c.iter().any(|x| !x.is_finite()) {
                        report.push(Violation::VelocityNotFinite { r });
                    }
                }
                VelocityField::Rotational { center, omega } => {
                    if self.dim != 2 {
                        report.push(Violation::RotationalNeeds2d { r });
                    }
                    if !(omega.is_finite() && center.iter().all(|c| c.is_finite())) {
                        report.push(Violation::VelocityNotFinite { r });
                    }
                }
                VelocityField::GridSampled(g) => {
                    if g.grid.dim != self.dim || g.components.len() != self.dim {
                        report.push(Violation::DimensionMismatch {
                            what: format!("velocity grid of species {}", r + 1),
                            expected: self.dim,
                            found: g.components.len(),
                        });
                    }
                    if g.components.iter().flatten().any(|c| !c.is_finite()) {
                        report.push(Violation::VelocityNotFinite { r });
                    }
                }
            }
        }
    }

    fn validate_frag(&self, report: &mut ValidationReport) {
        let n = self.species();
        if self.frag.species() != n {
            report.push(Violation::FragmentShape {
                expected: n,
                found: self.frag.species(),
            });
            return;
        }
        for r in 0..n {
            for q in 0..n {
                let got: u64 = (0..n)
                    .map(|l| self.masses[l] as u64 * self.frag.e(r, q, l) as u64)
                    .sum();
                if got != self.masses[r] as u64 {
                    report.push(Violation::FragmentMass {
                        r,
                        q,
                        got,
                        expected: self.masses[r] as u64,
                    });
                }
            }
        }
    }

    fn validate_rate(&self, report: &mut ValidationReport) {
        let n = self.species();
        match &self.rate {
            CollisionRateSpec::ConstantMatrix(m) => {
                if m.len() != n || m.iter().any(|row| row.len() != n) {
                    report.push(Violation::RateShape {
                        expected: n,
                        found: m.len(),
                    });
                    return;
                }
                for r in 0..n {
                    for q in 0..n {
                        let v = m[r][q];
                        if !v.is_finite() {
                            report.push(Violation::RateNotFinite { r, q });
                        } else if v < 0.0 {
                            report.push(Violation::RateNegative { r, q, value: v });
                        }
                        if q > r && m[r][q] != m[q][r] {
                            report.push(Violation::RateAsymmetric { r, q });
                        }
                    }
                }
            }
            CollisionRateSpec::CrossSection {
                radii,
                speed_law,
                scale,
            } => {
                if radii.len() != n {
                    report.push(Violation::RateShape {
                        expected: n,
                        found: radii.len(),
                    });
                }
                for (r, l) in radii.iter().enumerate() {
                    if !(*l > 0.0 && l.is_finite()) {
                        report.push(Violation::BadRadius { r, value: *l });
                    }
                }
                if !(scale.is_finite() && *scale >= 0.0) {
                    report.push(Violation::BadSpeedLaw(format!("scale {scale} must be >= 0")));
                }
                speed_law.validate(report);
            }
        }
    }

    /// Binary shattering: species 1 (mass 1) is inert under collisions and
    /// species 2 (mass 2) breaks into two monomers on every collision.
    pub fn binary_shattering(dim: usize, sigma: [f64; 2], rate: f64, rate_cutoff: f64) -> Self {
        let frag = FragTable::from_entries(
            2,
            &[(0, 0, 0, 1), (0, 1, 0, 1), (1, 0, 0, 2), (1, 1, 0, 2)],
        )
        .expect("static table");
        Self {
            dim,
            masses: vec![1, 2],
            sigma: sigma.to_vec(),
            velocity: vec![VelocityField::Zero, VelocityField::Zero],
            rate: CollisionRateSpec::uniform(2, rate),
            frag,
            rate_cutoff,
        }
    }
}
