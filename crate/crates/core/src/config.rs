//! Scenario files.
//!
//! A scenario is a JSON document (schema version 1) describing the species,
//! the scaling exponents, initial data and numerical settings. Species are
//! numbered from 1 in the file and from 0 everywhere else.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::grid::{min_image, Grid, GridField};
use crate::kernels::{check_resolution, FieldMethod, ScalingParams};
use crate::material::{CollisionRateSpec, FragTable, SpeciesTable, SpeedLaw, VelocityField};
use crate::particles::StepConfig;
use crate::pde::{stable_dt, PdeConfig, ReactionScheme};
use crate::{Error, Result, ValidationReport, Violation};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub name: String,
    pub dim: usize,
    pub length: f64,
    pub species: Vec<SpeciesSpec>,
    pub rate: RateSpec,
    /// `[r, q, l, count]` with 1-based species indices.
    pub fragmentation: Vec<[u32; 4]>,
    pub rate_cutoff: f64,
    pub scaling: ScalingSpec,
    pub particles: ParticleSpec,
    pub pde: PdeSpec,
    pub t_end: f64,
    /// Number of equal intervals between snapshots; `t = 0` is always included.
    pub snapshots: usize,
    pub study: StudySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesSpec {
    pub mass: u32,
    pub sigma: f64,
    #[serde(default)]
    pub velocity: VelocitySpec,
    pub initial: InitialSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocitySpec {
    #[default]
    Zero,
    Constant { value: Vec<f64> },
    Rotational { center: [f64; 2], omega: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Zero,
    Uniform { integral: f64 },
    /// Periodised isotropic Gaussian of standard deviation `width`.
    Gaussian {
        center: Vec<f64>,
        width: f64,
        integral: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateSpec {
    Constant { matrix: Vec<Vec<f64>> },
    CrossSection {
        radii: Vec<f64>,
        speed_law: SpeedLawSpec,
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpeedLawSpec {
    Constant { value: f64 },
    Linear { intercept: f64, slope: f64 },
    Table { speeds: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSpec {
    pub beta: f64,
    pub beta_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldMethodSpec {
    #[default]
    Auto,
    CellList,
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSpec {
    pub dt: f64,
    #[serde(default = "default_max_event_prob")]
    pub max_event_prob: f64,
    #[serde(default)]
    pub field_method: FieldMethodSpec,
}

fn default_max_event_prob() -> f64 {
    StepConfig::DEFAULT_MAX_EVENT_PROB
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeSpec {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSpec {
    pub nodes: usize,
    /// Fraction of the explicit stability limit used as the step.
    #[serde(default = "default_cfl_fraction")]
    pub cfl_fraction: f64,
    #[serde(default)]
    pub scheme: SchemeSpec,
}

fn default_cfl_fraction() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub n_values: Vec<u64>,
    pub replicas: usize,
    pub seed: u64,
    #[serde(default = "default_clip_threshold")]
    pub clip_threshold: f64,
}

fn default_clip_threshold() -> f64 {
    1e-4
}

/// A validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub table: SpeciesTable,
    pub beta: f64,
    pub beta_hat: f64,
    pub grid: Grid,
    /// Initial densities with `sum_r m_r <s_r, 1> = 1`.
    pub initial: GridField,
    pub step: StepConfig,
    pub pde: PdeConfig,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    pub n_values: Vec<u64>,
    pub replicas: usize,
    pub seed: u64,
    pub clip_threshold: f64,
}

impl Scenario {
    pub fn scaling(&self, n: u64) -> ScalingParams {
        ScalingParams::new(self.table.dim, self.beta, self.beta_hat, n)
    }

    pub fn species(&self) -> usize {
        self.table.species()
    }
}

impl ScenarioFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Builds the species table exactly as written, before validation.
    pub fn species_table(&self) -> Result<SpeciesTable> {
        let n = self.species.len();
        let mut entries = Vec::with_capacity(self.fragmentation.len());
        for [r, q, l, count] in &self.fragmentation {
            let idx = |i: u32| -> Result<usize> {
                if i == 0 || i as usize > n {
                    return Err(Error::SpeciesIndex {
                        index: i as usize,
                        count: n,
                    });
                }
                Ok(i as usize - 1)
            };
            entries.push((idx(*r)?, idx(*q)?, idx(*l)?, *count));
        }
        let frag = FragTable::from_entries(n, &entries)?;
        let velocity = self
            .species
            .iter()
            .map(|s| match &s.velocity {
                VelocitySpec::Zero => VelocityField::Zero,
                VelocitySpec::Constant { value } => {
                    let mut v = [0.0; crate::MAX_DIM];
                    for (a, c) in value.iter().take(crate::MAX_DIM).enumerate() {
                        v[a] = *c;
                    }
                    VelocityField::Constant(v)
                }
                VelocitySpec::Rotational { center, omega } => VelocityField::Rotational {
                    center: *center,
                    omega: *omega,
                },
            })
            .collect();
        let rate = match &self.rate {
            RateSpec::Constant { matrix } => CollisionRateSpec::ConstantMatrix(matrix.clone()),
            RateSpec::CrossSection {
                radii,
                speed_law,
                scale,
            } => CollisionRateSpec::CrossSection {
                radii: radii.clone(),
                speed_law: match speed_law {
                    SpeedLawSpec::Constant { value } => SpeedLaw::Constant(*value),
                    SpeedLawSpec::Linear { intercept, slope } => SpeedLaw::Linear {
                        intercept: *intercept,
                        slope: *slope,
                    },
                    SpeedLawSpec::Table { speeds, values } => SpeedLaw::Table {
                        speeds: speeds.clone(),
                        values: values.clone(),
                    },
                },
                scale: *scale,
            },
        };
        Ok(SpeciesTable {
            dim: self.dim,
            masses: self.species.iter().map(|s| s.mass).collect(),
            sigma: self.species.iter().map(|s| s.sigma).collect(),
            velocity,
            rate,
            frag,
            rate_cutoff: self.rate_cutoff,
        })
    }

    /// Collects every problem with the file without stopping at the first.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let mut table = match self.species_table() {
            Ok(t) => t,
            Err(e) => {
                report.push(Violation::Other(e.to_string()));
                return report;
            }
        };
        report.merge(table.validate());
        report.merge(crate::kernels::validate_scaling(
            self.dim,
            self.scaling.beta,
            self.scaling.beta_hat,
        ));
        let mut other = |msg: String| report.push(Violation::Other(msg));
        if !(self.length > 0.0 && self.length.is_finite()) {
            other(format!("box length {} must be positive", self.length));
        }
        for (r, s) in self.species.iter().enumerate() {
            match &s.velocity {
                VelocitySpec::Constant { value } if value.len() != self.dim => other(format!(
                    "species {}: velocity has {} components, dimension is {}",
                    r + 1,
                    value.len(),
                    self.dim
                )),
                _ => {}
            }
            match &s.initial {
                InitialSpec::Zero => {}
                InitialSpec::Uniform { integral } => {
                    if !(*integral >= 0.0 && integral.is_finite()) {
                        other(format!("species {}: initial integral must be >= 0", r + 1));
                    }
                }
                InitialSpec::Gaussian {
                    center,
                    width,
                    integral,
                } => {
                    if center.len() != self.dim {
                        other(format!(
                            "species {}: initial centre has {} components, dimension is {}",
                            r + 1,
                            center.len(),
                            self.dim
                        ));
                    }
                    if !(*width > 0.0 && width.is_finite()) || !(*integral >= 0.0 && integral.is_finite()) {
                        other(format!(
                            "species {}: initial bump needs width > 0 and integral >= 0",
                            r + 1
                        ));
                    }
                }
            }
        }
        if self.species.iter().all(|s| match s.initial {
            InitialSpec::Zero => true,
            InitialSpec::Uniform { integral } | InitialSpec::Gaussian { integral, .. } => {
                integral == 0.0
            }
        }) {
            other("initial density is identically zero".into());
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            other(format!("end time {} must be >= 0", self.t_end));
        }
        if self.snapshots == 0 {
            other("need at least one snapshot interval".into());
        }
        if self.particles.dt <= 0.0 {
            other(format!("particle step {} must be positive", self.particles.dt));
        } else if let Err(e) =
            StepConfig::with_cap(self.particles.dt, self.particles.max_event_prob, &table)
        {
            other(e.to_string());
        }
        if !(self.pde.cfl_fraction > 0.0 && self.pde.cfl_fraction <= 1.0) {
            other(format!(
                "PDE CFL fraction {} must be in (0, 1]",
                self.pde.cfl_fraction
            ));
        }
        let n = &self.study.n_values;
        if n.is_empty() {
            other("study needs at least one N".into());
        }
        if n.windows(2).any(|w| w[1] <= w[0]) {
            other("study N values must be strictly increasing".into());
        }
        if n.first() == Some(&0) {
            other("study N values must be positive".into());
        }
        if self.study.replicas == 0 {
            other("study needs at least one replica".into());
        }
        if let (Ok(grid), Some(&n_max)) = (Grid::new(self.dim, self.pde.nodes, self.length), n.last()) {
            let kernel = ScalingParams::new(self.dim, self.scaling.beta, self.scaling.beta_hat, n_max)
                .smoothing_kernel();
            if let Err(e) = check_resolution(&kernel, &grid) {
                other(format!("PDE grid too coarse for the largest N: {e}"));
            }
        } else if Grid::new(self.dim, self.pde.nodes, self.length).is_err() {
            other(format!("invalid PDE grid ({} nodes)", self.pde.nodes));
        }
        report
    }

    /// Validates and assembles the runnable scenario.
    pub fn build(&self) -> Result<Scenario> {
        self.validate().into_result()?;
        let mut table = self.species_table()?;
        table.validate();
        let grid = Grid::new(self.dim, self.pde.nodes, self.length)?;
        let initial = self.initial_field(grid)?;
        let step = StepConfig::with_cap(self.particles.dt, self.particles.max_event_prob, &table)?
            .with_field_method(match self.particles.field_method {
                FieldMethodSpec::Auto => FieldMethod::Auto,
                FieldMethodSpec::CellList => FieldMethod::CellList,
                FieldMethodSpec::Spectral => FieldMethod::Spectral,
            });
        let pde = PdeConfig::new(self.pde.cfl_fraction * stable_dt(&table, &grid)).with_scheme(
            match self.pde.scheme {
                SchemeSpec::Rk4 => ReactionScheme::Rk4,
                SchemeSpec::Euler => ReactionScheme::Euler,
            },
        );
        let pde = if pde.dt.is_finite() {
            pde
        } else {
            // no transport at all; any step is stable
            PdeConfig::new(self.particles.dt).with_scheme(pde.scheme)
        };
        let snapshot_times = (0..=self.snapshots)
            .map(|i| self.t_end * i as f64 / self.snapshots as f64)
            .collect();
        Ok(Scenario {
            name: self.name.clone(),
            table,
            beta: self.scaling.beta,
            beta_hat: self.scaling.beta_hat,
            grid,
            initial,
            step,
            pde,
            t_end: self.t_end,
            snapshot_times,
            n_values: self.study.n_values.clone(),
            replicas: self.study.replicas,
            seed: self.study.seed,
            clip_threshold: self.study.clip_threshold,
        })
    }

    /// Samples the initial densities and rescales them to unit total mass.
    fn initial_field(&self, grid: Grid) -> Result<GridField> {
        let mut field = GridField::zeros(grid, self.species.len());
        for (r, s) in self.species.iter().enumerate() {
            let vals = &mut field.values[r];
            match &s.initial {
                InitialSpec::Zero => continue,
                InitialSpec::Uniform { .. } => vals.iter_mut().for_each(|v| *v = 1.0),
                InitialSpec::Gaussian { center, width, .. } => {
                    for (i, v) in vals.iter_mut().enumerate() {
                        let x = grid.coord(i);
                        let sq: f64 = center
                            .iter()
                            .enumerate()
                            .map(|(a, c)| min_image(x[a] - c, grid.length).powi(2))
                            .sum();
                        *v = (-sq / (2.0 * width * width)).exp();
                    }
                }
            }
            let target = match s.initial {
                InitialSpec::Zero => 0.0,
                InitialSpec::Uniform { integral } | InitialSpec::Gaussian { integral, .. } => {
                    integral
                }
            };
            let have = field.integral(r);
            if have > 0.0 {
                field.values[r].iter_mut().for_each(|v| *v *= target / have);
            }
        }
        let masses: Vec<u32> = self.species.iter().map(|s| s.mass).collect();
        let total = field.mass(&masses);
        if total <= 0.0 {
            return Err(Error::ZeroInitialDensity);
        }
        field.values.iter_mut().flatten().for_each(|v| *v /= total);
        Ok(field)
    }
}

fn shattering_species(initial: [InitialSpec; 2], sigma: [f64; 2]) -> Vec<SpeciesSpec> {
    let [a, b] = initial;
    vec![
        SpeciesSpec {
            mass: 1,
            sigma: sigma[0],
            velocity: VelocitySpec::Zero,
            initial: a,
        },
        SpeciesSpec {
            mass: 2,
            sigma: sigma[1],
            velocity: VelocitySpec::Zero,
            initial: b,
        },
    ]
}

/// Binary shattering: a mass-2 particle hitting anything breaks into two
/// monomers; monomers are unchanged.
pub const SHATTERING_ENTRIES: [[u32; 4]; 4] = [[1, 1, 1, 1], [1, 2, 1, 1], [2, 1, 1, 2], [2, 2, 1, 2]];

impl ScenarioFile {
    /// Binary shattering in d = 1 on `[0, 10)` with a Gaussian bump of dimers.
    pub fn default_shattering() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: "default-shattering".into(),
            dim: 1,
            length: 10.0,
            species: shattering_species(
                [
                    InitialSpec::Zero,
                    InitialSpec::Gaussian {
                        center: vec![5.0],
                        width: 0.5,
                        integral: 0.5,
                    },
                ],
                [1.0, 0.5],
            ),
            rate: RateSpec::Constant {
                matrix: vec![vec![1.0; 2]; 2],
            },
            fragmentation: SHATTERING_ENTRIES.to_vec(),
            rate_cutoff: 5.0,
            scaling: ScalingSpec {
                beta: 0.1,
                beta_hat: 0.3,
            },
            particles: ParticleSpec {
                dt: 1e-3,
                max_event_prob: StepConfig::DEFAULT_MAX_EVENT_PROB,
                field_method: FieldMethodSpec::Auto,
            },
            pde: PdeSpec {
                nodes: 1024,
                cfl_fraction: 0.5,
                scheme: SchemeSpec::Rk4,
            },
            t_end: 1.0,
            snapshots: 20,
            study: StudySpec {
                n_values: vec![1000, 4000, 16000],
                replicas: 30,
                seed: 20_240_601,
                clip_threshold: 1e-4,
            },
        }
    }

    /// Binary shattering from uniform dimers on the unit interval, so the
    /// densities follow the homogeneous ODE.
    pub fn homogeneous_shattering() -> Self {
        Self {
            name: "homogeneous-shattering".into(),
            length: 1.0,
            species: shattering_species(
                [InitialSpec::Zero, InitialSpec::Uniform { integral: 0.5 }],
                [1.0, 0.5],
            ),
            pde: PdeSpec {
                nodes: 128,
                cfl_fraction: 0.5,
                scheme: SchemeSpec::Rk4,
            },
            study: StudySpec {
                n_values: vec![10_000],
                replicas: 30,
                seed: 20_240_602,
                clip_threshold: 1e-4,
            },
            ..Self::default_shattering()
        }
    }

    /// One species of unit mass diffusing from a Gaussian bump, no reactions.
    pub fn pure_diffusion() -> Self {
        Self {
            name: "pure-diffusion".into(),
            species: vec![SpeciesSpec {
                mass: 1,
                sigma: 1.0,
                velocity: VelocitySpec::Zero,
                initial: InitialSpec::Gaussian {
                    center: vec![5.0],
                    width: 1.0,
                    integral: 1.0,
                },
            }],
            rate: RateSpec::Constant {
                matrix: vec![vec![0.0]],
            },
            fragmentation: vec![[1, 1, 1, 1]],
            rate_cutoff: 1.0,
            study: StudySpec {
                n_values: vec![1000, 4000],
                replicas: 100,
                seed: 20_240_603,
                clip_threshold: 1e-4,
            },
            ..Self::default_shattering()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default-shattering" | "default" => Some(Self::default_shattering()),
            "homogeneous-shattering" | "homogeneous" => Some(Self::homogeneous_shattering()),
            "pure-diffusion" | "diffusion" => Some(Self::pure_diffusion()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_build_and_roundtrip() {
        for file in [
            ScenarioFile::default_shattering(),
            ScenarioFile::homogeneous_shattering(),
            ScenarioFile::pure_diffusion(),
        ] {
            let report = file.validate();
            assert!(report.is_valid(), "{}: {report}", file.name);
            let back = ScenarioFile::from_json(&file.to_json()).unwrap();
            assert_eq!(back, file);
            let sc = file.build().unwrap();
            assert!((sc.initial.mass(&sc.table.masses) - 1.0).abs() < 1e-12);
            assert_eq!(sc.snapshot_times.len(), file.snapshots + 1);
        }
    }

    #[test]
    fn default_tables_match_expected_coefficients() {
        let sc = ScenarioFile::default_shattering().build().unwrap();
        assert_eq!(sc.table.frag.e_hat(1, 0, 0), 3);
        assert_eq!(sc.table.frag.e_hat(1, 1, 0), 4);
        assert!((sc.initial.integral(1) - 0.5).abs() < 1e-12);
        assert_eq!(sc.initial.integral(0), 0.0);
    }

    #[test]
    fn scaling_violation_is_reported() {
        let mut f = ScenarioFile::default_shattering();
        f.scaling.beta = 0.2;
        let report = f.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::InteractionExponent { .. })));
        assert!(f.build().is_err());
    }

    #[test]
    fn bad_fragment_index_and_version_are_errors() {
        let mut f = ScenarioFile::default_shattering();
        f.fragmentation.push([3, 1, 1, 1]);
        assert!(!f.validate().is_valid());
        let mut g = ScenarioFile::default_shattering();
        g.schema_version = 2;
        assert!(ScenarioFile::from_json(&g.to_json()).is_err());
        assert!(ScenarioFile::from_json("{\"schema_version\": 1}").is_err());
    }

    #[test]
    fn study_shape_is_checked() {
        let mut f = ScenarioFile::default_shattering();
        f.study.n_values = vec![4000, 1000];
        f.study.replicas = 0;
        assert_eq!(f.validate().violations.len(), 2);
    }

    #[test]
    fn coarse_pde_grid_is_rejected() {
        let mut f = ScenarioFile::default_shattering();
        f.pde.nodes = 128;
        assert!(!f.validate().is_valid());
    }
}
