//! Orchestration: single runs, replica sweeps over `N`, and the regression
//! suite.
//!
//! The macroscopic trajectory of a scenario is computed once and shared by
//! every replica. Replica `k` at the `i`-th system size draws from the master
//! seed's ChaCha stream `(i << 32) | k`, so any row can be rerun on its own.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Scenario, ScenarioFile};
use crate::grid::{Grid, GridField};
use crate::io::{write_grid_csv, write_particles_csv, write_report_csv, ReportRow};
use crate::kernels::{
    convolve_empirical_naive, CellList, convolve_grid, gradient_norm_sq,
    least_squares_slope, Kernel,
};
use crate::material::{CollisionRateSpec, FragTable, SpeciesTable, VelocityField};
use crate::observables::{
    bound_violations, fit_bound_constant, fluctuation_probe, l2_distance_sq, mass_report,
    mean_and_variance, metric_d, BoundPoint, MassReport, TestDictionary,
};
use crate::particles::{run, sample_initial_state, ParticleSnapshot, StepConfig};
use crate::pde::{
    ode_trajectory, periodic_gaussian_1d, solve, PdeConfig, PdeOperator, PdeTrajectory,
    ReactionScheme,
};
use crate::{Error, Result};

/// Random stream of one replica.
pub fn replica_rng(master_seed: u64, n_index: usize, replica: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((n_index as u64) << 32) | replica as u64);
    rng
}

/// Samples an initial state of size `n` from the scenario's initial data and
/// runs it to the end time, returning the snapshots.
pub fn simulate(scenario: &Scenario, n: u64, rng: ChaCha8Rng) -> Result<Vec<ParticleSnapshot>> {
    let mut state = sample_initial_state(&scenario.table, &scenario.initial, n, rng)?;
    let kernel = scenario.scaling(state.total_atoms()).interaction_kernel();
    run(
        &mut state,
        &scenario.table,
        &kernel,
        &scenario.step,
        scenario.t_end,
        &scenario.snapshot_times,
    )
}

pub fn solve_reference(scenario: &Scenario) -> Result<PdeTrajectory> {
    solve(
        &scenario.initial,
        &scenario.table,
        &scenario.pde,
        &scenario.snapshot_times,
    )
}

/// Observables of one snapshot against the reference field at the same time.
pub fn distance_row(
    scenario: &Scenario,
    snapshot: &ParticleSnapshot,
    reference: &GridField,
    dict: &TestDictionary,
    n: u64,
    replica: usize,
) -> Result<ReportRow> {
    let smoothing = scenario.scaling(snapshot.total_atoms).smoothing_kernel();
    let d2 = l2_distance_sq(snapshot, reference, &smoothing)?;
    let d_est = metric_d(snapshot, reference, dict).total();
    let mass = mass_report(snapshot);
    if !mass.ok() {
        return Err(Error::Invariant(format!("mass report {mass:?}")));
    }
    Ok(ReportRow {
        n,
        replica,
        t: snapshot.t,
        d2,
        d_est,
        mass: mass.total_atoms,
        clip_frac: snapshot.counters.clip_fraction(),
    })
}

/// Everything one replica produces.
#[derive(Debug, Clone)]
pub struct ReplicaOutcome {
    pub n: u64,
    pub replica: usize,
    pub rows: Vec<ReportRow>,
    pub final_mass: MassReport,
    pub wall_seconds: f64,
}

fn run_replica(
    scenario: &Scenario,
    reference: &PdeTrajectory,
    dict: &TestDictionary,
    n_index: usize,
    replica: usize,
) -> Result<ReplicaOutcome> {
    let n = scenario.n_values[n_index];
    let start = Instant::now();
    let snaps = simulate(scenario, n, replica_rng(scenario.seed, n_index, replica))?;
    let rows = snaps
        .iter()
        .zip(&reference.fields)
        .map(|(s, f)| distance_row(scenario, s, f, dict, n, replica))
        .collect::<Result<Vec<_>>>()?;
    let final_mass = mass_report(snaps.last().expect("at least one snapshot"));
    Ok(ReplicaOutcome {
        n,
        replica,
        rows,
        final_mass,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Aggregate over the replicas of one system size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: u64,
    pub replicas: usize,
    pub alpha_hat: f64,
    /// Mean over replicas of `max_t sum_r ||d_r(t)||_2^2`.
    pub mean_max_d2: f64,
    /// Standard error of the mean; `None` with a single replica.
    pub se_max_d2: Option<f64>,
    /// As `mean_max_d2` using only every other snapshot. The gap to
    /// `mean_max_d2` shows how sensitive the sup is to snapshot cadence.
    pub mean_max_d2_coarse: f64,
    /// Mean over replicas of `max_t D_est(t)`.
    pub mean_d_est: f64,
    pub clip_frac: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub scenario: String,
    pub rows: Vec<ConvergenceRow>,
    /// `C` in `D_est <= C (1/alpha_hat + sum_r ||d_r||_2)`, fitted on the
    /// smallest `N`.
    pub bound_constant: f64,
    pub bound_violations: usize,
    /// Every row's clip fraction below the scenario threshold.
    pub clip_healthy: bool,
}

impl ConvergenceReport {
    /// Mean distance decreases between consecutive `N` by more than one
    /// pooled standard error.
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| {
            let pooled = (w[0].se_max_d2.unwrap_or(0.0).powi(2)
                + w[1].se_max_d2.unwrap_or(0.0).powi(2))
            .sqrt();
            w[0].mean_max_d2 - w[1].mean_max_d2 > pooled
        })
    }
}

fn aggregate(scenario: &Scenario, outcomes: &[ReplicaOutcome]) -> ConvergenceReport {
    let mut rows = Vec::new();
    for &n in &scenario.n_values {
        let group: Vec<&ReplicaOutcome> = outcomes.iter().filter(|o| o.n == n).collect();
        if group.is_empty() {
            continue;
        }
        let max_d2_every = |stride: usize| -> Vec<f64> {
            group
                .iter()
                .map(|o| {
                    o.rows
                        .iter()
                        .step_by(stride)
                        .map(|r| r.d2.iter().sum::<f64>())
                        .fold(0.0, f64::max)
                })
                .collect()
        };
        let max_d2 = max_d2_every(1);
        let max_d: Vec<f64> = group
            .iter()
            .map(|o| o.rows.iter().map(|r| r.d_est).fold(0.0, f64::max))
            .collect();
        let (mean, var) = mean_and_variance(&max_d2);
        rows.push(ConvergenceRow {
            n,
            replicas: group.len(),
            alpha_hat: scenario.scaling(n).alpha_hat(),
            mean_max_d2: mean,
            se_max_d2: (group.len() >= 2).then(|| (var / group.len() as f64).sqrt()),
            mean_max_d2_coarse: mean_and_variance(&max_d2_every(2)).0,
            mean_d_est: mean_and_variance(&max_d).0,
            clip_frac: group
                .iter()
                .filter_map(|o| o.rows.last().map(|r| r.clip_frac))
                .fold(0.0, f64::max),
            wall_seconds: group.iter().map(|o| o.wall_seconds).sum(),
        });
    }
    let points = |o: &ReplicaOutcome| -> Vec<BoundPoint> {
        let alpha_hat = scenario.scaling(o.n).alpha_hat();
        o.rows
            .iter()
            .map(|r| BoundPoint {
                alpha_hat,
                d_est: r.d_est,
                l2: r.d2.iter().map(|v| v.sqrt()).sum(),
            })
            .collect()
    };
    let smallest = scenario.n_values.first().copied().unwrap_or(0);
    let calibration: Vec<BoundPoint> = outcomes
        .iter()
        .filter(|o| o.n == smallest)
        .flat_map(points)
        .collect();
    let all: Vec<BoundPoint> = outcomes.iter().flat_map(points).collect();
    let c = fit_bound_constant(&calibration);
    ConvergenceReport {
        scenario: scenario.name.clone(),
        clip_healthy: rows.iter().all(|r| r.clip_frac < scenario.clip_threshold),
        rows,
        bound_constant: c,
        bound_violations: bound_violations(&all, c),
    }
}

/// Settings that do not change the numbers, only where and how they are
/// produced.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub out_dir: Option<PathBuf>,
    /// Write particle dumps for every snapshot.
    pub dumps: bool,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub report: ConvergenceReport,
    pub rows: Vec<ReportRow>,
    pub outcomes: Vec<ReplicaOutcome>,
    pub reference: PdeTrajectory,
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn unix_time() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Serialize)]
struct Summary<'a> {
    scenario: &'a str,
    generated_unix: u64,
    master_seed: u64,
    replica_streams: &'static str,
    n_values: &'a [u64],
    replicas: usize,
    species: usize,
    d_est_note: &'static str,
    pde_steps: u64,
    pde_clipped_mass: f64,
    report: Option<&'a ConvergenceReport>,
    error: Option<String>,
}

fn write_outputs(
    dir: &Path,
    scenario: &Scenario,
    rows: &[ReportRow],
    reference: Option<&PdeTrajectory>,
    report: Option<&ConvergenceReport>,
    error: Option<String>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_report_csv(
        BufWriter::new(File::create(dir.join("report.csv"))?),
        scenario.species(),
        rows,
    )?;
    let summary = Summary {
        scenario: &scenario.name,
        generated_unix: unix_time(),
        master_seed: scenario.seed,
        replica_streams: "ChaCha8 seeded from master_seed, stream (n_index << 32) | replica",
        n_values: &scenario.n_values,
        replicas: scenario.replicas,
        species: scenario.species(),
        d_est_note: "D_est is a lower bound: maximum over a finite test-function dictionary",
        pde_steps: reference.map_or(0, |r| r.steps),
        pde_clipped_mass: reference.map_or(0.0, |r| r.clipped_mass),
        report,
        error,
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    if let Some(traj) = reference {
        if let Some(last) = traj.fields.last() {
            write_grid_csv(BufWriter::new(File::create(dir.join("pde_final.csv"))?), last)?;
        }
    }
    Ok(())
}

fn sort_rows(rows: &mut [ReportRow]) {
    rows.sort_by(|a, b| {
        (a.n, a.replica)
            .cmp(&(b.n, b.replica))
            .then(a.t.total_cmp(&b.t))
    });
}

/// Runs every replica at every `N` against one shared reference trajectory.
/// With an output directory, writes `report.csv` and `summary.json`; on
/// failure both are still written with whatever finished.
pub fn run_study(scenario: &Scenario, opts: &RunOptions) -> Result<StudyResult> {
    let reference = match solve_reference(scenario) {
        Ok(r) => r,
        Err(e) => {
            if let Some(dir) = &opts.out_dir {
                write_outputs(dir, scenario, &[], None, None, Some(e.to_string()))?;
            }
            return Err(e);
        }
    };
    let dict = TestDictionary::standard(scenario.table.dim, scenario.grid.length)?;
    let jobs: Vec<(usize, usize)> = (0..scenario.n_values.len())
        .flat_map(|i| (0..scenario.replicas).map(move |k| (i, k)))
        .collect();
    let results: Vec<Result<ReplicaOutcome>> = pool(opts.workers)?.install(|| {
        jobs.par_iter()
            .map(|&(i, k)| run_replica(scenario, &reference, &dict, i, k))
            .collect()
    });
    let mut outcomes = Vec::with_capacity(results.len());
    let mut first_error = None;
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let mut rows: Vec<ReportRow> = outcomes.iter().flat_map(|o| o.rows.clone()).collect();
    sort_rows(&mut rows);
    let report = aggregate(scenario, &outcomes);
    if let Some(dir) = &opts.out_dir {
        write_outputs(
            dir,
            scenario,
            &rows,
            Some(&reference),
            Some(&report),
            first_error.as_ref().map(|e| e.to_string()),
        )?;
    }
    if let Some(e) = first_error {
        return Err(e);
    }
    Ok(StudyResult {
        report,
        rows,
        outcomes,
        reference,
    })
}

#[derive(Debug, Clone)]
pub struct SingleRun {
    pub rows: Vec<ReportRow>,
    pub snapshots: Vec<ParticleSnapshot>,
    pub reference: PdeTrajectory,
    pub final_mass: MassReport,
}

/// One replica at size `n` with full artifacts: report rows, a species
/// trace (`trace.csv`: particle fractions `N_r/N` next to the reference
/// integrals), and optionally one particle dump per snapshot.
pub fn run_single(scenario: &Scenario, n: u64, opts: &RunOptions) -> Result<SingleRun> {
    let reference = solve_reference(scenario)?;
    let dict = TestDictionary::standard(scenario.table.dim, scenario.grid.length)?;
    let snapshots = pool(opts.workers)?.install(|| simulate(scenario, n, replica_rng(scenario.seed, 0, 0)))?;
    let rows = snapshots
        .iter()
        .zip(&reference.fields)
        .map(|(s, f)| distance_row(scenario, s, f, &dict, n, 0))
        .collect::<Result<Vec<_>>>()?;
    let final_mass = mass_report(snapshots.last().expect("at least one snapshot"));
    if let Some(dir) = &opts.out_dir {
        write_outputs(dir, scenario, &rows, Some(&reference), None, None)?;
        let mut w = csv::Writer::from_path(dir.join("trace.csv"))?;
        let species = scenario.species();
        let mut header = vec!["t".to_string()];
        header.extend((1..=species).map(|r| format!("particles_{r}")));
        header.extend((1..=species).map(|r| format!("reference_{r}")));
        header.push("mass".into());
        w.write_record(&header)?;
        for (s, f) in snapshots.iter().zip(&reference.fields) {
            let mut rec = vec![s.t.to_string()];
            rec.extend(s.counts().iter().map(|&c| (c as f64 * s.weight()).to_string()));
            rec.extend((0..species).map(|r| f.integral(r).to_string()));
            rec.push(mass_report(s).total_atoms.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        if opts.dumps {
            for (i, s) in snapshots.iter().enumerate() {
                let path = dir.join(format!("particles_{i:04}.csv"));
                write_particles_csv(BufWriter::new(File::create(path)?), s)?;
            }
        }
    }
    Ok(SingleRun {
        rows,
        snapshots,
        reference,
        final_mass,
    })
}

/// Outcome of one regression check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

/// The individual checks of the regression suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionCheck {
    KernelNormalization,
    KernelDecay,
    PdeDiffusionOrder,
    PdeAdvectionOrder,
    ReactionMass,
    PdeOdeEquivalence,
    CellListExactness,
    Conservation,
    DtHalving,
    FluctuationScaling,
}

impl RegressionCheck {
    pub const ALL: [RegressionCheck; 10] = [
        RegressionCheck::KernelNormalization,
        RegressionCheck::KernelDecay,
        RegressionCheck::PdeDiffusionOrder,
        RegressionCheck::PdeAdvectionOrder,
        RegressionCheck::ReactionMass,
        RegressionCheck::PdeOdeEquivalence,
        RegressionCheck::CellListExactness,
        RegressionCheck::Conservation,
        RegressionCheck::DtHalving,
        RegressionCheck::FluctuationScaling,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSuite {
    pub checks: Vec<RegressionCheck>,
    /// Relative change of kernel mass injected into the kernel checks.
    pub kernel_perturbation: f64,
    pub seed: u64,
}

impl Default for RegressionSuite {
    fn default() -> Self {
        Self {
            checks: RegressionCheck::ALL.to_vec(),
            kernel_perturbation: 0.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionReport {
    pub results: Vec<CheckResult>,
    pub warnings: Vec<String>,
}

impl RegressionReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }
}

pub fn run_regressions(suite: &RegressionSuite) -> RegressionReport {
    let mut warnings = Vec::new();
    if suite.checks.is_empty() {
        warnings.push("no regression checks selected; vacuous pass".into());
    }
    let results = suite
        .checks
        .iter()
        .map(|&c| {
            let name = serde_json::to_value(c)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default();
            match run_check(c, suite) {
                Ok(r) => r,
                Err(e) => CheckResult::new(&name, false, format!("error: {e}")),
            }
        })
        .collect();
    RegressionReport { results, warnings }
}

fn run_check(check: RegressionCheck, suite: &RegressionSuite) -> Result<CheckResult> {
    let eps = suite.kernel_perturbation;
    Ok(match check {
        RegressionCheck::KernelNormalization => {
            let mut worst: f64 = 0.0;
            for alpha in [2.0, 4.0, 8.0] {
                let k = Kernel::new(1, alpha).with_mass_perturbation(eps);
                worst = worst.max((crate::kernels::kernel_mass(&k, 20.0, 4096) - 1.0).abs());
            }
            CheckResult::new(
                "kernel_normalization",
                worst < 1e-8,
                format!("max |mass - 1| = {worst:.3e}"),
            )
        }
        RegressionCheck::KernelDecay => {
            let lemma = kernel_lemma_check(eps)?;
            CheckResult::new(
                "kernel_decay",
                lemma.slope <= -1.7 && lemma.bound_holds,
                format!(
                    "slope {:.3} (need <= -1.7), gradient bound {}",
                    lemma.slope,
                    if lemma.bound_holds { "holds" } else { "violated" }
                ),
            )
        }
        RegressionCheck::PdeDiffusionOrder => {
            let r = diffusion_order_ratio(64)?;
            CheckResult::new(
                "pde_diffusion_order",
                (3.5..=4.5).contains(&r),
                format!("error ratio {r:.3} (target 4)"),
            )
        }
        RegressionCheck::PdeAdvectionOrder => {
            let r = advection_order_ratio(128)?;
            CheckResult::new(
                "pde_advection_order",
                (1.7..=2.3).contains(&r),
                format!("error ratio {r:.3} (target 2)"),
            )
        }
        RegressionCheck::ReactionMass => {
            let worst = reaction_mass_drift(100, suite.seed);
            CheckResult::new(
                "reaction_mass",
                worst <= 1e-12,
                format!("max relative drift {worst:.3e} over 100 tables"),
            )
        }
        RegressionCheck::PdeOdeEquivalence => {
            let err = pde_ode_max_error()?;
            CheckResult::new(
                "pde_ode_equivalence",
                err <= 1e-8,
                format!("max node error {err:.3e}"),
            )
        }
        RegressionCheck::CellListExactness => {
            let worst = cell_list_max_error(20, 2000, suite.seed);
            CheckResult::new(
                "cell_list_exactness",
                worst <= 1e-12,
                format!("max relative error {worst:.3e}"),
            )
        }
        RegressionCheck::Conservation => {
            let mut sc = ScenarioFile::default_shattering().build()?;
            sc.seed = suite.seed;
            let snaps = simulate(&sc, 4000, replica_rng(sc.seed, 0, 0))?;
            let bad = snaps.iter().filter(|s| !mass_report(s).ok()).count();
            CheckResult::new(
                "conservation",
                bad == 0,
                format!(
                    "{} snapshots, {} violations; per-step checks passed",
                    snaps.len(),
                    bad
                ),
            )
        }
        RegressionCheck::DtHalving => {
            let h = homogeneous_check(2000, 30, suite.seed, 0)?;
            CheckResult::new(
                "dt_halving",
                h.oracle_z.abs() < 3.0 && h.halving_z.abs() < 2.0,
                format!(
                    "mean {:.5} vs oracle {:.5} ({:+.2} SE); halving shift {:+.2} SE",
                    h.mean, h.oracle, h.oracle_z, h.halving_z
                ),
            )
        }
        RegressionCheck::FluctuationScaling => {
            let ratio = fluctuation_ratio(500, 100, suite.seed)?;
            CheckResult::new(
                "fluctuation_scaling",
                (2.5..=6.0).contains(&ratio),
                format!("variance ratio N vs 4N = {ratio:.3} (target 4)"),
            )
        }
    })
}

/// Decay of `||f - f * W_alpha||_2^2` for the unit-width bump, compared with
/// the gradient bound `||grad f||_2^2 / (2 alpha^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaCheck {
    pub alphas: Vec<f64>,
    pub defects_sq: Vec<f64>,
    pub slope: f64,
    pub bound_holds: bool,
}

pub const LEMMA_ALPHAS: [f64; 4] = [4.0, 8.0, 16.0, 32.0];

/// The bump used for the kernel decay checks: width 1, centred on `[0, 10)`.
pub fn lemma_bump() -> Result<GridField> {
    Ok(GridField::gaussian_bump(Grid::new(1, 1024, 10.0)?, 1.0))
}

pub fn kernel_lemma_check(kernel_perturbation: f64) -> Result<LemmaCheck> {
    let f = lemma_bump()?;
    let grid = f.grid;
    let values = &f.values[0];
    let grad = gradient_norm_sq(values, &grid);
    let defects_sq: Vec<f64> = LEMMA_ALPHAS
        .iter()
        .map(|&a| {
            let k = Kernel::new(1, a).with_mass_perturbation(kernel_perturbation);
            let smooth = convolve_grid(values, &grid, &k);
            values
                .iter()
                .zip(&smooth)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                * grid.cell_volume()
        })
        .collect();
    let bound_holds = LEMMA_ALPHAS
        .iter()
        .zip(&defects_sq)
        .all(|(a, d)| *d <= grad / (2.0 * a * a) * (1.0 + 1e-9));
    let xs: Vec<f64> = LEMMA_ALPHAS.iter().map(|a| a.ln()).collect();
    let ys: Vec<f64> = defects_sq.iter().map(|d| d.ln()).collect();
    Ok(LemmaCheck {
        alphas: LEMMA_ALPHAS.to_vec(),
        slope: least_squares_slope(&xs, &ys),
        defects_sq,
        bound_holds,
    })
}

fn single_species_table(sigma: f64, velocity: VelocityField) -> SpeciesTable {
    SpeciesTable {
        dim: 1,
        masses: vec![1],
        sigma: vec![sigma],
        velocity: vec![velocity],
        rate: CollisionRateSpec::uniform(1, 0.0),
        frag: FragTable::elastic(1),
        rate_cutoff: 1.0,
    }
}

fn l2_error_1d(field: &GridField, exact: impl Fn(f64) -> f64) -> f64 {
    let g = field.grid;
    (field.values[0]
        .iter()
        .enumerate()
        .map(|(i, v)| (v - exact(g.coord(i)[0])).powi(2))
        .sum::<f64>()
        * g.cell_volume())
    .sqrt()
}

/// Heat-kernel error on `n` nodes divided by the error on `2n` nodes: unit
/// bump, `sigma = 1`, `t = 0.5`, step a quarter of the stability limit.
pub fn diffusion_order_ratio(n: usize) -> Result<f64> {
    let table = single_species_table(1.0, VelocityField::Zero);
    let err = |nodes: usize| -> Result<f64> {
        let g = Grid::new(1, nodes, 10.0)?;
        let f0 = GridField::from_fn(g, 1, |_, x| periodic_gaussian_1d(x[0], 5.0, 1.0, 10.0));
        let traj = solve(&f0, &table, &PdeConfig::auto(&table, &g, 0.25), &[0.5])?;
        Ok(l2_error_1d(&traj.fields[0], |x| {
            periodic_gaussian_1d(x, 5.0, 1.5, 10.0)
        }))
    };
    Ok(err(n)? / err(2 * n)?)
}

/// Upwind transport error ratio between `n` and `2n` nodes: unit bump moved
/// by one length unit at Courant number 1/2.
pub fn advection_order_ratio(n: usize) -> Result<f64> {
    let mut table = single_species_table(1.0, VelocityField::Constant([1.0, 0.0, 0.0]));
    table.sigma = vec![0.0];
    let err = |nodes: usize| -> Result<f64> {
        let g = Grid::new(1, nodes, 10.0)?;
        let f0 = GridField::from_fn(g, 1, |_, x| periodic_gaussian_1d(x[0], 5.0, 1.0, 10.0));
        let traj = solve(&f0, &table, &PdeConfig::auto(&table, &g, 0.5), &[1.0])?;
        Ok(l2_error_1d(&traj.fields[0], |x| {
            periodic_gaussian_1d(x, 6.0, 1.0, 10.0)
        }))
    };
    Ok(err(n)? / err(2 * n)?)
}

/// Largest relative change of `sum_r m_r <s_r, 1>` under one reaction
/// substep, over `tables` random shattering tables with 2 to 5 species.
pub fn reaction_mass_drift(tables: usize, seed: u64) -> f64 {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..tables {
        let species = 2 + i % 4;
        let mut masses = vec![1u32];
        while masses.len() < species {
            let last = *masses.last().expect("nonempty");
            masses.push(last + rng.random_range(1..4));
        }
        let frag = FragTable::random_shattering(&masses, &mut rng);
        let mut rate = vec![vec![0.0; species]; species];
        for r in 0..species {
            for q in r..species {
                let v = rng.random_range(0.0..2.0);
                rate[r][q] = v;
                rate[q][r] = v;
            }
        }
        let mut table = SpeciesTable {
            dim: 1,
            sigma: vec![1.0; species],
            velocity: vec![VelocityField::Zero; species],
            rate: CollisionRateSpec::ConstantMatrix(rate),
            frag,
            rate_cutoff: 5.0,
            masses,
        };
        assert!(table.validate().is_valid(), "random table must be valid");
        let g = Grid {
            dim: 1,
            nodes: 32,
            length: 1.0,
        };
        let mut field = GridField::zeros(g, species);
        field
            .values
            .iter_mut()
            .flatten()
            .for_each(|v| *v = rng.random_range(0.0..1.0));
        let op = PdeOperator::new(&table, g);
        for scheme in [ReactionScheme::Euler, ReactionScheme::Rk4] {
            let out = op.reaction_substep(&field, 0.01, scheme);
            let m0 = field.mass(&table.masses);
            worst = worst.max((out.mass(&table.masses) - m0).abs() / m0);
        }
    }
    worst
}

/// Largest node deviation between the split solver on uniform shattering
/// data and the homogeneous oracle at `t = 0.25, 0.5, 1`.
pub fn pde_ode_max_error() -> Result<f64> {
    let sc = ScenarioFile::homogeneous_shattering().build()?;
    let times = [0.0, 0.25, 0.5, 1.0];
    let traj = solve(&sc.initial, &sc.table, &sc.pde, &times)?;
    let s0: Vec<f64> = (0..sc.species()).map(|r| sc.initial.values[r][0]).collect();
    let oracle = ode_trajectory(&sc.table, &s0, &times);
    let mut worst: f64 = 0.0;
    for (f, s) in traj.fields.iter().zip(&oracle) {
        for (vals, want) in f.values.iter().zip(s) {
            for v in vals {
                worst = worst.max((v - want).abs());
            }
        }
    }
    Ok(worst)
}

/// Largest relative difference between the cell-list and direct kernel sums
/// over `configs` random configurations of up to `max_particles` particles.
pub fn cell_list_max_error(configs: usize, max_particles: usize, seed: u64) -> f64 {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let dim = rng.random_range(1..=3usize);
        let length = rng.random_range(1.0..20.0);
        let alpha = rng.random_range(0.5..20.0);
        let n = rng.random_range(1..=max_particles);
        let kernel = Kernel::new(dim, alpha);
        let pos: Vec<f64> = (0..n * dim).map(|_| rng.random_range(0.0..length)).collect();
        let cells = CellList::new(&pos, kernel, length);
        for _ in 0..20 {
            let k = rng.random_range(0..n);
            let q = &pos[k * dim..(k + 1) * dim];
            let exclude = rng.random_bool(0.5).then_some(k);
            let fast = cells.sum(q, exclude);
            let slow = convolve_empirical_naive(&pos, 1.0, &kernel, length, q, exclude);
            let scale = slow.abs().max(kernel.peak() * 1e-300);
            worst = worst.max((fast - slow).abs() / scale);
        }
    }
    worst
}

/// Mean species-2 fraction at the end of the homogeneous scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousCheck {
    pub n: u64,
    pub replicas: usize,
    pub oracle: f64,
    pub mean: f64,
    pub se: f64,
    pub mean_half_dt: f64,
    pub se_half_dt: f64,
    /// `(mean - oracle) / se`.
    pub oracle_z: f64,
    /// `(mean_half_dt - mean) / sqrt(se^2 + se_half_dt^2)`.
    pub halving_z: f64,
}

/// Species-2 fractions `N_2(T) / N` over `replicas` replicas of the
/// homogeneous shattering scenario at step `dt`.
pub fn homogeneous_fractions(
    n: u64,
    replicas: usize,
    seed: u64,
    n_index: usize,
    dt: f64,
    workers: usize,
) -> Result<Vec<f64>> {
    let mut sc = ScenarioFile::homogeneous_shattering().build()?;
    sc.step = StepConfig::with_cap(dt, sc.step.max_event_prob, &sc.table)?
        .with_field_method(sc.step.field_method);
    sc.snapshot_times = vec![sc.t_end];
    pool(workers)?.install(|| {
        (0..replicas)
            .into_par_iter()
            .map(|k| {
                let snaps = simulate(&sc, n, replica_rng(seed, n_index, k))?;
                let s = snaps.last().expect("one snapshot");
                Ok(s.count(1) as f64 * s.weight())
            })
            .collect()
    })
}

pub fn homogeneous_check(
    n: u64,
    replicas: usize,
    seed: u64,
    workers: usize,
) -> Result<HomogeneousCheck> {
    let sc = ScenarioFile::homogeneous_shattering().build()?;
    let s0: Vec<f64> = (0..sc.species()).map(|r| sc.initial.integral(r)).collect();
    let oracle = crate::pde::ode_oracle(&sc.table, &s0, sc.t_end)[1];
    let a = homogeneous_fractions(n, replicas, seed, 0, sc.step.dt, workers)?;
    let b = homogeneous_fractions(n, replicas, seed, 1, sc.step.dt / 2.0, workers)?;
    let (mean, va) = mean_and_variance(&a);
    let (mean_half_dt, vb) = mean_and_variance(&b);
    let se = (va / a.len() as f64).sqrt();
    let se_half_dt = (vb / b.len() as f64).sqrt();
    Ok(HomogeneousCheck {
        n,
        replicas,
        oracle,
        mean,
        se,
        mean_half_dt,
        se_half_dt,
        oracle_z: (mean - oracle) / se,
        halving_z: (mean_half_dt - mean) / (se * se + se_half_dt * se_half_dt).sqrt(),
    })
}

/// `<S_1(T), f>` with `f(x) = cos(2 pi x / L)` for `replicas` replicas of the
/// pure-diffusion scenario at size `n`.
pub fn diffusion_pairings(n: u64, replicas: usize, seed: u64, n_index: usize) -> Result<Vec<ParticleSnapshot>> {
    let mut sc = ScenarioFile::pure_diffusion().build()?;
    sc.snapshot_times = vec![sc.t_end];
    (0..replicas)
        .into_par_iter()
        .map(|k| {
            let snaps = simulate(&sc, n, replica_rng(seed, n_index, k))?;
            Ok(snaps.into_iter().last().expect("one snapshot"))
        })
        .collect()
}

/// Variance of `<S_1(T), f>` at `n` divided by the variance at `4n`.
pub fn fluctuation_ratio(n: u64, replicas: usize, seed: u64) -> Result<f64> {
    let length = ScenarioFile::pure_diffusion().length;
    let f = move |x: &[f64]| (std::f64::consts::TAU * x[0] / length).cos();
    let small = diffusion_pairings(n, replicas, seed, 0)?;
    let large = diffusion_pairings(4 * n, replicas, seed, 1)?;
    let a = fluctuation_probe(&small, 0, f)?;
    let b = fluctuation_probe(&large, 0, f)?;
    Ok(a.variance / b.variance)
}
