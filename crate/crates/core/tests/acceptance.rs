//! Acceptance suite. Each test prints one PASS/FAIL line per criterion and
//! then asserts it.

use std::io::Write;
use std::time::Instant;

use smolsim::config::ScenarioFile;
use smolsim::harness::{
    cell_list_max_error, diffusion_order_ratio, fluctuation_ratio, homogeneous_check,
    kernel_lemma_check, lemma_bump, pde_ode_max_error, reaction_mass_drift, replica_rng,
    run_study, RunOptions, LEMMA_ALPHAS,
};
use smolsim::kernels::kernel_approx_decay;
use smolsim::particles::{run_with, sample_initial_state};

/// Writes to the stderr handle directly so the line shows up even when the
/// test harness captures output.
fn verdict(id: u32, name: &str, passed: bool, detail: String, start: Instant) -> bool {
    let line = format!(
        "[criterion {id}] {} {name}: {detail} ({:.1} s)\n",
        if passed { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    std::io::stderr().write_all(line.as_bytes()).ok();
    passed
}

#[test]
fn criterion_1_exact_mass_conservation() {
    let start = Instant::now();
    let sc = ScenarioFile::default_shattering().build().unwrap();
    assert_eq!(sc.step.dt, 1e-3);
    assert_eq!(sc.t_end, 1.0);
    let mut state = sample_initial_state(&sc.table, &sc.initial, 10_000, replica_rng(1, 0, 0)).unwrap();
    let n = state.total_atoms();
    let kernel = sc.scaling(n).interaction_kernel();
    run_with(&mut state, &sc.table, &kernel, &sc.step, sc.t_end, &[], |_| {}).unwrap();
    let atoms: u64 = state
        .counts()
        .iter()
        .zip(&sc.table.masses)
        .map(|(&c, &m)| c as u64 * m as u64)
        .sum();
    let events: u64 = state.counters.events.iter().sum();
    let ok = n == 10_000 && atoms == n && events > 0 && start.elapsed().as_secs() < 60;
    assert!(verdict(
        1,
        "exact mass conservation",
        ok,
        format!("sum m_r N_r = {atoms}, N = {n}, {events} events"),
        start
    ));
}

#[test]
fn criterion_2_count_bound() {
    let start = Instant::now();
    let mut steps = 0u64;
    let mut violations = 0u64;
    let scenarios = [
        ScenarioFile::default_shattering(),
        ScenarioFile::homogeneous_shattering(),
        ScenarioFile::pure_diffusion(),
    ];
    for (i, file) in scenarios.iter().enumerate() {
        let sc = file.build().unwrap();
        for replica in 0..3 {
            let mut state =
                sample_initial_state(&sc.table, &sc.initial, 2000, replica_rng(5, i, replica)).unwrap();
            let n = state.total_atoms();
            let kernel = sc.scaling(n).interaction_kernel();
            run_with(&mut state, &sc.table, &kernel, &sc.step, sc.t_end, &[], |s| {
                steps += 1;
                let particles: u64 = s.counts().iter().map(|&c| c as u64).sum();
                if particles > s.total_atoms() {
                    violations += 1;
                }
            })
            .unwrap();
        }
    }
    assert!(verdict(
        2,
        "count bound",
        violations == 0 && steps == 9 * 1000,
        format!("{violations} violations over {steps} steps"),
        start
    ));
}

#[test]
fn criterion_3_homogeneous_oracle() {
    let start = Instant::now();
    let h = homogeneous_check(10_000, 30, 11, 0).unwrap();
    let ok = h.oracle_z.abs() < 3.0 && h.halving_z.abs() < 2.0 && start.elapsed().as_secs() < 600;
    assert!(verdict(
        3,
        "homogeneous oracle match",
        ok,
        format!(
            "mean s2(1) = {:.5} +- {:.5} vs {:.6} ({:+.2} SE); dt halving shift {:+.2} SE",
            h.mean, h.se, h.oracle, h.oracle_z, h.halving_z
        ),
        start
    ));
}

/// Criteria 4 and 9 share one study.
#[test]
fn criteria_4_and_9_convergence_and_bound() {
    let start = Instant::now();
    let sc = ScenarioFile::default_shattering().build().unwrap();
    assert_eq!(sc.n_values, vec![1000, 4000, 16000]);
    assert_eq!(sc.replicas, 30);
    let res = run_study(&sc, &RunOptions::default()).unwrap();
    let rows = &res.report.rows;
    let trend: Vec<String> = rows
        .iter()
        .map(|r| format!("N={} {:.3e}+-{:.1e}", r.n, r.mean_max_d2, r.se_max_d2.unwrap_or(0.0)))
        .collect();
    let ok4 = res.report.strictly_decreasing() && start.elapsed().as_secs() < 1800;
    let ok4 = verdict(4, "convergence trend", ok4, trend.join(", "), start);
    let ok9 = verdict(
        9,
        "bound consistency",
        res.report.bound_violations == 0,
        format!(
            "C = {:.3}, {} violations over {} rows",
            res.report.bound_constant,
            res.report.bound_violations,
            res.rows.len()
        ),
        start,
    );
    assert!(ok4 && ok9);
}

#[test]
fn criterion_5_fluctuation_scaling() {
    let start = Instant::now();
    let ratio = fluctuation_ratio(1000, 100, 13).unwrap();
    let ok = (2.5..=6.0).contains(&ratio) && start.elapsed().as_secs() < 300;
    assert!(verdict(
        5,
        "fluctuation scaling",
        ok,
        format!("Var(N=1000) / Var(N=4000) = {ratio:.3}"),
        start
    ));
}

#[test]
fn criterion_6_kernel_approximation_scaling() {
    let start = Instant::now();
    let fit = kernel_approx_decay(&lemma_bump().unwrap(), &LEMMA_ALPHAS).unwrap();
    let slope = fit.slope.unwrap();
    let lemma = kernel_lemma_check(0.0).unwrap();
    let ok = (-2.3..=-1.7).contains(&slope) && start.elapsed().as_secs() < 10;
    assert!(verdict(
        6,
        "kernel approximation scaling",
        ok,
        format!(
            "fitted exponent {slope:.3} (required [-2.3, -1.7]); upper bound ||grad f||^2/(2 alpha^2) {}",
            if lemma.bound_holds { "holds" } else { "violated" }
        ),
        start
    ));
}

#[test]
fn criterion_7_pde_order_and_conservation() {
    let start = Instant::now();
    let ratio = diffusion_order_ratio(64).unwrap();
    let drift = reaction_mass_drift(100, 17);
    let ode = pde_ode_max_error().unwrap();
    let ok = (3.5..=4.5).contains(&ratio) && drift <= 1e-12 && ode <= 1e-8 && start.elapsed().as_secs() < 60;
    assert!(verdict(
        7,
        "PDE order and conservation",
        ok,
        format!("diffusion ratio {ratio:.3}, reaction drift {drift:.2e}, PDE vs ODE {ode:.2e}"),
        start
    ));
}

#[test]
fn criterion_8_cell_list_exactness() {
    let start = Instant::now();
    let worst = cell_list_max_error(100, 2000, 19);
    let ok = worst <= 1e-12 && start.elapsed().as_secs() < 10;
    assert!(verdict(
        8,
        "cell-list exactness",
        ok,
        format!("max relative error {worst:.2e} over 100 configurations"),
        start
    ));
}
