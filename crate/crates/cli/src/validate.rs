//! Built-in cross-validation suite: closed form vs time stepping, averaged
//! equations vs brute-force noise sampling, limit checks, invariants, and
//! scheduling-independence. Small scales are enforced so the whole suite
//! stays desk-sized.

use dephasim::dynamics::evolve_schrodinger_rk;
use dephasim::integrate::IntegratorConfig;
use dephasim::master::{solve_branch_master_equation_covariant, solve_white_master_equation};
use dephasim::model::{ground_state, k_grid, BranchSign, BranchSpec, RampProtocol};
use dephasim::noise::NoiseModel;
use dephasim::pipeline::{cross_operator_series, starting_field_shift, trajectory_series, System};
use dephasim::propagator::exact_propagator_pcf;
use dephasim::trajectory::EnsembleConfig;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;

use crate::config::ExperimentConfig;
use crate::CliError;

pub struct CheckResult {
    pub name: &'static str,
    pub measured: f64,
    pub threshold: f64,
    /// True when the measured value must stay below the threshold; false
    /// for pass/fail flags encoded as 0/1.
    pub pass: bool,
    pub detail: String,
}

pub fn validate(cfg: ExperimentConfig) -> Result<bool, CliError> {
    if cfg.validate.n > 64 {
        return Err(CliError::Config("validate.n must be <= 64".into()));
    }
    if cfg.validate.m > 5000 {
        return Err(CliError::Config("validate.m must be <= 5000".into()));
    }
    if cfg.validate.n < 2 || !cfg.validate.n.is_multiple_of(2) {
        return Err(CliError::Config("validate.n must be even and >= 2".into()));
    }
    if cfg.validate.m < 16 {
        return Err(CliError::Config("validate.m must be >= 16".into()));
    }

    let mut checks = vec![check_propagator(cfg.validate.seed)?];
    checks.push(check_master_vs_trajectories(
        cfg.validate.n,
        cfg.validate.m,
        cfg.validate.seed,
        NoiseModel::White { xi: 0.01 },
        "white_master_vs_trajectories",
    )?);
    checks.push(check_master_vs_trajectories(
        cfg.validate.n,
        cfg.validate.m,
        cfg.validate.seed,
        NoiseModel::Ou { xi: 0.003, tau_n: 50.0 },
        "colored_master_vs_trajectories",
    )?);
    checks.push(check_white_limit()?);
    checks.push(check_invariants(cfg.validate.n)?);
    checks.push(check_thread_determinism(cfg.validate.n, cfg.validate.seed)?);
    checks.push(check_starting_field(cfg.validate.n)?);

    let mut all_pass = true;
    println!("validation report");
    println!("-----------------");
    for c in &checks {
        let status = if c.pass { "PASS" } else { "FAIL" };
        println!(
            "{status}  {name:<34} measured {measured:>12.4e}  threshold {threshold:>9.1e}  {detail}",
            name = c.name,
            measured = c.measured,
            threshold = c.threshold,
            detail = c.detail
        );
        all_pass &= c.pass;
    }
    println!("-----------------");
    println!("overall: {}", if all_pass { "PASS" } else { "FAIL" });
    Ok(all_pass)
}

fn numeric(e: dephasim::Error) -> CliError {
    CliError::Numeric(e.to_string())
}

/// Closed-form propagator against tight-tolerance time stepping on
/// randomized mode/ramp/coupling draws.
fn check_propagator(seed: u64) -> Result<CheckResult, CliError> {
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed ^ 0x70c);
    let modes = k_grid(100).map_err(numeric)?;
    let mut worst = 0.0_f64;
    let mut worst_unitarity = 0.0_f64;
    for _ in 0..20 {
        let mode = &modes[rng.gen_range(0..modes.len())];
        let tau_q = 10.0_f64.powf(rng.gen_range(0.0..2.3979));
        let delta = if rng.gen_bool(0.5) { 0.0 } else { 0.01 };
        let sign = if rng.gen_bool(0.5) { BranchSign::Plus } else { BranchSign::Minus };
        let branch = BranchSpec { sign, delta };
        let ramp = RampProtocol::new(tau_q, -5.0, 5.0).map_err(numeric)?;
        let p = exact_propagator_pcf(mode, branch, &ramp, ramp.t_i(), ramp.t_f())
            .map_err(numeric)?;
        worst_unitarity = worst_unitarity.max(p.unitarity_defect());
        let init = ground_state(mode, ramp.h_i, branch).map_err(numeric)?;
        let cfg = IntegratorConfig::new(1e-12, 1e-14, vec![ramp.t_i(), ramp.t_f()])
            .map_err(numeric)?;
        let ode = evolve_schrodinger_rk(mode, branch, &ramp, &init, &cfg).map_err(numeric)?;
        let predicted = p.apply(&init);
        let fidelity_err =
            (1.0 - ode.states.last().unwrap().overlap(&predicted).norm_sqr()).abs();
        worst = worst.max(fidelity_err);
    }
    Ok(CheckResult {
        name: "closed_form_vs_ode",
        measured: worst,
        threshold: 1e-6,
        pass: worst < 1e-6 && worst_unitarity < 1e-8,
        detail: format!("20 random sweeps, worst unitarity defect {worst_unitarity:.2e}"),
    })
}

/// Exact cross-operator averaging against the trajectory ensemble at 20
/// checkpoints, in jackknife standard errors.
fn check_master_vs_trajectories(
    n: usize,
    m: usize,
    seed: u64,
    noise: NoiseModel,
    name: &'static str,
) -> Result<CheckResult, CliError> {
    let ramp = RampProtocol::new(10.0, -5.0, 5.0).map_err(numeric)?;
    let sys = System::new(n, 0.01, ramp).map_err(numeric)?;
    let ens = EnsembleConfig { n_traj: m, ..EnsembleConfig::new(m, seed) };
    let (_, run) = trajectory_series(&sys, &noise, &ens, 20).map_err(numeric)?;
    let icfg = IntegratorConfig::new(1e-10, 1e-12, run.times.clone()).map_err(numeric)?;
    let cross = cross_operator_series(&sys, &noise, &icfg).map_err(numeric)?;
    let mut worst_z = 0.0_f64;
    for (j, est) in run.global.iter().enumerate().skip(1) {
        let z = (cross.series.d[j] - est.mean).abs() / est.std_err.max(1e-12);
        worst_z = worst_z.max(z);
    }
    Ok(CheckResult {
        name,
        measured: worst_z,
        threshold: 3.0,
        pass: worst_z < 3.0,
        detail: format!("M = {m}, 20 checkpoints"),
    })
}

/// The colored branch equation approaches the white equation as the
/// correlation time shrinks, monotonically.
fn check_white_limit() -> Result<CheckResult, CliError> {
    let modes = k_grid(32).map_err(numeric)?;
    let mode = &modes[11];
    let ramp = RampProtocol::new(10.0, -5.0, 5.0).map_err(numeric)?;
    let branch = BranchSpec::plus(0.01);
    let init = ground_state(mode, ramp.h_i, BranchSpec::none()).map_err(numeric)?;
    let cfg = IntegratorConfig::uniform(&ramp, 101).map_err(numeric)?.with_tols(1e-9, 1e-11);
    let xi = 0.01;
    let white =
        solve_white_master_equation(mode, branch, &ramp, xi, &init, &cfg).map_err(numeric)?;
    let mut distances = Vec::new();
    for tau_n in [0.1, 0.03, 0.01] {
        let noise = NoiseModel::Ou { xi, tau_n };
        let ou = dephasim::master::solve_branch_master_equation(
            mode, branch, &ramp, &noise, &init, &cfg,
        )
        .map_err(numeric)?;
        let dist = white
            .states
            .iter()
            .zip(&ou.states)
            .map(|(w, o)| (w.rho - o.rho).max_abs())
            .fold(0.0, f64::max);
        distances.push(dist);
    }
    let monotone = distances[0] > distances[1] && distances[1] > distances[2];
    Ok(CheckResult {
        name: "white_limit_convergence",
        measured: distances[2],
        threshold: 1e-4,
        pass: monotone && distances[2] < 1e-4,
        detail: format!("distances {distances:?} decreasing"),
    })
}

/// Trace, Hermiticity (structural), positivity and norm bookkeeping on a
/// small noisy run of each kind.
fn check_invariants(n: usize) -> Result<CheckResult, CliError> {
    let ramp = RampProtocol::new(10.0, -5.0, 5.0).map_err(numeric)?;
    let sys = System::new(n, 0.01, ramp).map_err(numeric)?;
    let icfg = IntegratorConfig::uniform(&ramp, 201).map_err(numeric)?;

    let base = dephasim::pipeline::noiseless_series(&sys, &icfg).map_err(numeric)?;
    let norm_defect = base.diagnostics.max_norm_defect.unwrap_or(1.0);
    let d0_defect = (base.series.d[0] - 1.0).abs();

    let white = dephasim::pipeline::factorized_series(
        &sys,
        &NoiseModel::White { xi: 0.01 },
        &icfg,
    )
    .map_err(numeric)?;
    let trace_defect = white.diagnostics.max_trace_defect.unwrap_or(1.0);
    let min_ev_white = white.diagnostics.min_rho_eigenvalue.unwrap_or(-1.0);

    let ou = dephasim::pipeline::factorized_series(
        &sys,
        &NoiseModel::Ou { xi: 0.003, tau_n: 50.0 },
        &icfg,
    )
    .map_err(numeric)?;
    let min_ev_ou = ou.diagnostics.min_rho_eigenvalue.unwrap_or(-1.0);

    // Covariant branch solve keeps trace as well.
    let modes = k_grid(n).map_err(numeric)?;
    let init = ground_state(&modes[0], ramp.h_i, BranchSpec::none()).map_err(numeric)?;
    let cov = solve_branch_master_equation_covariant(
        &modes[0],
        BranchSpec::plus(0.01),
        &ramp,
        &NoiseModel::Ou { xi: 0.003, tau_n: 50.0 },
        &init,
        &icfg,
    )
    .map_err(numeric)?;

    let worst = norm_defect
        .max(d0_defect)
        .max(trace_defect)
        .max(cov.meta.max_trace_defect)
        .max((-min_ev_white).max(0.0))
        .max((-min_ev_ou - 1e-6).max(0.0));
    let pass = norm_defect < 1e-8
        && d0_defect < 1e-9
        && trace_defect < 1e-8
        && cov.meta.max_trace_defect < 1e-8
        && min_ev_white > -1e-10
        && min_ev_ou > -1e-6;
    Ok(CheckResult {
        name: "norm_trace_positivity",
        measured: worst,
        threshold: 1e-6,
        pass,
        detail: format!(
            "norm {norm_defect:.1e}, trace {trace_defect:.1e}, min eig white {min_ev_white:.1e} / colored {min_ev_ou:.1e}"
        ),
    })
}

/// Identical results from 1 and 2 worker threads, bitwise.
fn check_thread_determinism(n: usize, seed: u64) -> Result<CheckResult, CliError> {
    let ramp = RampProtocol::new(4.0, -3.0, 3.0).map_err(numeric)?;
    let sys = System::new(n.min(8), 0.02, ramp).map_err(numeric)?;
    let noise = NoiseModel::White { xi: 0.05 };
    let ens = EnsembleConfig::new(64, seed);
    let run_in_pool = |threads: usize| -> Result<Vec<u64>, CliError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::Numeric(e.to_string()))?;
        pool.install(|| -> Result<Vec<u64>, CliError> {
            let (out, run) = trajectory_series(&sys, &noise, &ens, 9).map_err(numeric)?;
            let mut bits: Vec<u64> =
                out.series.d.iter().map(|v| v.to_bits()).collect();
            bits.extend(run.global.iter().map(|e| e.mean.to_bits()));
            bits.extend(run.global.iter().map(|e| e.std_err.to_bits()));
            Ok(bits)
        })
    };
    let a = run_in_pool(1)?;
    let b = run_in_pool(2)?;
    let equal = a == b;
    Ok(CheckResult {
        name: "thread_count_determinism",
        measured: if equal { 0.0 } else { 1.0 },
        threshold: 0.5,
        pass: equal,
        detail: "trajectory ensemble on 1 vs 2 threads".into(),
    })
}

/// Starting-field convergence: pushing the start deeper into the
/// paramagnet moves D by a negligible amount.
fn check_starting_field(n: usize) -> Result<CheckResult, CliError> {
    let ramp = RampProtocol::new(10.0, -5.0, 5.0).map_err(numeric)?;
    let sys = System::new(n, 0.01, ramp).map_err(numeric)?;
    let icfg = IntegratorConfig::uniform(&ramp, 201).map_err(numeric)?;
    let shift = starting_field_shift(&sys, &icfg, -8.0).map_err(numeric)?;
    Ok(CheckResult {
        name: "starting_field_convergence",
        measured: shift,
        threshold: 1e-4,
        pass: shift < 1e-4,
        detail: "restart from h_i = -8".into(),
    })
}
