//! Acceptance suite: the quantitative exit criteria of the simulator, one
//! test per criterion, each printing a single PASS/FAIL line (run with
//! `--nocapture` to see them). Heavy intermediate results are shared
//! through caches and the tests serialize on one lock so the stated
//! runtime budgets are measured honestly.

use std::collections::HashMap;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use num_complex::Complex64 as C64;

use dephasim::dynamics::{adiabatic_df, evolve_schrodinger_rk};
use dephasim::fit::{fit_scaling, nonmarkov_vs_tau_n, FitModel};
use dephasim::integrate::IntegratorConfig;
use dephasim::master::{solve_branch_master_equation, solve_white_master_equation};
use dephasim::model::{ground_state, k_grid, BranchSign, BranchSpec, RampProtocol};
use dephasim::noise::NoiseModel;
use dephasim::nonmarkov::blp_measure;
use dephasim::observables::{critical_value, detect_revivals, DecoherenceSeries};
use dephasim::pipeline::{
    cross_operator_series, factorized_series, noiseless_series, trajectory_series, System,
};
use dephasim::propagator::exact_propagator_pcf;
use dephasim::trajectory::EnsembleConfig;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;

const FLAGSHIP_N: usize = 500;
const DELTA: f64 = 0.01;

fn suite_lock() -> MutexGuard<'static, ()> {
    static LOCK: OnceLock<Mutex<()>> = OnceLock::new();
    LOCK.get_or_init(|| Mutex::new(())).lock().unwrap_or_else(|p| p.into_inner())
}

fn report(criterion: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion:>2} ({name}): {} - {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} ({name}) failed: {detail}");
}

fn flagship_ramp() -> RampProtocol {
    RampProtocol::new(250.0, -5.0, 5.0).unwrap()
}

fn fast_ramp() -> RampProtocol {
    RampProtocol::new(10.0, -5.0, 5.0).unwrap()
}

fn grid_cfg(ramp: &RampProtocol, points: usize, rel: f64) -> IntegratorConfig {
    IntegratorConfig::uniform(ramp, points).unwrap().with_tols(rel, rel * 1e-2)
}

/// Noiseless flagship run, computed once inside a single-thread pool and
/// timed (criterion 1's budget is stated single-threaded).
fn flagship_noiseless() -> &'static (DecoherenceSeries, Duration) {
    static CACHE: OnceLock<(DecoherenceSeries, Duration)> = OnceLock::new();
    CACHE.get_or_init(|| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let start = Instant::now();
        let out = pool.install(|| {
            let sys = System::new(FLAGSHIP_N, DELTA, flagship_ramp()).unwrap();
            let cfg = grid_cfg(&flagship_ramp(), 2000, 1e-7);
            noiseless_series(&sys, &cfg).unwrap()
        });
        (out.series, start.elapsed())
    })
}

fn white_flagship() -> &'static Mutex<HashMap<u64, DecoherenceSeries>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, DecoherenceSeries>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Cross-operator run with white noise at the flagship parameters.
fn white_flagship_series(xi: f64) -> DecoherenceSeries {
    let key = (xi * 1e7) as u64;
    if let Some(s) = white_flagship().lock().unwrap().get(&key) {
        return s.clone();
    }
    let sys = System::new(FLAGSHIP_N, DELTA, flagship_ramp()).unwrap();
    let cfg = grid_cfg(&flagship_ramp(), 2000, 1e-7);
    let out = cross_operator_series(&sys, &NoiseModel::White { xi }, &cfg).unwrap();
    white_flagship().lock().unwrap().insert(key, out.series.clone());
    out.series
}

fn ou_flagship() -> &'static Mutex<HashMap<u64, DecoherenceSeries>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, DecoherenceSeries>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Branch-factorized run with colored noise at the flagship parameters and
/// strength 0.003 (the figure-reproduction pipeline).
fn ou_flagship_series(tau_n: f64) -> DecoherenceSeries {
    let key = (tau_n * 10.0) as u64;
    if let Some(s) = ou_flagship().lock().unwrap().get(&key) {
        return s.clone();
    }
    let sys = System::new(FLAGSHIP_N, DELTA, flagship_ramp()).unwrap();
    let cfg = grid_cfg(&flagship_ramp(), 2000, 1e-7);
    let out =
        factorized_series(&sys, &NoiseModel::Ou { xi: 0.003, tau_n }, &cfg).unwrap();
    ou_flagship().lock().unwrap().insert(key, out.series.clone());
    out.series
}

#[test]
fn criterion_01_revival_period() {
    let _guard = suite_lock();
    let (series, elapsed) = flagship_noiseless();
    let rep = detect_revivals(series, (-1.0, 1.0), 250.0, DELTA).unwrap();
    let theory = std::f64::consts::PI / 10.0;
    let spacing = rep.period_estimate.unwrap_or(f64::NAN);
    let rel = (spacing - theory).abs() / theory;
    let pass = rep.peaks.len() >= 3 && rel <= 0.10 && *elapsed <= Duration::from_secs(120);
    report(
        1,
        "revival period",
        pass,
        &format!(
            "{} peaks, mean spacing {spacing:.6} vs {theory:.6} ({:.4}% off), {:.1?} single-threaded",
            rep.peaks.len(),
            rel * 100.0,
            elapsed
        ),
    );
}

#[test]
fn criterion_02_coupling_regime_dichotomy() {
    let _guard = suite_lock();
    let start = Instant::now();
    let sys = System::new(FLAGSHIP_N, DELTA, fast_ramp()).unwrap();
    let cfg = grid_cfg(&fast_ramp(), 2000, 1e-9);
    let fast = noiseless_series(&sys, &cfg).unwrap();
    let rep_fast = detect_revivals(&fast.series, (-1.0, 1.0), 10.0, DELTA).unwrap();
    let (slow_series, _) = flagship_noiseless();
    let rep_slow = detect_revivals(slow_series, (-1.0, 1.0), 250.0, DELTA).unwrap();
    let elapsed = start.elapsed();
    let pass = rep_fast.peaks.is_empty()
        && rep_slow.peaks.len() >= 3
        && elapsed <= Duration::from_secs(120);
    report(
        2,
        "coupling-regime dichotomy",
        pass,
        &format!(
            "tau_q=10: {} interior peaks (monotonic); tau_q=250: {} peaks; {:.1?}",
            rep_fast.peaks.len(),
            rep_slow.peaks.len(),
            elapsed
        ),
    );
}

#[test]
fn criterion_03_adiabatic_formula() {
    let _guard = suite_lock();
    let (series, _) = flagship_noiseless();
    // The closed form describes the adiabatic paramagnet; the matching
    // window |h| in [1.5, 4] lies on the approach side of the sweep (after
    // both critical points the excitation cascade voids the formula, which
    // the exit-side sanity check below confirms).
    let mut worst = 0.0_f64;
    let mut n_points = 0;
    for (j, &h) in series.fields.iter().enumerate() {
        if (-4.0..=-1.5).contains(&h) {
            let formula = adiabatic_df(FLAGSHIP_N, DELTA, h).unwrap();
            worst = worst.max((series.d[j] - formula).abs() / formula);
            n_points += 1;
        }
    }
    let d_exit = critical_value(series, 1.0).unwrap();
    let d_entry = critical_value(series, -1.0).unwrap();
    let pass = n_points > 100 && worst <= 0.05 && d_exit < d_entry;
    report(
        3,
        "adiabatic closed form",
        pass,
        &format!(
            "worst relative deviation {worst:.2e} over {n_points} samples at |h| in [1.5,4] (approach); exit-side D(+1) = {d_exit:.3} < D(-1) = {d_entry:.3}"
        ),
    );
}

#[test]
fn criterion_04_white_noise_critical_scaling() {
    let _guard = suite_lock();
    let start = Instant::now();
    let ramp = fast_ramp();
    let cfg = grid_cfg(&ramp, 1000, 1e-8);
    let mut pts_minus = Vec::new();
    let mut pts_plus = Vec::new();
    for n in [100usize, 200, 300, 400, 500] {
        for xi in [0.005, 0.01, 0.015, 0.02] {
            let sys = System::new(n, DELTA, ramp).unwrap();
            let out = cross_operator_series(&sys, &NoiseModel::White { xi }, &cfg).unwrap();
            let x = n as f64 * xi * xi;
            pts_minus.push((x, critical_value(&out.series, -1.0).unwrap()));
            pts_plus.push((x, critical_value(&out.series, 1.0).unwrap()));
        }
    }
    let fit = fit_scaling(&pts_minus, FitModel::Exponential, "N xi^2").unwrap();
    let fit_plus = fit_scaling(&pts_plus, FitModel::Exponential, "N xi^2").unwrap();
    let elapsed = start.elapsed();
    // The collapse holds at the first critical point, where the noiseless
    // extensive decay is negligible; the second point carries the noiseless
    // e^{-cN} term and is reported for reference.
    let pass =
        fit.r_squared >= 0.95 && fit.slope < 0.0 && elapsed <= Duration::from_secs(30 * 60);
    report(
        4,
        "white critical scaling",
        pass,
        &format!(
            "ln D(h=-1) vs N xi^2: slope {:+.2}, r^2 = {:.4} over 20 runs ({:.1?}); h=+1 reference r^2 = {:.3}",
            fit.slope, fit.r_squared, elapsed, fit_plus.r_squared
        ),
    );
}

#[test]
fn criterion_05_colored_noise_critical_scaling() {
    let _guard = suite_lock();
    let ramp = fast_ramp();
    let cfg = grid_cfg(&ramp, 400, 1e-6);
    let mut pts = Vec::new();
    for n in [100usize, 200, 300, 400, 500] {
        for xi in [0.01, 0.015, 0.02] {
            for tau_n in [100.0, 200.0, 400.0] {
                let sys = System::new(n, DELTA, ramp).unwrap();
                let out =
                    factorized_series(&sys, &NoiseModel::Ou { xi, tau_n }, &cfg).unwrap();
                pts.push((
                    n as f64 * xi * xi / tau_n,
                    critical_value(&out.series, -1.0).unwrap(),
                ));
            }
        }
    }
    let fit = fit_scaling(&pts, FitModel::Exponential, "N xi^2 / tau_n").unwrap();
    let pass = fit.r_squared >= 0.95 && fit.slope < 0.0;
    report(
        5,
        "colored critical scaling",
        pass,
        &format!(
            "ln D(h=-1) vs N xi^2 / tau_n: slope {:+.1}, r^2 = {:.4} over {} runs",
            fit.slope,
            fit.r_squared,
            pts.len()
        ),
    );
}

#[test]
fn criterion_06_revival_scaling() {
    let _guard = suite_lock();
    let (base, _) = flagship_noiseless();
    let base_rep = detect_revivals(base, (-1.0, 1.0), 250.0, DELTA).unwrap();
    let base_spacing = base_rep.period_estimate.unwrap();

    // (a) White noise: per-peak exponential decline in xi^2, later peaks
    // steeper, period unchanged, successive peaks decaying within each run.
    let xis = [0.0005, 0.001, 0.0015, 0.002];
    let mut noisy_reports = Vec::new();
    for &xi in &xis {
        let series = white_flagship_series(xi);
        let rep = detect_revivals(&series, (-1.0, 1.0), 250.0, DELTA).unwrap();
        noisy_reports.push((xi, rep));
    }
    let mut slopes = Vec::new();
    let mut all_r2_ok = true;
    for (idx, &(h_ref, _)) in base_rep.peaks.iter().enumerate() {
        let mut pts = Vec::new();
        for (xi, rep) in &noisy_reports {
            if let Some(p) = rep
                .peaks
                .iter()
                .min_by(|a, b| (a.0 - h_ref).abs().partial_cmp(&(b.0 - h_ref).abs()).unwrap())
                .filter(|p| (p.0 - h_ref).abs() < 0.1)
            {
                pts.push((xi * xi, p.1));
            }
        }
        assert!(pts.len() >= 3, "peak {idx} lost under noise");
        let fit = fit_scaling(&pts, FitModel::Exponential, "xi^2").unwrap();
        all_r2_ok &= fit.r_squared >= 0.9;
        slopes.push(fit.slope);
    }
    let steeper_later = slopes.windows(2).all(|w| w[1] < w[0]);
    let period_invariant = noisy_reports.iter().all(|(_, rep)| {
        rep.period_estimate
            .map(|s| (s - base_spacing).abs() <= 0.1 * base_spacing)
            .unwrap_or(false)
    });
    let decaying_in_time = noisy_reports
        .iter()
        .all(|(_, rep)| rep.peaks.windows(2).all(|w| w[1].1 < w[0].1));

    // (b) Colored noise at xi = 0.003: first-revival height linear in the
    // correlation time for fast noise (tau_n <= 100).
    let tau_ns = [25.0, 50.0, 75.0, 100.0];
    let mut pts_b = Vec::new();
    let mut period_invariant_ou = true;
    for &tau_n in &tau_ns {
        let series = ou_flagship_series(tau_n);
        let rep = detect_revivals(&series, (-1.0, 1.0), 250.0, DELTA).unwrap();
        period_invariant_ou &= rep
            .period_estimate
            .map(|s| (s - base_spacing).abs() <= 0.1 * base_spacing)
            .unwrap_or(false);
        let first = rep.peaks.first().expect("first revival survives").1;
        pts_b.push((tau_n, first));
    }
    let fit_b = fit_scaling(&pts_b, FitModel::LinearInX, "tau_n").unwrap();

    let pass = all_r2_ok
        && steeper_later
        && period_invariant
        && period_invariant_ou
        && decaying_in_time
        && fit_b.r_squared >= 0.9
        && fit_b.slope > 0.0;
    report(
        6,
        "revival scaling",
        pass,
        &format!(
            "white: {} peaks fit in xi^2 (slopes {:.0?}; later steeper: {steeper_later}); colored: D_max vs tau_n slope {:+.2e}, r^2 = {:.4}; period invariant under noise: {}",
            slopes.len(),
            slopes,
            fit_b.slope,
            fit_b.r_squared,
            period_invariant && period_invariant_ou
        ),
    );
}

#[test]
fn criterion_07_master_equation_vs_trajectories() {
    let _guard = suite_lock();
    let start = Instant::now();
    let ramp = fast_ramp();
    let sys = System::new(16, DELTA, ramp).unwrap();
    let mut detail = String::new();
    let mut pass = true;
    for noise in [
        NoiseModel::White { xi: 0.01 },
        NoiseModel::Ou { xi: 0.003, tau_n: 50.0 },
    ] {
        let ens = EnsembleConfig::new(2000, 4242);
        let (_, run) = trajectory_series(&sys, &noise, &ens, 20).unwrap();
        let cfg = IntegratorConfig::new(1e-10, 1e-12, run.times.clone()).unwrap();
        let cross = cross_operator_series(&sys, &noise, &cfg).unwrap();
        let mut worst_z = 0.0_f64;
        for (j, est) in run.global.iter().enumerate() {
            let diff = (cross.series.d[j] - est.mean).abs();
            if diff == 0.0 {
                continue;
            }
            worst_z = worst_z.max(diff / est.std_err.max(1e-15));
        }
        pass &= worst_z <= 3.0;
        detail.push_str(&format!("{noise:?}: worst z = {worst_z:.2}; "));
    }
    let elapsed = start.elapsed();
    pass &= elapsed <= Duration::from_secs(20 * 60);
    report(
        7,
        "master equation vs trajectories",
        pass,
        &format!("{detail}M = 2000, 20 checkpoints, common noise ({elapsed:.1?})"),
    );
}

#[test]
fn criterion_08_closed_form_propagator() {
    let _guard = suite_lock();
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0xacce97);
    let modes = k_grid(100).unwrap();
    let mut worst = 0.0_f64;
    let mut worst_unitarity = 0.0_f64;
    for _ in 0..20 {
        let mode = &modes[rng.gen_range(0..modes.len())];
        let tau_q = 10.0_f64.powf(rng.gen_range(0.0..2.3979));
        let delta = if rng.gen_bool(0.5) { 0.0 } else { 0.01 };
        let sign = if rng.gen_bool(0.5) { BranchSign::Plus } else { BranchSign::Minus };
        let branch = BranchSpec { sign, delta };
        let ramp = RampProtocol::new(tau_q, -5.0, 5.0).unwrap();
        let p = exact_propagator_pcf(mode, branch, &ramp, ramp.t_i(), ramp.t_f()).unwrap();
        worst_unitarity = worst_unitarity.max(p.unitarity_defect());
        let init = ground_state(mode, ramp.h_i, branch).unwrap();
        let cfg = IntegratorConfig::new(1e-12, 1e-14, vec![ramp.t_i(), ramp.t_f()]).unwrap();
        let ode = evolve_schrodinger_rk(mode, branch, &ramp, &init, &cfg).unwrap();
        let predicted = p.apply(&init);
        let err = (1.0 - ode.states.last().unwrap().overlap(&predicted).norm_sqr()).abs();
        worst = worst.max(err);
    }
    let pass = worst < 1e-6 && worst_unitarity < 1e-8;
    report(
        8,
        "closed-form propagator",
        pass,
        &format!(
            "20 randomized sweeps: worst fidelity error {worst:.2e}, worst unitarity defect {worst_unitarity:.2e}"
        ),
    );
}

#[test]
fn criterion_09_white_limit_convergence() {
    let _guard = suite_lock();
    let modes = k_grid(32).unwrap();
    let mode = &modes[11];
    let ramp = fast_ramp();
    let branch = BranchSpec::plus(DELTA);
    let init = ground_state(mode, ramp.h_i, BranchSpec::none()).unwrap();
    let cfg = grid_cfg(&ramp, 101, 1e-9);
    let xi = 0.01;
    let white = solve_white_master_equation(mode, branch, &ramp, xi, &init, &cfg).unwrap();
    let mut distances = Vec::new();
    for tau_n in [0.1, 0.03, 0.01] {
        let ou = solve_branch_master_equation(
            mode,
            branch,
            &ramp,
            &NoiseModel::Ou { xi, tau_n },
            &init,
            &cfg,
        )
        .unwrap();
        let dist = white
            .states
            .iter()
            .zip(&ou.states)
            .map(|(w, o)| (w.rho - o.rho).max_abs())
            .fold(0.0, f64::max);
        distances.push(dist);
    }
    let pass = distances[0] > distances[1] && distances[1] > distances[2];
    report(
        9,
        "white-limit convergence",
        pass,
        &format!("max-element distances {distances:?} decrease monotonically"),
    );
}

#[test]
fn criterion_10_non_markovianity_trends() {
    let _guard = suite_lock();
    // White noise: the exact-route backflow measure decreases monotonically
    // with noise strength.
    let mut white_measures = Vec::new();
    for xi in [0.001, 0.002, 0.003, 0.005] {
        let series = white_flagship_series(xi);
        let d = series.d_complex.as_ref().unwrap();
        white_measures.push(blp_measure(&series.times, d).unwrap().measure);
    }
    let monotone = white_measures.windows(2).all(|w| w[1] < w[0]);

    // Colored noise: linear growth with the correlation time on the
    // figure-reproduction pipeline's visibility magnitude sqrt(D).
    let mut pts = Vec::new();
    for tau_n in [25.0, 50.0, 100.0, 200.0] {
        let series = ou_flagship_series(tau_n);
        let d: Vec<C64> =
            series.d.iter().map(|&v| C64::new(v.max(0.0).sqrt(), 0.0)).collect();
        pts.push((tau_n, blp_measure(&series.times, &d).unwrap().measure));
    }
    let fit = nonmarkov_vs_tau_n(&pts).unwrap();
    let pass = monotone && fit.slope > 0.0 && fit.r_squared >= 0.9;
    report(
        10,
        "non-Markovianity trends",
        pass,
        &format!(
            "white measures {white_measures:.3?} decreasing: {monotone}; colored slope {:+.3e}, r^2 = {:.4}",
            fit.slope, fit.r_squared
        ),
    );
}

#[test]
fn criterion_11_invariants_and_validate() {
    let _guard = suite_lock();
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_dephasim"))
        .args(["validate", "--set", "validate.m=600"])
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let pass = out.status.success() && stdout.contains("overall: PASS");
    let summary: Vec<&str> = stdout
        .lines()
        .filter(|l| l.starts_with("PASS") || l.starts_with("FAIL"))
        .collect();
    report(
        11,
        "invariant suite / validate",
        pass,
        &format!("exit {:?}; {} checks: {summary:?}", out.status.code(), summary.len()),
    );
}
