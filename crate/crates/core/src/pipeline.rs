//! End-to-end runs: momentum grid, per-mode solves in parallel, assembly
//! into the decoherence factor.
//!
//! Both branches start from the same environment state, the ground state of
//! the *uncoupled* chain at the starting field, so the initial overlap is
//! exactly one on every route. The per-branch ground states differ from it
//! at order `delta^2` and are available through `model::ground_state` for
//! callers that want branch-resolved initialization.

use rayon::prelude::*;

use crate::dynamics::evolve_schrodinger;
use crate::error::{Error, Result};
use crate::integrate::IntegratorConfig;
use crate::master::{
    factorized_mode_factor, solve_branch_master_equation, solve_cross_master_equation,
    solve_white_master_equation,
};
use crate::model::{ground_state, k_grid, BranchSpec, KMode, RampProtocol};
use crate::noise::NoiseModel;
use crate::observables::{assemble_decoherence, DecoherenceSeries, ModeFactors, Route};
use crate::trajectory::{trajectory_ensemble, EnsembleConfig, TrajectoryRun};

/// Physical configuration of one run.
#[derive(Clone, Copy, Debug)]
pub struct System {
    pub n: usize,
    pub delta: f64,
    pub ramp: RampProtocol,
}

impl System {
    pub fn new(n: usize, delta: f64, ramp: RampProtocol) -> Result<Self> {
        if delta < 0.0 || !delta.is_finite() {
            return Err(Error::invalid(format!("coupling delta must be >= 0, got {delta}")));
        }
        // Validates chain length as well.
        k_grid(n)?;
        Ok(System { n, delta, ramp })
    }
}

/// Aggregated solver diagnostics of one run.
#[derive(Clone, Copy, Debug, Default)]
pub struct SolverDiagnostics {
    pub min_rho_eigenvalue: Option<f64>,
    pub positivity_warning: bool,
    pub max_trace_defect: Option<f64>,
    pub max_spectral_norm: Option<f64>,
    pub max_norm_defect: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub modes: Vec<KMode>,
    pub series: DecoherenceSeries,
    pub diagnostics: SolverDiagnostics,
}

fn bare_ground(mode: &KMode, ramp: &RampProtocol) -> Result<crate::model::BranchState> {
    ground_state(mode, ramp.h_i, BranchSpec::none())
}

/// Noiseless decoherence factor: two unitary branch evolutions per mode.
pub fn noiseless_series(sys: &System, cfg: &IntegratorConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let modes = k_grid(sys.n)?;
    let per_mode: Vec<(ModeFactors, f64)> = modes
        .par_iter()
        .map(|mode| -> Result<(ModeFactors, f64)> {
            let init = bare_ground(mode, &sys.ramp)?;
            let plus = evolve_schrodinger(mode, BranchSpec::plus(sys.delta), &sys.ramp, &init, cfg)?;
            let minus =
                evolve_schrodinger(mode, BranchSpec::minus(sys.delta), &sys.ramp, &init, cfg)?;
            let d: Vec<_> = plus
                .states
                .iter()
                .zip(&minus.states)
                .map(|(p, m)| p.overlap(m))
                .collect();
            let f: Vec<f64> = d.iter().map(|z| z.norm_sqr()).collect();
            let defect = plus.max_norm_defect().max(minus.max_norm_defect());
            Ok((ModeFactors { f, d: Some(d) }, defect))
        })
        .collect::<Result<Vec<_>>>()?;

    let max_norm_defect = per_mode.iter().map(|(_, d)| *d).fold(0.0, f64::max);
    let factors = per_mode.into_iter().map(|(m, _)| m).collect();
    let series = assemble_decoherence(Route::Noiseless, &sys.ramp, &cfg.dense_grid, factors)?;
    Ok(RunOutput {
        modes,
        series,
        diagnostics: SolverDiagnostics {
            max_norm_defect: Some(max_norm_defect),
            ..Default::default()
        },
    })
}

/// Noise-averaged run through the branch-factorized route: two branch
/// master-equation solves per mode, assembled with the factorized
/// expansion of the per-mode factor.
pub fn factorized_series(
    sys: &System,
    noise: &NoiseModel,
    cfg: &IntegratorConfig,
) -> Result<RunOutput> {
    cfg.validate()?;
    noise.validate()?;
    let modes = k_grid(sys.n)?;
    let solved: Vec<(ModeFactors, f64, f64, f64)> = modes
        .par_iter()
        .map(|mode| -> Result<(ModeFactors, f64, f64, f64)> {
            let init = bare_ground(mode, &sys.ramp)?;
            let solve = |branch: BranchSpec| match *noise {
                NoiseModel::Ou { .. } => {
                    solve_branch_master_equation(mode, branch, &sys.ramp, noise, &init, cfg)
                }
                NoiseModel::White { xi } => {
                    solve_white_master_equation(mode, branch, &sys.ramp, xi, &init, cfg)
                }
                NoiseModel::None => {
                    solve_white_master_equation(mode, branch, &sys.ramp, 0.0, &init, cfg)
                }
            };
            let plus = solve(BranchSpec::plus(sys.delta))?;
            let minus = solve(BranchSpec::minus(sys.delta))?;
            let f: Vec<f64> = plus
                .states
                .iter()
                .zip(&minus.states)
                .map(|(p, m)| factorized_mode_factor(p, m))
                .collect();
            let min_ev = plus.meta.min_rho_eigenvalue.min(minus.meta.min_rho_eigenvalue);
            let trace_defect = plus.meta.max_trace_defect.max(minus.meta.max_trace_defect);
            Ok((ModeFactors { f, d: None }, min_ev, trace_defect, 0.0))
        })
        .collect::<Result<Vec<_>>>()?;

    let min_ev = solved.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let trace_defect = solved.iter().map(|x| x.2).fold(0.0, f64::max);
    let factors = solved.into_iter().map(|x| x.0).collect();
    let series = assemble_decoherence(Route::Factorized, &sys.ramp, &cfg.dense_grid, factors)?;
    Ok(RunOutput {
        modes,
        series,
        diagnostics: SolverDiagnostics {
            min_rho_eigenvalue: Some(min_ev),
            positivity_warning: min_ev < crate::master::POSITIVITY_FLOOR,
            max_trace_defect: Some(trace_defect),
            ..Default::default()
        },
    })
}

/// Noise-averaged run through the exact cross-operator route: one solve per
/// mode, `F_k = |trace X_k|^2`, complex coherence retained.
pub fn cross_operator_series(
    sys: &System,
    noise: &NoiseModel,
    cfg: &IntegratorConfig,
) -> Result<RunOutput> {
    cfg.validate()?;
    noise.validate()?;
    let modes = k_grid(sys.n)?;
    let solved: Vec<(ModeFactors, f64)> = modes
        .par_iter()
        .map(|mode| -> Result<(ModeFactors, f64)> {
            let init = bare_ground(mode, &sys.ramp)?;
            let series = solve_cross_master_equation(
                mode,
                &sys.ramp,
                sys.delta,
                noise,
                &init.projector(),
                cfg,
            )?;
            let d = series.coherence();
            let f: Vec<f64> = d.iter().map(|z| z.norm_sqr()).collect();
            Ok((ModeFactors { f, d: Some(d) }, series.meta.max_spectral_norm))
        })
        .collect::<Result<Vec<_>>>()?;

    let max_norm = solved.iter().map(|x| x.1).fold(0.0, f64::max);
    let factors = solved.into_iter().map(|x| x.0).collect();
    let series = assemble_decoherence(Route::CrossOperator, &sys.ramp, &cfg.dense_grid, factors)?;
    Ok(RunOutput {
        modes,
        series,
        diagnostics: SolverDiagnostics {
            max_spectral_norm: Some(max_norm),
            ..Default::default()
        },
    })
}

/// Brute-force trajectory run on a uniform checkpoint grid.
pub fn trajectory_series(
    sys: &System,
    noise: &NoiseModel,
    ens: &EnsembleConfig,
    n_checkpoints: usize,
) -> Result<(RunOutput, TrajectoryRun)> {
    if n_checkpoints < 2 {
        return Err(Error::invalid("need at least 2 checkpoints"));
    }
    let modes = k_grid(sys.n)?;
    let inits: Vec<_> = modes
        .iter()
        .map(|m| bare_ground(m, &sys.ramp))
        .collect::<Result<Vec<_>>>()?;
    let (t0, t1) = (sys.ramp.t_i(), sys.ramp.t_f());
    let checkpoints: Vec<f64> = (0..n_checkpoints)
        .map(|j| t0 + (t1 - t0) * j as f64 / (n_checkpoints - 1) as f64)
        .collect();
    let run = trajectory_ensemble(&modes, &sys.ramp, sys.delta, noise, &inits, ens, &checkpoints)?;
    let factors: Vec<ModeFactors> = run
        .per_mode
        .iter()
        .map(|row| ModeFactors { f: row.iter().map(|e| e.mean).collect(), d: None })
        .collect();
    let series = assemble_decoherence(Route::Trajectory, &sys.ramp, &checkpoints, factors)?;
    Ok((
        RunOutput { modes, series, diagnostics: SolverDiagnostics::default() },
        run,
    ))
}

/// Re-run the noiseless pipeline from a deeper starting field and report the
/// largest difference in `D` over the shared part of the grid. Small values
/// certify that the default starting field is already in the adiabatic
/// regime.
pub fn starting_field_shift(sys: &System, cfg: &IntegratorConfig, h_i_alt: f64) -> Result<f64> {
    if h_i_alt >= sys.ramp.h_i {
        return Err(Error::invalid("alternative start must be deeper than the default"));
    }
    let base = noiseless_series(sys, cfg)?;

    // Extend the grid backwards at the default spacing, keeping every
    // default sample time so the comparison needs no interpolation.
    let alt_ramp = RampProtocol::new(sys.ramp.tau_q, h_i_alt, sys.ramp.h_f)?;
    let t_alt = alt_ramp.t_i();
    let t0 = sys.ramp.t_i();
    let spacing = cfg.dense_grid[1] - cfg.dense_grid[0];
    let n_extra = ((t0 - t_alt) / spacing).ceil() as usize;
    let mut grid = Vec::with_capacity(n_extra + cfg.dense_grid.len());
    for j in 0..n_extra {
        grid.push(t0 - (n_extra - j) as f64 * (t0 - t_alt) / n_extra as f64);
    }
    grid.extend_from_slice(&cfg.dense_grid);
    let alt_cfg = IntegratorConfig {
        rel_tol: cfg.rel_tol,
        abs_tol: cfg.abs_tol,
        max_step: cfg.max_step,
        dense_grid: grid,
    };
    let alt_sys = System { n: sys.n, delta: sys.delta, ramp: alt_ramp };
    let alt = noiseless_series(&alt_sys, &alt_cfg)?;

    let offset = alt.series.times.len() - base.series.times.len();
    let max_diff = base
        .series
        .d
        .iter()
        .enumerate()
        .map(|(j, &d)| (d - alt.series.d[offset + j]).abs())
        .fold(0.0, f64::max);
    Ok(max_diff)
}
