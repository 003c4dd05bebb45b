//! Stochastic-trajectory oracle: brute-force averaging over explicit noise
//! realizations.
//!
//! Each trajectory draws one noise path (shared by both coupling branches
//! when `common_noise` is set, which is the physical reading of a noisy lab
//! field), integrates both branch Schrödinger equations with the field held
//! piecewise constant over substeps, and records the per-mode coherence
//! `d_k = <phi+|phi->` at checkpoint times. Estimates carry jackknife
//! standard errors. Everything is derived from counter-based seeds, so the
//! result is a pure function of `(config, seed)` no matter how many threads
//! run the work.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{magnus_step_bound, rotation_for, GL_HI, GL_LO};
use crate::error::{Error, Result};
use crate::model::{BranchSpec, BranchState, KMode, RampProtocol, MODE_ENERGY_SCALE};
use crate::noise::{sample_ou_path_with, sample_white_path_with, stream_rng, NoiseModel};

const PURPOSE_TRAJ: u64 = 0x74726a; // "trj"

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Estimator {
    /// `|<d_k>|^2`: the noise-averaged interference visibility.
    Abs2OfMean,
    /// `<|d_k|^2>`: mean of per-realization factors.
    MeanOfAbs2,
}

#[derive(Clone, Copy, Debug)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub seed: u64,
    pub estimator: Estimator,
    pub common_noise: bool,
    /// Noise substep; `None` picks `min(tau_q / 2000, T_osc / 20)`.
    pub dt_noise: Option<f64>,
    /// Local tolerance for the unitary micro-steps inside one substep.
    pub rel_tol: f64,
}

impl EnsembleConfig {
    pub fn new(n_traj: usize, seed: u64) -> Self {
        EnsembleConfig {
            n_traj,
            seed,
            estimator: Estimator::Abs2OfMean,
            common_noise: true,
            dt_noise: None,
            rel_tol: 1e-8,
        }
    }
}

/// One scalar Monte Carlo estimate.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TrajectoryEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n_traj: usize,
    pub seed: u64,
}

/// Ensemble estimates per mode and for the mode product, on the checkpoint
/// grid.
#[derive(Clone, Debug)]
pub struct TrajectoryRun {
    pub times: Vec<f64>,
    /// `[mode][checkpoint]`.
    pub per_mode: Vec<Vec<TrajectoryEstimate>>,
    /// Product over modes, `[checkpoint]`.
    pub global: Vec<TrajectoryEstimate>,
    /// Ensemble-mean complex coherence per mode and checkpoint.
    pub mean_d: Vec<Vec<C64>>,
}

/// Default noise substep. White noise is approximated piecewise-constant,
/// so the substep must resolve the fastest oscillation; a colored path only
/// needs the hold to be short against its own correlation time (the unitary
/// micro-steps inside a substep handle the oscillation accuracy).
fn auto_dt(ramp: &RampProtocol, delta: f64, noise: &NoiseModel) -> f64 {
    let base = ramp.tau_q / 2000.0;
    match *noise {
        NoiseModel::Ou { tau_n, .. } => base.min(tau_n / 20.0),
        _ => {
            let a_max = ramp.h_i.abs().max(ramp.h_f.abs()) + delta + 1.0;
            let e_max = MODE_ENERGY_SCALE * a_max.hypot(1.0);
            let t_osc = std::f64::consts::PI / e_max;
            base.min(t_osc / 20.0)
        }
    }
}

/// Average `|<d_k>|^2` (or `<|d_k|^2>`) over explicit noise realizations.
///
/// `inits[i]` is the shared initial state of both branches of `modes[i]`.
/// `checkpoints` must be uniform so the exact noise discretization applies.
pub fn trajectory_ensemble(
    modes: &[KMode],
    ramp: &RampProtocol,
    delta: f64,
    noise: &NoiseModel,
    inits: &[BranchState],
    ens: &EnsembleConfig,
    checkpoints: &[f64],
) -> Result<TrajectoryRun> {
    noise.validate()?;
    if ens.n_traj < 2 {
        return Err(Error::invalid("ensemble needs at least 2 trajectories"));
    }
    if modes.is_empty() || modes.len() != inits.len() {
        return Err(Error::invalid("modes and initial states must align"));
    }
    if checkpoints.len() < 2 {
        return Err(Error::invalid("need at least 2 checkpoint times"));
    }
    let dt_cp = checkpoints[1] - checkpoints[0];
    if !(dt_cp > 0.0)
        || !checkpoints
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt_cp).abs() < 1e-9 * dt_cp)
    {
        return Err(Error::invalid("checkpoints must be uniform and increasing"));
    }

    let dt_target = ens.dt_noise.unwrap_or_else(|| auto_dt(ramp, delta, noise));
    let n_sub = (dt_cp / dt_target).ceil().max(1.0) as usize;
    let n_cp = checkpoints.len();
    let m_traj = ens.n_traj;

    // d_all[mode][traj][checkpoint]
    let d_all: Vec<Vec<Vec<C64>>> = modes
        .par_iter()
        .enumerate()
        .map(|(mode_idx, mode)| {
            (0..m_traj)
                .into_par_iter()
                .map(|m| {
                    one_trajectory(
                        mode,
                        ramp,
                        delta,
                        noise,
                        &inits[mode_idx],
                        ens,
                        checkpoints,
                        n_sub,
                        mode_idx,
                        m,
                    )
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    // Per-mode estimates with jackknife errors, in deterministic order.
    let mut per_mode = Vec::with_capacity(modes.len());
    let mut mean_d = Vec::with_capacity(modes.len());
    // theta[mode][traj][cp]: leave-one-out estimates, reused for the global
    // product jackknife.
    let mut loo: Vec<Vec<Vec<f64>>> = Vec::with_capacity(modes.len());
    for d_mode in &d_all {
        let mut est_row = Vec::with_capacity(n_cp);
        let mut mean_row = Vec::with_capacity(n_cp);
        let mut loo_mode = vec![vec![0.0; n_cp]; m_traj];
        for cp in 0..n_cp {
            let values: Vec<C64> = d_mode.iter().map(|traj| traj[cp]).collect();
            let (est, loo_cp, mean_c) = estimate(&values, ens.estimator, ens.seed, m_traj);
            est_row.push(est);
            mean_row.push(mean_c);
            for (m, v) in loo_cp.into_iter().enumerate() {
                loo_mode[m][cp] = v;
            }
        }
        per_mode.push(est_row);
        mean_d.push(mean_row);
        loo.push(loo_mode);
    }

    // Global product and its jackknife over ensemble members.
    let mut global = Vec::with_capacity(n_cp);
    for cp in 0..n_cp {
        let full: f64 = per_mode.iter().map(|row| row[cp].mean).product();
        let mut acc = 0.0;
        let mut loo_vals = Vec::with_capacity(m_traj);
        for m in 0..m_traj {
            let v: f64 = loo.iter().map(|mode_rows| mode_rows[m][cp]).product();
            loo_vals.push(v);
            acc += v;
        }
        let loo_mean = acc / m_traj as f64;
        let var: f64 = loo_vals.iter().map(|v| (v - loo_mean) * (v - loo_mean)).sum::<f64>()
            * (m_traj as f64 - 1.0)
            / m_traj as f64;
        global.push(TrajectoryEstimate {
            mean: full,
            std_err: var.max(0.0).sqrt(),
            n_traj: m_traj,
            seed: ens.seed,
        });
    }

    Ok(TrajectoryRun { times: checkpoints.to_vec(), per_mode, global, mean_d })
}

/// Estimate + leave-one-out values + complex mean for one (mode, time).
fn estimate(
    values: &[C64],
    estimator: Estimator,
    seed: u64,
    m: usize,
) -> (TrajectoryEstimate, Vec<f64>, C64) {
    let mf = m as f64;
    let sum: C64 = values.iter().sum();
    let sum_abs2: f64 = values.iter().map(|d| d.norm_sqr()).sum();
    let mean_c = sum / mf;
    let (full, loo): (f64, Vec<f64>) = match estimator {
        Estimator::Abs2OfMean => {
            let full = mean_c.norm_sqr();
            let loo = values
                .iter()
                .map(|d| ((sum - d) / (mf - 1.0)).norm_sqr())
                .collect();
            (full, loo)
        }
        Estimator::MeanOfAbs2 => {
            let full = sum_abs2 / mf;
            let loo = values
                .iter()
                .map(|d| (sum_abs2 - d.norm_sqr()) / (mf - 1.0))
                .collect();
            (full, loo)
        }
    };
    let loo_mean: f64 = loo.iter().sum::<f64>() / mf;
    let var: f64 =
        loo.iter().map(|v| (v - loo_mean) * (v - loo_mean)).sum::<f64>() * (mf - 1.0) / mf;
    (
        TrajectoryEstimate { mean: full, std_err: var.max(0.0).sqrt(), n_traj: m, seed },
        loo,
        mean_c,
    )
}

#[allow(clippy::too_many_arguments)]
fn one_trajectory(
    mode: &KMode,
    ramp: &RampProtocol,
    delta: f64,
    noise: &NoiseModel,
    init: &BranchState,
    ens: &EnsembleConfig,
    checkpoints: &[f64],
    n_sub: usize,
    mode_idx: usize,
    m: usize,
) -> Result<Vec<C64>> {
    let n_cp = checkpoints.len();
    let n_steps = (n_cp - 1) * n_sub;
    let dt = (checkpoints[n_cp - 1] - checkpoints[0]) / n_steps as f64;

    let path_for = |branch_tag: u64| -> Result<Vec<f64>> {
        let mut rng = stream_rng(
            ens.seed,
            &[PURPOSE_TRAJ, mode_idx as u64, m as u64, branch_tag],
        );
        match *noise {
            NoiseModel::None => Ok(vec![0.0; n_steps]),
            NoiseModel::White { xi } => Ok(sample_white_path_with(xi, n_steps, dt, &mut rng)),
            NoiseModel::Ou { .. } => {
                // Node grid with one extra point; hold left values.
                let nodes: Vec<f64> = (0..=n_steps)
                    .map(|j| checkpoints[0] + j as f64 * dt)
                    .collect();
                let mut p = sample_ou_path_with(noise, &nodes, &mut rng)?;
                p.truncate(n_steps);
                Ok(p)
            }
        }
    };
    let s_plus = path_for(0)?;
    let s_minus = if ens.common_noise { s_plus.clone() } else { path_for(1)? };

    let cos_k = mode.k.cos();
    let scale = MODE_ENERGY_SCALE;
    let b = scale * mode.delta_k;
    let tau_q = ramp.tau_q;
    let (mut vp, mut up) = (init.v, init.u);
    let (mut vm, mut um) = (init.v, init.u);
    let mut out = Vec::with_capacity(n_cp);
    out.push(BranchState::new(vp, up).overlap(&BranchState::new(vm, um)));

    let mut t = checkpoints[0];
    let mut step_idx = 0usize;
    for _cp in 1..n_cp {
        for _ in 0..n_sub {
            let a_plus = move |tt: f64, s: f64| -scale * (tt / tau_q + s + delta - cos_k);
            let a_minus = move |tt: f64, s: f64| -scale * (tt / tau_q + s - delta - cos_k);
            advance(
                &mut vp,
                &mut up,
                |tt| a_plus(tt, s_plus[step_idx]),
                b,
                scale / tau_q,
                t,
                dt,
                ens.rel_tol,
            );
            advance(
                &mut vm,
                &mut um,
                |tt| a_minus(tt, s_minus[step_idx]),
                b,
                scale / tau_q,
                t,
                dt,
                ens.rel_tol,
            );
            t += dt;
            step_idx += 1;
        }
        out.push(BranchState::new(vp, up).overlap(&BranchState::new(vm, um)));
    }
    Ok(out)
}

/// Unitary micro-steps across one substep of length `dt`.
#[allow(clippy::too_many_arguments)]
fn advance<F: Fn(f64) -> f64>(
    v: &mut C64,
    u: &mut C64,
    a: F,
    b: f64,
    a_rate: f64,
    t0: f64,
    dt: f64,
    rel_tol: f64,
) {
    let e_loc = a(t0).hypot(b);
    let h_bound = magnus_step_bound(e_loc, b, a_rate, rel_tol);
    let n_inner = (dt / h_bound).ceil().max(1.0) as usize;
    let h = dt / n_inner as f64;
    let mut t = t0;
    for _ in 0..n_inner {
        let a1 = a(t + GL_LO * h);
        let a2 = a(t + GL_HI * h);
        let (wz, wx, wy) = rotation_for(h, a1, a2, b);
        crate::dynamics::apply_rotation(v, u, wz, wx, wy);
        t += h;
    }
}

/// Branch-averaged second moments at the final checkpoint, with standard
/// errors: `<|v|^2>`, `<|u|^2>`, `<v u*>`. Used to cross-check the branch
/// master equation against brute-force averaging.
pub fn branch_moments(
    mode: &KMode,
    branch: BranchSpec,
    ramp: &RampProtocol,
    noise: &NoiseModel,
    init: &BranchState,
    ens: &EnsembleConfig,
    checkpoints: &[f64],
) -> Result<BranchMoments> {
    noise.validate()?;
    let n_cp = checkpoints.len();
    if n_cp < 2 {
        return Err(Error::invalid("need at least 2 checkpoint times"));
    }
    let dt_cp = checkpoints[1] - checkpoints[0];
    let dt_target = ens.dt_noise.unwrap_or_else(|| auto_dt(ramp, branch.delta, noise));
    let n_sub = (dt_cp / dt_target).ceil().max(1.0) as usize;
    let n_steps = (n_cp - 1) * n_sub;
    let dt = (checkpoints[n_cp - 1] - checkpoints[0]) / n_steps as f64;
    let cos_k = mode.k.cos();
    let scale = MODE_ENERGY_SCALE;
    let b = scale * mode.delta_k;
    let tau_q = ramp.tau_q;
    let shift = branch.shift();

    let finals: Vec<(f64, f64, C64)> = (0..ens.n_traj)
        .into_par_iter()
        .map(|m| -> Result<(f64, f64, C64)> {
            let mut rng = stream_rng(ens.seed, &[PURPOSE_TRAJ, 0, m as u64, 0]);
            let path: Vec<f64> = match *noise {
                NoiseModel::None => vec![0.0; n_steps],
                NoiseModel::White { xi } => sample_white_path_with(xi, n_steps, dt, &mut rng),
                NoiseModel::Ou { .. } => {
                    let nodes: Vec<f64> =
                        (0..=n_steps).map(|j| checkpoints[0] + j as f64 * dt).collect();
                    let mut p = sample_ou_path_with(noise, &nodes, &mut rng)?;
                    p.truncate(n_steps);
                    p
                }
            };
            let (mut v, mut u) = (init.v, init.u);
            let mut t = checkpoints[0];
            for (j, s) in path.iter().enumerate() {
                let _ = j;
                advance(
                    &mut v,
                    &mut u,
                    |tt| -scale * (tt / tau_q + s + shift - cos_k),
                    b,
                    scale / tau_q,
                    t,
                    dt,
                    ens.rel_tol,
                );
                t += dt;
            }
            Ok((v.norm_sqr(), u.norm_sqr(), v * u.conj()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mf = ens.n_traj as f64;
    let mean_sq = |f: &dyn Fn(&(f64, f64, C64)) -> f64| {
        let mean = finals.iter().map(f).sum::<f64>() / mf;
        let var = finals.iter().map(|x| (f(x) - mean) * (f(x) - mean)).sum::<f64>() / (mf - 1.0);
        (mean, (var / mf).sqrt())
    };
    let (pv, pv_se) = mean_sq(&|x: &(f64, f64, C64)| x.0);
    let (pu, pu_se) = mean_sq(&|x: &(f64, f64, C64)| x.1);
    let (cr, cr_se) = mean_sq(&|x: &(f64, f64, C64)| x.2.re);
    let (ci, ci_se) = mean_sq(&|x: &(f64, f64, C64)| x.2.im);
    Ok(BranchMoments {
        pop_v: (pv, pv_se),
        pop_u: (pu, pu_se),
        coh_vu: (C64::new(cr, ci), cr_se.hypot(ci_se)),
    })
}

#[derive(Clone, Copy, Debug)]
pub struct BranchMoments {
    pub pop_v: (f64, f64),
    pub pop_u: (f64, f64),
    /// (`<v u*>`, combined standard error of the two quadratures).
    pub coh_vu: (C64, f64),
}
