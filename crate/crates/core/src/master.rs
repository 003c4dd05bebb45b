//! Noise-averaged dynamics of single modes.
//!
//! The memory-kernel equation for the colored process is never discretized
//! as an integro-differential equation; an auxiliary accumulator `G` turns
//! it into a local ODE pair. Two closures of that pair are implemented,
//! differing in whether the accumulator co-rotates with the drift:
//!
//! ```text
//!   branch (convolution) pair:
//!     drho/dt = -i [H0(t), rho] - (xi^2 / 2 tau_n) [H1, G],
//!     dG/dt   = -G / tau_n + [H1, rho],
//!
//!   covariant pair (adds the drift rotation):
//!     dG/dt   = -G / tau_n - i [H0(t), G] + [H1, rho],
//! ```
//!
//! with `H1 = -MODE_ENERGY_SCALE sigma_z`. The two coincide exactly when
//! the coupling commutes with the Hamiltonian (pure dephasing) and in the
//! fast-noise limit. They differ for slow noise on gapped modes: the drift
//! commutator makes the accumulator respond at the system's Bohr
//! frequencies, which suppresses noise-induced transitions across gaps
//! larger than `1/tau_n` (the Lorentzian filter of the colored spectrum).
//! The covariant pair reproduces brute-force noise averaging to Monte Carlo
//! precision in every regime exercised by the test suite; the convolution
//! pair instead applies near-white relaxation to those transitions (see
//! `tests/oracles.rs`, which pins both behaviours).
//!
//! The branch solver [`solve_branch_master_equation`] integrates the
//! convolution pair: it is the classic per-branch averaging pipeline whose
//! slow-noise critical scaling in `xi^2 / tau_n` downstream analyses fit.
//! Its covariant sibling is available for exactness-sensitive work. The
//! cross-operator solver always uses the covariant form, because its trace
//! is the measured qubit coherence and is held to brute-force averaging by
//! the validation suite.
//!
//! The white-noise limit of either pair is the double-commutator equation
//! `drho/dt = -i [H0, rho] - (xi^2 / 2) [H1, [H1, rho]]`.
//!
//! The cross operator `X = < |phi_minus><phi_plus| >` sees the same noise
//! realization on both branches through the same `H1`; only the drift
//! changes to `-i (H0_minus X - X H0_plus)`. Its trace is the averaged
//! qubit coherence.
//!
//! Hermiticity of `rho` (and anti-Hermiticity of `G`) is enforced by
//! construction: the solvers evolve the independent real parameters only.
//! The trace is conserved identically by the commutator structure. The
//! colored-noise equations are not guaranteed completely positive at
//! intermediate times; eigenvalue excursions are recorded in the solve
//! metadata and never clipped.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::integrate::{dopri5, rk4_fixed, IntegratorConfig};
use crate::mat2::Mat2;
use crate::model::{BranchSpec, BranchState, KMode, RampProtocol, MODE_ENERGY_SCALE};
use crate::noise::NoiseModel;

/// Noise-averaged state of one branch: density matrix plus its memory
/// accumulator.
#[derive(Clone, Copy, Debug)]
pub struct ModeDensity {
    pub rho: Mat2,
    pub gamma: Mat2,
}

/// Diagnostics accumulated over one solve.
#[derive(Clone, Copy, Debug, Default)]
pub struct SolveMeta {
    /// Most negative eigenvalue of `rho` seen anywhere in the run.
    pub min_rho_eigenvalue: f64,
    /// Set when the eigenvalue floor `-1e-6` was crossed.
    pub positivity_warning: bool,
    /// Largest `|trace(rho) - 1|` seen at sample times.
    pub max_trace_defect: f64,
}

#[derive(Clone, Debug)]
pub struct DensitySeries {
    pub times: Vec<f64>,
    pub states: Vec<ModeDensity>,
    pub meta: SolveMeta,
}

/// Positivity excursions beyond this are flagged in the metadata.
pub const POSITIVITY_FLOOR: f64 = -1e-6;

// State packing for the branch equations. rho = [[p, c], [c*, q]] is
// Hermitian; G = [[i gam, g], [-g*, -i gam]] is traceless anti-Hermitian
// (its trace decays freely from zero and never grows).
// Branch OU state: [p, q, Re c, Im c, gam, Re g, Im g].
// Branch white state: [p, q, Re c, Im c].

fn branch_density(y: &[f64]) -> ModeDensity {
    let c = C64::new(y[2], y[3]);
    let (gam, g) = if y.len() > 4 {
        (y[4], C64::new(y[5], y[6]))
    } else {
        (0.0, C64::new(0.0, 0.0))
    };
    ModeDensity {
        rho: Mat2::new(C64::new(y[0], 0.0), c, c.conj(), C64::new(y[1], 0.0)),
        gamma: Mat2::new(C64::new(0.0, gam), g, -g.conj(), C64::new(0.0, -gam)),
    }
}

fn min_eig(p: f64, q: f64, cr: f64, ci: f64) -> f64 {
    let mid = 0.5 * (p + q);
    let rad = (0.25 * (p - q) * (p - q) + cr * cr + ci * ci).sqrt();
    mid - rad
}

/// Correlation times below this resolve the accumulator decay with a pinned
/// RK4 step (the adaptive controller handles the fast decay poorly); above
/// it the dynamics is not stiff and the embedded pair is far cheaper.
const OU_STIFF_TAU_N: f64 = 0.5;

/// Integration engine for the colored-noise pairs.
#[derive(Clone, Copy, Debug)]
pub(crate) enum OuEngine {
    /// Fixed RK4 with the given step.
    Stiff { h_step: f64 },
    /// Embedded adaptive pair.
    Adaptive { rel_tol: f64, abs_tol: f64 },
}

fn ou_engine(cfg: &IntegratorConfig, e_max: f64, tau_n: f64) -> OuEngine {
    if tau_n < OU_STIFF_TAU_N {
        OuEngine::Stiff { h_step: ou_fixed_step(cfg, e_max, tau_n) }
    } else {
        OuEngine::Adaptive { rel_tol: cfg.rel_tol, abs_tol: cfg.abs_tol }
    }
}

/// Fixed RK4 step for the stiff colored-noise regime: resolves both the
/// local Larmor frequency (interpreting `rel_tol` as a global accuracy
/// target) and the memory time scale.
fn ou_fixed_step(cfg: &IntegratorConfig, e_max: f64, tau_n: f64) -> f64 {
    let span = cfg.t_end() - cfg.t_start();
    let omega = (2.0 * e_max).max(1e-6);
    let h_acc = (120.0 * cfg.rel_tol / (span * omega.powi(5))).powf(0.25);
    let h = h_acc.min(tau_n / 10.0);
    match cfg.max_step {
        Some(hm) => h.min(hm),
        None => h,
    }
}

fn ramp_e_max(ramp: &RampProtocol, shift: f64, cos_k: f64, delta_k: f64) -> f64 {
    let a_i = -(ramp.h_i + shift - cos_k);
    let a_f = -(ramp.h_f + shift - cos_k);
    MODE_ENERGY_SCALE * a_i.abs().max(a_f.abs()).hypot(delta_k)
}

/// Colored-noise master equation for one branch (convolution pair),
/// integrated from the given initial pure state (density matrix = its
/// projector, accumulator zero).
pub fn solve_branch_master_equation(
    mode: &KMode,
    branch: BranchSpec,
    ramp: &RampProtocol,
    noise: &NoiseModel,
    init: &BranchState,
    cfg: &IntegratorConfig,
) -> Result<DensitySeries> {
    solve_branch_dispatch(mode, branch, ramp, noise, init, cfg, false)
}

/// Covariant variant of the branch equation (accumulator co-rotates with
/// the drift); matches brute-force noise averaging in every regime.
pub fn solve_branch_master_equation_covariant(
    mode: &KMode,
    branch: BranchSpec,
    ramp: &RampProtocol,
    noise: &NoiseModel,
    init: &BranchState,
    cfg: &IntegratorConfig,
) -> Result<DensitySeries> {
    solve_branch_dispatch(mode, branch, ramp, noise, init, cfg, true)
}

fn solve_branch_dispatch(
    mode: &KMode,
    branch: BranchSpec,
    ramp: &RampProtocol,
    noise: &NoiseModel,
    init: &BranchState,
    cfg: &IntegratorConfig,
    covariant: bool,
) -> Result<DensitySeries> {
    let (xi, tau_n) = match *noise {
        NoiseModel::Ou { xi, tau_n } => (xi, tau_n),
        _ => {
            return Err(Error::invalid(
                "branch master equation requires the colored (OU) noise model",
            ))
        }
    };
    noise.validate()?;
    cfg.validate()?;
    let shift = branch.shift();
    let cos_k = mode.k.cos();
    let tau_q = ramp.tau_q;
    let scale = MODE_ENERGY_SCALE;
    let a = move |t: f64| -scale * (t / tau_q + shift - cos_k);
    let engine = ou_engine(cfg, ramp_e_max(ramp, shift, cos_k, mode.delta_k), tau_n);
    solve_branch_ou_impl(
        &a,
        scale * mode.delta_k,
        scale,
        xi,
        tau_n,
        init,
        &cfg.dense_grid,
        engine,
        covariant,
        1.0,
    )
}

/// Internals shared with the tests; the mode generator is `a(t) sz + b sx`
/// and the noise couples through `H1 = -nu sz`.
///
/// `covariant` selects whether the accumulator co-rotates with the drift.
/// `feedback_sign` scales the accumulator feedback term and is 1 outside
/// the tests (they inject -1 to prove the white-limit check catches a sign
/// error).
#[allow(clippy::too_many_arguments)]
pub(crate) fn solve_branch_ou_impl<F: Fn(f64) -> f64>(
    a: &F,
    b: f64,
    nu: f64,
    xi: f64,
    tau_n: f64,
    init: &BranchState,
    grid: &[f64],
    engine: OuEngine,
    covariant: bool,
    feedback_sign: f64,
) -> Result<DensitySeries> {
    let rho0 = init.projector();
    let y0 = [
        rho0.m00.re,
        rho0.m11.re,
        rho0.m01.re,
        rho0.m01.im,
        0.0,
        0.0,
        0.0,
    ];
    let fb = feedback_sign * nu * xi * xi / tau_n;
    let src = 2.0 * nu;
    let rot = if covariant { 1.0 } else { 0.0 };
    let sys = move |t: f64, y: &[f64; 7], dy: &mut [f64; 7]| {
        let at = a(t);
        let (p, q, cr, ci, gam, gr, gi) = (y[0], y[1], y[2], y[3], y[4], y[5], y[6]);
        dy[0] = -2.0 * b * ci;
        dy[1] = 2.0 * b * ci;
        dy[2] = 2.0 * at * ci + fb * gr;
        dy[3] = -(2.0 * at * cr + b * (q - p)) + fb * gi;
        // Accumulator: decay, drift rotation, and the [H1, rho] source.
        dy[4] = -gam / tau_n + rot * 2.0 * b * gr;
        dy[5] = -gr / tau_n + rot * (2.0 * at * gi - 2.0 * b * gam) - src * cr;
        dy[6] = -gi / tau_n + rot * (-2.0 * at * gr) - src * ci;
    };
    let (out, min_ev) = match engine {
        OuEngine::Stiff { h_step } => {
            let mut min_ev = f64::INFINITY;
            let out = rk4_fixed(&sys, y0, grid, h_step, |_t, y| {
                let ev = min_eig(y[0], y[1], y[2], y[3]);
                if ev < min_ev {
                    min_ev = ev;
                }
            })?;
            (out, min_ev)
        }
        OuEngine::Adaptive { rel_tol, abs_tol } => {
            let out = dopri5(&sys, y0, grid, rel_tol, abs_tol, None)?;
            let min_ev = out
                .iter()
                .map(|y| min_eig(y[0], y[1], y[2], y[3]))
                .fold(f64::INFINITY, f64::min);
            (out, min_ev)
        }
    };
    let meta = meta_from(min_ev, &out);
    Ok(DensitySeries {
        times: grid.to_vec(),
        states: out.iter().map(|y| branch_density(y)).collect(),
        meta,
    })
}

/// White-noise master equation for one branch (completely positive pure
/// dephasing in the drive-field direction).
pub fn solve_white_master_equation(
    mode: &KMode,
    branch: BranchSpec,
    ramp: &RampProtocol,
    xi: f64,
    init: &BranchState,
    cfg: &IntegratorConfig,
) -> Result<DensitySeries> {
    if xi < 0.0 || !xi.is_finite() {
        return Err(Error::invalid(format!("noise strength must be >= 0, got {xi}")));
    }
    cfg.validate()?;
    let shift = branch.shift();
    let cos_k = mode.k.cos();
    let tau_q = ramp.tau_q;
    let scale = MODE_ENERGY_SCALE;
    let b = scale * mode.delta_k;
    // Off-diagonal damping 2 nu^2 xi^2 from the double commutator with
    // H1 = -nu sz.
    let rate = 2.0 * scale * scale * xi * xi;
    let sys = move |t: f64, y: &[f64; 4], dy: &mut [f64; 4]| {
        let at = -scale * (t / tau_q + shift - cos_k);
        let (p, q, cr, ci) = (y[0], y[1], y[2], y[3]);
        dy[0] = -2.0 * b * ci;
        dy[1] = 2.0 * b * ci;
        dy[2] = 2.0 * at * ci - rate * cr;
        dy[3] = -(2.0 * at * cr + b * (q - p)) - rate * ci;
    };
    let rho0 = init.projector();
    let y0 = [rho0.m00.re, rho0.m11.re, rho0.m01.re, rho0.m01.im];
    let out = dopri5(&sys, y0, &cfg.dense_grid, cfg.rel_tol, cfg.abs_tol, cfg.max_step)?;
    let min_ev = out
        .iter()
        .map(|y| min_eig(y[0], y[1], y[2], y[3]))
        .fold(f64::INFINITY, f64::min);
    let meta = meta_from(min_ev, &out);
    Ok(DensitySeries {
        times: cfg.dense_grid.clone(),
        states: out.iter().map(|y| branch_density(y)).collect(),
        meta,
    })
}

fn meta_from<const N: usize>(min_ev: f64, out: &[[f64; N]]) -> SolveMeta {
    let max_trace_defect = out
        .iter()
        .map(|y| (y[0] + y[1] - 1.0).abs())
        .fold(0.0, f64::max);
    SolveMeta {
        min_rho_eigenvalue: min_ev,
        positivity_warning: min_ev < POSITIVITY_FLOOR,
        max_trace_defect,
    }
}

/// Assemble the factorized per-mode decoherence factor from the two
/// branch-averaged densities:
/// `F = rho+_uu rho-_uu + rho+_vv rho-_vv + 2 Re[rho+_vu rho-_uv]`.
pub fn factorized_mode_factor(plus: &ModeDensity, minus: &ModeDensity) -> f64 {
    let term_u = plus.rho.m11.re * minus.rho.m11.re;
    let term_v = plus.rho.m00.re * minus.rho.m00.re;
    let cross = (plus.rho.m01 * minus.rho.m10).re;
    term_u + term_v + 2.0 * cross
}

/// Noise-averaged cross operator of one mode at one time: the averaged
/// outer product of the two branch states, plus its memory accumulator
/// (zero on the white and noiseless paths).
#[derive(Clone, Copy, Debug)]
pub struct CrossOperator {
    pub x: Mat2,
    pub gamma_x: Mat2,
}

/// Cross-operator evolution of one mode and its diagnostics.
#[derive(Clone, Debug)]
pub struct CrossSeries {
    pub times: Vec<f64>,
    pub states: Vec<CrossOperator>,
    pub meta: CrossMeta,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct CrossMeta {
    /// Largest spectral norm of `X` seen at sample times (contractivity
    /// check; must stay at or below one).
    pub max_spectral_norm: f64,
}

impl CrossSeries {
    /// Averaged qubit coherence contribution of this mode: `trace X(t)`.
    pub fn coherence(&self) -> Vec<C64> {
        self.states.iter().map(|s| s.x.trace()).collect()
    }
}

// `[H1, M]` with `H1 = -nu sigma_z` at nu = MODE_ENERGY_SCALE: zero
// diagonal, off-diagonals scaled.
#[inline]
fn comm_h1(m: &Mat2) -> Mat2 {
    Mat2::new(
        C64::new(0.0, 0.0),
        (-2.0 * MODE_ENERGY_SCALE) * m.m01,
        (2.0 * MODE_ENERGY_SCALE) * m.m10,
        C64::new(0.0, 0.0),
    )
}

fn pack_mat(m: &Mat2, out: &mut [f64]) {
    out[0] = m.m00.re;
    out[1] = m.m00.im;
    out[2] = m.m01.re;
    out[3] = m.m01.im;
    out[4] = m.m10.re;
    out[5] = m.m10.im;
    out[6] = m.m11.re;
    out[7] = m.m11.im;
}

fn unpack_mat(y: &[f64]) -> Mat2 {
    Mat2::new(
        C64::new(y[0], y[1]),
        C64::new(y[2], y[3]),
        C64::new(y[4], y[5]),
        C64::new(y[6], y[7]),
    )
}

/// Evolve the cross operator from `init_x = |g_minus><g_plus|` under the
/// requested noise model. `NoiseModel::None` integrates the bare drift and
/// reproduces the pure-state overlap.
pub fn solve_cross_master_equation(
    mode: &KMode,
    ramp: &RampProtocol,
    delta: f64,
    noise: &NoiseModel,
    init_x: &Mat2,
    cfg: &IntegratorConfig,
) -> Result<CrossSeries> {
    noise.validate()?;
    cfg.validate()?;
    if delta < 0.0 {
        return Err(Error::invalid("coupling delta must be >= 0"));
    }
    let cos_k = mode.k.cos();
    let tau_q = ramp.tau_q;
    let scale = MODE_ENERGY_SCALE;
    let b = scale * mode.delta_k;
    // Branch-resolved diagonal coefficients of H0.
    let a_minus = move |t: f64| -scale * (t / tau_q - delta - cos_k);
    let a_plus = move |t: f64| -scale * (t / tau_q + delta - cos_k);
    let minus_i = C64::new(0.0, -1.0);

    let drift = move |t: f64, x: &Mat2| -> Mat2 {
        let hm = Mat2::new(
            C64::new(a_minus(t), 0.0),
            C64::new(b, 0.0),
            C64::new(b, 0.0),
            C64::new(-a_minus(t), 0.0),
        );
        let hp = Mat2::new(
            C64::new(a_plus(t), 0.0),
            C64::new(b, 0.0),
            C64::new(b, 0.0),
            C64::new(-a_plus(t), 0.0),
        );
        (hm * *x - *x * hp) * minus_i
    };

    let states: Vec<CrossOperator> = match *noise {
        NoiseModel::Ou { xi, tau_n } => {
            let coupl = xi * xi / (2.0 * tau_n);
            let sys = move |t: f64, y: &[f64; 16], dy: &mut [f64; 16]| {
                let x = unpack_mat(&y[0..8]);
                let g = unpack_mat(&y[8..16]);
                let dx = drift(t, &x) - comm_h1(&g).scale(coupl);
                // The accumulator rotates with the same two-sided drift.
                let dg = drift(t, &g) + comm_h1(&x) - g.scale(1.0 / tau_n);
                pack_mat(&dx, &mut dy[0..8]);
                pack_mat(&dg, &mut dy[8..16]);
            };
            let mut y0 = [0.0; 16];
            pack_mat(init_x, &mut y0[0..8]);
            let e_max = ramp_e_max(ramp, delta, cos_k, mode.delta_k);
            let out = match ou_engine(cfg, e_max, tau_n) {
                OuEngine::Stiff { h_step } => {
                    rk4_fixed(&sys, y0, &cfg.dense_grid, h_step, |_, _| {})?
                }
                OuEngine::Adaptive { rel_tol, abs_tol } => {
                    dopri5(&sys, y0, &cfg.dense_grid, rel_tol, abs_tol, cfg.max_step)?
                }
            };
            out.iter()
                .map(|y| CrossOperator {
                    x: unpack_mat(&y[0..8]),
                    gamma_x: unpack_mat(&y[8..16]),
                })
                .collect()
        }
        NoiseModel::White { xi } => {
            let half_rate = 0.5 * xi * xi;
            let sys = move |t: f64, y: &[f64; 8], dy: &mut [f64; 8]| {
                let x = unpack_mat(y);
                let dx = drift(t, &x) - comm_h1(&comm_h1(&x)).scale(half_rate);
                pack_mat(&dx, dy);
            };
            let mut y0 = [0.0; 8];
            pack_mat(init_x, &mut y0);
            let out = dopri5(&sys, y0, &cfg.dense_grid, cfg.rel_tol, cfg.abs_tol, cfg.max_step)?;
            out.iter()
                .map(|y| CrossOperator { x: unpack_mat(y), gamma_x: Mat2::zero() })
                .collect()
        }
        NoiseModel::None => {
            let sys = move |t: f64, y: &[f64; 8], dy: &mut [f64; 8]| {
                let x = unpack_mat(y);
                let dx = drift(t, &x);
                pack_mat(&dx, dy);
            };
            let mut y0 = [0.0; 8];
            pack_mat(init_x, &mut y0);
            let out = dopri5(&sys, y0, &cfg.dense_grid, cfg.rel_tol, cfg.abs_tol, cfg.max_step)?;
            out.iter()
                .map(|y| CrossOperator { x: unpack_mat(y), gamma_x: Mat2::zero() })
                .collect()
        }
    };

    let max_spectral_norm =
        states.iter().map(|s| s.x.spectral_norm()).fold(0.0, f64::max);
    Ok(CrossSeries {
        times: cfg.dense_grid.clone(),
        states,
        meta: CrossMeta { max_spectral_norm },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::evolve_schrodinger;
    use crate::model::{ground_state, k_grid};

    fn cfg_for(ramp: &RampProtocol, points: usize, rel: f64) -> IntegratorConfig {
        IntegratorConfig::uniform(ramp, points).unwrap().with_tols(rel, rel * 1e-2)
    }

    #[test]
    fn ou_with_zero_strength_matches_pure_state() {
        let modes = k_grid(16).unwrap();
        let mode = &modes[5];
        let ramp = RampProtocol::new(5.0, -3.0, 3.0).unwrap();
        let cfg = cfg_for(&ramp, 61, 1e-8);
        let branch = BranchSpec::plus(0.02);
        let init = ground_state(mode, ramp.h_i, branch).unwrap();
        let noise = NoiseModel::Ou { xi: 0.0, tau_n: 1.0 };
        let series =
            solve_branch_master_equation(mode, branch, &ramp, &noise, &init, &cfg).unwrap();
        let evo = evolve_schrodinger(mode, branch, &ramp, &init, &cfg).unwrap();
        for (md, st) in series.states.iter().zip(&evo.states) {
            let proj = st.projector();
            assert!((md.rho - proj).max_abs() < 1e-7);
        }
        assert!(series.meta.max_trace_defect < 1e-12);
        assert!(series.meta.min_rho_eigenvalue > -1e-8);
    }

    #[test]
    fn pure_dephasing_matches_two_variable_closed_form() {
        // delta_k = 0: the off-diagonal obeys the scalar pair
        // c' = fb g, g' = -g/tau_n - 2c (in the frame rotating with the
        // field), i.e. c'' + c'/tau_n + (2 xi^2/tau_n) c = 0 with c'(0) = 0,
        // solved by c(t) = c0 (s2 e^{s1 t} - s1 e^{s2 t}) / (s2 - s1).
        // Checked at zero field (where c itself is that solution) and at a
        // constant nonzero field (where only |c| follows it).
        let xi = 0.05_f64;
        let tau_n = 2.0_f64;
        let nu = MODE_ENERGY_SCALE;
        let init = BranchState::new(
            C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        );
        let grid: Vec<f64> = (0..201).map(|j| j as f64 * 0.1).collect();
        let disc = (1.0 / (tau_n * tau_n) - 8.0 * nu * nu * xi * xi / tau_n).sqrt();
        let s1 = 0.5 * (-1.0 / tau_n + disc);
        let s2 = 0.5 * (-1.0 / tau_n - disc);
        for field in [0.0, 0.7] {
            let a = move |_t: f64| field;
            let series =
                solve_branch_ou_impl(
                    &a,
                    0.0,
                    nu,
                    xi,
                    tau_n,
                    &init,
                    &grid,
                    OuEngine::Stiff { h_step: 1e-3 },
                    true,
                    1.0,
                )
                .unwrap();
            for (j, md) in series.states.iter().enumerate() {
                let t = grid[j];
                let expected = 0.5 * (s2 * (s1 * t).exp() - s1 * (s2 * t).exp()) / (s2 - s1);
                assert!(
                    (md.rho.m01.norm() - expected.abs()).abs() < 1e-9,
                    "field {field}, t = {t}: {} vs {expected}",
                    md.rho.m01.norm()
                );
                if field == 0.0 {
                    assert!(md.rho.m01.im.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn white_pure_dephasing_is_exact_exponential() {
        // delta_k = 0 under the real ramp: |rho01| decays at the pure
        // dephasing rate 2 nu^2 xi^2 regardless of the time-dependent
        // diagonal.
        let mode = KMode { k: 1.3, delta_k: 0.0, index: 1, n: 4 };
        let ramp = RampProtocol::new(10.0, -2.0, 2.0).unwrap();
        let cfg = cfg_for(&ramp, 81, 1e-10);
        let xi = 0.1;
        let init = BranchState::new(
            C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        );
        let series =
            solve_white_master_equation(&mode, BranchSpec::none(), &ramp, xi, &init, &cfg)
                .unwrap();
        let rate = 2.0 * MODE_ENERGY_SCALE * MODE_ENERGY_SCALE * xi * xi;
        for (j, md) in series.states.iter().enumerate() {
            let dt = series.times[j] - ramp.t_i();
            let expected = 0.5 * (-rate * dt).exp();
            assert!(
                (md.rho.m01.norm() - expected).abs() < 1e-8,
                "t = {}: {} vs {expected}",
                series.times[j],
                md.rho.m01.norm()
            );
        }
    }

    #[test]
    fn white_zero_strength_is_pure_state_evolution() {
        let modes = k_grid(16).unwrap();
        let mode = &modes[3];
        let ramp = RampProtocol::new(4.0, -2.0, 2.0).unwrap();
        let cfg = cfg_for(&ramp, 41, 1e-10);
        let init = ground_state(mode, ramp.h_i, BranchSpec::none()).unwrap();
        let series =
            solve_white_master_equation(mode, BranchSpec::none(), &ramp, 0.0, &init, &cfg)
                .unwrap();
        let evo = evolve_schrodinger(mode, BranchSpec::none(), &ramp, &init, &cfg).unwrap();
        for (md, st) in series.states.iter().zip(&evo.states) {
            assert!((md.rho - st.projector()).max_abs() < 1e-8);
        }
    }

    #[test]
    fn white_dephasing_purity_never_increases() {
        let mode = KMode { k: 0.9, delta_k: 0.0, index: 1, n: 4 };
        let ramp = RampProtocol::new(10.0, -2.0, 2.0).unwrap();
        let cfg = cfg_for(&ramp, 201, 1e-11);
        let init = BranchState::new(
            C64::new(0.8, 0.0),
            C64::new(0.0, 0.6),
        );
        let series =
            solve_white_master_equation(&mode, BranchSpec::none(), &ramp, 0.05, &init, &cfg)
                .unwrap();
        let purity: Vec<f64> = series
            .states
            .iter()
            .map(|md| (md.rho * md.rho).trace().re)
            .collect();
        for w in purity.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "purity increased: {} -> {}", w[0], w[1]);
        }
        assert!(series.meta.min_rho_eigenvalue > -1e-10);
    }

    #[test]
    fn white_limit_of_colored_equation() {
        let modes = k_grid(16).unwrap();
        let mode = &modes[5];
        let ramp = RampProtocol::new(4.0, -2.0, 2.0).unwrap();
        let cfg = cfg_for(&ramp, 41, 1e-8);
        let xi = 0.05;
        let init = ground_state(mode, ramp.h_i, BranchSpec::none()).unwrap();
        let white =
            solve_white_master_equation(mode, BranchSpec::none(), &ramp, xi, &init, &cfg)
                .unwrap();
        let noise = NoiseModel::Ou { xi, tau_n: 1e-3 };
        let ou = solve_branch_master_equation(mode, BranchSpec::none(), &ramp, &noise, &init, &cfg)
            .unwrap();
        let max_diff = white
            .states
            .iter()
            .zip(&ou.states)
            .map(|(w, o)| (w.rho - o.rho).max_abs())
            .fold(0.0, f64::max);
        assert!(max_diff < 1e-4, "max diff {max_diff}");
    }

    #[test]
    fn flipped_feedback_sign_breaks_white_limit() {
        // Mutation check: with the accumulator feedback sign inverted the
        // small-tau_n solution must *not* converge to the white equation.
        let modes = k_grid(16).unwrap();
        let mode = &modes[5];
        let ramp = RampProtocol::new(4.0, -2.0, 2.0).unwrap();
        let cfg = cfg_for(&ramp, 41, 1e-8);
        let xi = 0.05;
        let init = ground_state(mode, ramp.h_i, BranchSpec::none()).unwrap();
        let white =
            solve_white_master_equation(mode, BranchSpec::none(), &ramp, xi, &init, &cfg)
                .unwrap();
        let tau_q = ramp.tau_q;
        let cos_k = mode.k.cos();
        let a = move |t: f64| -MODE_ENERGY_SCALE * (t / tau_q - cos_k);
        let tau_n = 1e-3;
        let mutated = solve_branch_ou_impl(
            &a,
            MODE_ENERGY_SCALE * mode.delta_k,
            MODE_ENERGY_SCALE,
            xi,
            tau_n,
            &init,
            &cfg.dense_grid,
            OuEngine::Stiff { h_step: tau_n / 10.0 },
            true,
            -1.0,
        )
        .unwrap();
        let max_diff = white
            .states
            .iter()
            .zip(&mutated.states)
            .map(|(w, o)| (w.rho - o.rho).max_abs())
            .fold(0.0, f64::max);
        assert!(max_diff > 1e-3, "mutated solver still matched: {max_diff}");
    }

    #[test]
    fn cross_operator_identical_branches_keep_unit_trace() {
        let modes = k_grid(16).unwrap();
        let mode = &modes[4];
        let ramp = RampProtocol::new(5.0, -3.0, 3.0).unwrap();
        let cfg = cfg_for(&ramp, 61, 1e-9);
        let g = ground_state(mode, ramp.h_i, BranchSpec::none()).unwrap();
        let init_x = g.projector();
        let noise = NoiseModel::Ou { xi: 0.01, tau_n: 5.0 };
        let series =
            solve_cross_master_equation(mode, &ramp, 0.0, &noise, &init_x, &cfg).unwrap();
        for s in &series.states {
            assert!((s.x.trace() - C64::new(1.0, 0.0)).norm() < 1e-8);
        }
        assert!(series.states[0].gamma_x.max_abs() < 1e-15);
        assert!(series.meta.max_spectral_norm <= 1.0 + 1e-7);
    }

    #[test]
    fn cross_operator_noiseless_reduces_to_overlap() {
        let modes = k_grid(16).unwrap();
        let mode = &modes[5];
        let delta = 0.05;
        let ramp = RampProtocol::new(5.0, -3.0, 3.0).unwrap();
        let cfg = cfg_for(&ramp, 61, 1e-10);
        let g0 = ground_state(mode, ramp.h_i, BranchSpec::none()).unwrap();
        let init_x = g0.projector();
        let series =
            solve_cross_master_equation(mode, &ramp, delta, &NoiseModel::None, &init_x, &cfg)
                .unwrap();
        let plus = evolve_schrodinger(mode, BranchSpec::plus(delta), &ramp, &g0, &cfg).unwrap();
        let minus = evolve_schrodinger(mode, BranchSpec::minus(delta), &ramp, &g0, &cfg).unwrap();
        for ((s, sp), sm) in series.states.iter().zip(&plus.states).zip(&minus.states) {
            let d_pure = sp.overlap(sm); // <phi+|phi-> = trace |phi-><phi+|
            assert!(
                (s.x.trace() - d_pure).norm() < 1e-8,
                "trace {} vs overlap {}",
                s.x.trace(),
                d_pure
            );
        }
    }
}
