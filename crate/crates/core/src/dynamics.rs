//! Noiseless two-branch Schrödinger dynamics and the adiabatic closed form.
//!
//! The production integrator takes exponential steps `exp(Omega)` built from
//! a two-point Gauss-Legendre Magnus rule, so every step is exactly unitary:
//! the spinor norm is conserved to rounding regardless of step size, and the
//! residual truncation error is a pure phase that largely cancels between
//! the two coupling branches when decoherence bilinears are formed. Step
//! sizes follow an analytic schedule (local Larmor frequency plus the
//! drive-rate commutator bound), which makes runs bitwise reproducible.
//!
//! An embedded Runge-Kutta route over the same equations is kept as an
//! independent verification path; it is what the closed-form propagator
//! checks are run against at tight tolerance.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::integrate::{dopri5, IntegratorConfig};
use crate::model::{BranchSpec, BranchState, KMode, RampProtocol, MODE_ENERGY_SCALE};

/// States of one branch sampled on the dense grid.
#[derive(Clone, Debug)]
pub struct BranchEvolution {
    pub times: Vec<f64>,
    pub states: Vec<BranchState>,
}

impl BranchEvolution {
    /// Largest deviation of the squared norm from one over the grid.
    pub fn max_norm_defect(&self) -> f64 {
        self.states
            .iter()
            .map(|s| (s.norm_sqr() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Convergence-region cap on the rotation angle of a single Magnus step.
const MAX_STEP_ANGLE: f64 = 1.2;
/// Calibration constant of the local-error model
/// `err ~ (h^5 E^2 b |da/dt|) / MAGNUS_ERR_CAL` (see tests/oracles.rs).
const MAGNUS_ERR_CAL: f64 = 60.0;

// Two-point Gauss-Legendre nodes relative to the step, and sqrt(3)/6.
pub(crate) const GL_LO: f64 = 0.5 - 0.288_675_134_594_812_9;
pub(crate) const GL_HI: f64 = 0.5 + 0.288_675_134_594_812_9;
const SQRT3_6: f64 = 0.288_675_134_594_812_9;

/// Largest admissible unitary step at local half-gap `e_loc`, given the
/// off-diagonal `b` and a bound `a_rate` on the diagonal drift rate.
pub(crate) fn magnus_step_bound(e_loc: f64, b: f64, a_rate: f64, rel_tol: f64) -> f64 {
    let e = e_loc.max(1e-300);
    let mut h = MAX_STEP_ANGLE / (2.0 * e);
    let comm = b.abs() * a_rate;
    if comm > 0.0 {
        h = h.min((rel_tol * MAGNUS_ERR_CAL / (e * e * comm)).powf(0.2));
    }
    h
}

/// Rotation vector `(wz, wx, wy)` of one Magnus step of length `h` with
/// diagonal coefficient sampled at the two GL nodes.
#[inline]
pub(crate) fn rotation_for(h: f64, a1: f64, a2: f64, b: f64) -> (f64, f64, f64) {
    (0.5 * h * (a1 + a2), h * b, SQRT3_6 * h * h * b * (a2 - a1))
}

/// Evolve one branch of one mode across the ramp with the unitary stepper.
pub fn evolve_schrodinger(
    mode: &KMode,
    branch: BranchSpec,
    ramp: &RampProtocol,
    init: &BranchState,
    cfg: &IntegratorConfig,
) -> Result<BranchEvolution> {
    cfg.validate()?;
    check_normalized(init)?;
    let shift = branch.shift();
    let cos_k = mode.k.cos();
    let tau_q = ramp.tau_q;
    let scale = MODE_ENERGY_SCALE;
    let a = move |t: f64| -scale * (t / tau_q + shift - cos_k);
    let states = magnus_evolve(
        &a,
        scale * mode.delta_k,
        scale / tau_q,
        (init.v, init.u),
        &cfg.dense_grid,
        cfg.rel_tol,
        cfg.max_step,
    )?;
    Ok(BranchEvolution {
        times: cfg.dense_grid.clone(),
        states: states.into_iter().map(|(v, u)| BranchState::new(v, u)).collect(),
    })
}

/// Same evolution through the generic embedded Runge-Kutta driver.
///
/// Slower and subject to slow norm drift on long ramps; used to cross-check
/// the unitary stepper and the closed-form propagator.
pub fn evolve_schrodinger_rk(
    mode: &KMode,
    branch: BranchSpec,
    ramp: &RampProtocol,
    init: &BranchState,
    cfg: &IntegratorConfig,
) -> Result<BranchEvolution> {
    cfg.validate()?;
    check_normalized(init)?;
    let shift = branch.shift();
    let cos_k = mode.k.cos();
    let tau_q = ramp.tau_q;
    let b = MODE_ENERGY_SCALE * mode.delta_k;
    let sys = move |t: f64, y: &[f64; 4], dy: &mut [f64; 4]| {
        let a = -MODE_ENERGY_SCALE * (t / tau_q + shift - cos_k);
        let (vr, vi, ur, ui) = (y[0], y[1], y[2], y[3]);
        dy[0] = a * vi + b * ui;
        dy[1] = -(a * vr + b * ur);
        dy[2] = b * vi - a * ui;
        dy[3] = -b * vr + a * ur;
    };
    let y0 = [init.v.re, init.v.im, init.u.re, init.u.im];
    let out = dopri5(&sys, y0, &cfg.dense_grid, cfg.rel_tol, cfg.abs_tol, cfg.max_step)?;
    Ok(BranchEvolution {
        times: cfg.dense_grid.clone(),
        states: out
            .into_iter()
            .map(|y| BranchState::new(C64::new(y[0], y[1]), C64::new(y[2], y[3])))
            .collect(),
    })
}

fn check_normalized(init: &BranchState) -> Result<()> {
    if (init.norm_sqr() - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!(
            "initial state must be normalized, |psi|^2 = {}",
            init.norm_sqr()
        )));
    }
    Ok(())
}

/// Unitary Magnus evolution of `i psi' = [[a(t), b], [b, -a(t)]] psi`.
///
/// `a_rate` bounds `|da/dt|` and feeds the error model; it may be zero
/// (constant diagonal), in which case every step is exact and only the
/// sampling grid limits the step.
pub(crate) fn magnus_evolve<F: Fn(f64) -> f64>(
    a_of_t: &F,
    b: f64,
    a_rate: f64,
    init: (C64, C64),
    grid: &[f64],
    rel_tol: f64,
    max_step: Option<f64>,
) -> Result<Vec<(C64, C64)>> {
    if grid.len() < 2 {
        return Err(Error::invalid("grid needs at least 2 points"));
    }
    let span = grid.last().unwrap() - grid[0];
    let mut out = Vec::with_capacity(grid.len());
    let (mut v, mut u) = init;
    out.push((v, u));

    for w in grid.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let mut t = t0;
        while t < t1 {
            let mut h = magnus_step_bound(a_of_t(t).hypot(b), b, a_rate, rel_tol);
            if let Some(hm) = max_step {
                h = h.min(hm);
            }
            h = h.min(t1 - t);
            if h < 1e-15 * span.max(1.0) {
                return Err(Error::IntegrationFailure { t, reason: "step size underflow".into() });
            }
            let a1 = a_of_t(t + GL_LO * h);
            let a2 = a_of_t(t + GL_HI * h);
            let (wz, wx, wy) = rotation_for(h, a1, a2, b);
            apply_rotation(&mut v, &mut u, wz, wx, wy);
            t += h;
        }
        out.push((v, u));
    }
    Ok(out)
}

/// Apply `exp(-i (wz sz + wx sx + wy sy))` in place.
#[inline]
pub(crate) fn apply_rotation(v: &mut C64, u: &mut C64, wz: f64, wx: f64, wy: f64) {
    let phi = (wz * wz + wx * wx + wy * wy).sqrt();
    // sin(phi)/phi with a series fallback near zero.
    let s = if phi > 1e-8 { phi.sin() / phi } else { 1.0 - phi * phi / 6.0 };
    let c = phi.cos();
    let (v0, u0) = (*v, *u);
    let off_vu = C64::new(wx, -wy); // (w.sigma)_{01}
    let off_uv = C64::new(wx, wy); // (w.sigma)_{10}
    let i = C64::new(0.0, 1.0);
    *v = v0 * c - i * s * (v0 * wz + u0 * off_vu);
    *u = u0 * c - i * s * (v0 * off_uv - u0 * wz);
}

/// Adiabatic estimate of the decoherence factor deep in the paramagnetic
/// phase: `exp(-N delta^2 / (4 h^2 (h^2 - 1)))`, valid for `h^2 > 1`.
pub fn adiabatic_df(n: usize, delta: f64, h: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("chain length must be positive"));
    }
    if h * h <= 1.0 {
        return Err(Error::OutOfDomain(format!(
            "adiabatic form requires |h| > 1 (paramagnetic phase), got h = {h}"
        )));
    }
    Ok((-(n as f64) * delta * delta / (4.0 * h * h * (h * h - 1.0))).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ground_state, k_grid};

    fn uniform_cfg(ramp: &RampProtocol, points: usize, rel: f64, abs: f64) -> IntegratorConfig {
        IntegratorConfig::uniform(ramp, points).unwrap().with_tols(rel, abs)
    }

    #[test]
    fn diagonal_hamiltonian_preserves_populations() {
        // delta_k forced to zero: only phases evolve.
        let mode = KMode { k: 2.0, delta_k: 0.0, index: 1, n: 4 };
        let ramp = RampProtocol::new(5.0, -2.0, 2.0).unwrap();
        let cfg = uniform_cfg(&ramp, 41, 1e-10, 1e-12);
        let init = BranchState::new(C64::new(0.6, 0.0), C64::new(0.0, 0.8));
        let evo = evolve_schrodinger(&mode, BranchSpec::none(), &ramp, &init, &cfg).unwrap();
        for s in &evo.states {
            assert!((s.v.norm() - 0.6).abs() < 1e-12);
            assert!((s.u.norm() - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn slow_ramp_tracks_instantaneous_ground_state() {
        let k = 3.0 * std::f64::consts::FRAC_PI_4;
        let mode = KMode { k, delta_k: k.sin(), index: 2, n: 8 };
        let ramp = RampProtocol::new(1e4, -5.0, 5.0).unwrap();
        let cfg = uniform_cfg(&ramp, 9, 1e-7, 1e-9);
        let init = ground_state(&mode, -5.0, BranchSpec::none()).unwrap();
        let evo = evolve_schrodinger(&mode, BranchSpec::none(), &ramp, &init, &cfg).unwrap();
        let target = ground_state(&mode, 5.0, BranchSpec::none()).unwrap();
        let fidelity = evo.states.last().unwrap().overlap(&target).norm_sqr();
        assert!(fidelity > 0.999, "fidelity {fidelity}");
    }

    #[test]
    fn magnus_and_rk_agree() {
        let modes = k_grid(50).unwrap();
        let mode = &modes[24]; // k = 49 pi / 50
        let ramp = RampProtocol::new(10.0, -5.0, 5.0).unwrap();
        let cfg = uniform_cfg(&ramp, 101, 1e-11, 1e-13);
        let init = ground_state(mode, -5.0, BranchSpec::none()).unwrap();
        let a = evolve_schrodinger(mode, BranchSpec::none(), &ramp, &init, &cfg).unwrap();
        let b = evolve_schrodinger_rk(mode, BranchSpec::none(), &ramp, &init, &cfg).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!((x.v - y.v).norm() < 1e-7);
            assert!((x.u - y.u).norm() < 1e-7);
        }
    }

    #[test]
    fn norm_is_machine_exact_on_long_ramp() {
        let modes = k_grid(100).unwrap();
        let mode = &modes[49];
        let ramp = RampProtocol::new(250.0, -5.0, 5.0).unwrap();
        let cfg = uniform_cfg(&ramp, 201, 1e-9, 1e-11);
        let init = ground_state(mode, -5.0, BranchSpec::none()).unwrap();
        let evo = evolve_schrodinger(mode, BranchSpec::none(), &ramp, &init, &cfg).unwrap();
        assert!(evo.max_norm_defect() < 1e-12, "defect {}", evo.max_norm_defect());
    }

    #[test]
    fn rejects_unnormalized_initial_state() {
        let modes = k_grid(4).unwrap();
        let ramp = RampProtocol::new(5.0, -1.0, 1.0).unwrap();
        let cfg = uniform_cfg(&ramp, 11, 1e-9, 1e-11);
        let init = BranchState::new(C64::new(1.0, 0.0), C64::new(1.0, 0.0));
        assert!(evolve_schrodinger(&modes[0], BranchSpec::none(), &ramp, &init, &cfg).is_err());
    }

    #[test]
    fn branch_shift_equals_field_shift() {
        // Evolving branch +delta under h(t) must match branch 0 under the
        // ramp shifted by delta: the Hamiltonian along the trajectory is the
        // same function of elapsed time, so the full complex states agree.
        let modes = k_grid(16).unwrap();
        let mode = &modes[7];
        let delta = 0.3;
        let ramp = RampProtocol::new(20.0, -2.0, 2.0).unwrap();
        let shifted = RampProtocol::new(20.0, -2.0 + delta, 2.0 + delta).unwrap();
        let cfg = uniform_cfg(&ramp, 81, 1e-10, 1e-12);
        let cfg_shift = uniform_cfg(&shifted, 81, 1e-10, 1e-12);
        let init = ground_state(mode, -2.0, BranchSpec::plus(delta)).unwrap();
        let a = evolve_schrodinger(mode, BranchSpec::plus(delta), &ramp, &init, &cfg).unwrap();
        let b = evolve_schrodinger(mode, BranchSpec::none(), &shifted, &init, &cfg_shift).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!((x.v - y.v).norm() < 1e-9);
            assert!((x.u - y.u).norm() < 1e-9);
        }
    }

    #[test]
    fn adiabatic_df_values() {
        assert_eq!(adiabatic_df(500, 0.0, 2.0).unwrap(), 1.0);
        let d = adiabatic_df(500, 0.01, 2.0).unwrap();
        assert!((d - (-0.05_f64 / 48.0).exp()).abs() < 1e-15);
        assert!((d - 0.998959).abs() < 1e-6);
        // h -> infinity limit.
        assert!((adiabatic_df(500, 0.01, 1e8).unwrap() - 1.0).abs() < 1e-12);
        assert!(adiabatic_df(500, 0.01, 1.0).is_err());
        assert!(adiabatic_df(500, 0.01, -0.5).is_err());
        assert!(adiabatic_df(0, 0.01, 2.0).is_err());
    }
}
