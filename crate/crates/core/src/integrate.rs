//! ODE drivers used across the crate.
//!
//! Two engines cover every solver here:
//!
//! * An adaptive embedded Dormand-Prince 5(4) pair for smooth non-stiff
//!   systems (white-noise master equations, special-function integration,
//!   verification runs). Steps are shortened to land exactly on the
//!   requested sample times, so output never involves interpolation and is
//!   bitwise independent of how work is scheduled.
//! * A fixed-step classical RK4 for the colored-noise master equations,
//!   where the memory accumulator introduces the extra rate `1/tau_n` that
//!   is cheaper to resolve with a pinned step than to hand to a step
//!   controller.

use crate::error::{Error, Result};

/// Tolerances and sampling control for the time integrators.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Optional hard cap on the step size (time units).
    pub max_step: Option<f64>,
    /// Times at which observables are sampled. Strictly increasing.
    pub dense_grid: Vec<f64>,
}

impl IntegratorConfig {
    pub fn new(rel_tol: f64, abs_tol: f64, dense_grid: Vec<f64>) -> Result<Self> {
        let cfg = IntegratorConfig { rel_tol, abs_tol, max_step: None, dense_grid };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Default tolerances with a uniform grid of `points` samples over the
    /// ramp interval (equivalently: uniform in drive field).
    pub fn uniform(ramp: &crate::model::RampProtocol, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::invalid("dense grid needs at least 2 points"));
        }
        let (t0, t1) = (ramp.t_i(), ramp.t_f());
        let grid = (0..points)
            .map(|j| t0 + (t1 - t0) * j as f64 / (points - 1) as f64)
            .collect();
        IntegratorConfig::new(1e-9, 1e-11, grid)
    }

    pub fn with_tols(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::invalid("integrator tolerances must be positive"));
        }
        if self.dense_grid.len() < 2 {
            return Err(Error::invalid("dense grid needs at least 2 points"));
        }
        if !self.dense_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("dense grid must be strictly increasing"));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return Err(Error::invalid("max_step must be positive"));
            }
        }
        Ok(())
    }

    pub fn t_start(&self) -> f64 {
        self.dense_grid[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.dense_grid.last().unwrap()
    }
}

/// Right-hand side of an N-dimensional real first-order system.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N], dy: &mut [f64; N]);
}

impl<const N: usize, F> OdeSystem<N> for F
where
    F: Fn(f64, &[f64; N], &mut [f64; N]),
{
    fn rhs(&self, t: f64, y: &[f64; N], dy: &mut [f64; N]) {
        self(t, y, dy)
    }
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
// Weights of (5th order) - (4th order) for the error estimate.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

/// Integrate `sys` from `grid[0]`, returning the state at every grid time
/// (the first entry is `y0` itself). Steps are truncated at grid times.
pub fn dopri5<const N: usize, S: OdeSystem<N>>(
    sys: &S,
    y0: [f64; N],
    grid: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    max_step: Option<f64>,
) -> Result<Vec<[f64; N]>> {
    let t_end = *grid.last().unwrap();
    let span = t_end - grid[0];
    let mut out = Vec::with_capacity(grid.len());
    out.push(y0);

    let mut t = grid[0];
    let mut y = y0;
    let mut k1 = [0.0; N];
    sys.rhs(t, &y, &mut k1);
    let hmax = max_step.unwrap_or(span).min(span);
    let mut h = initial_step(&y, &k1, rel_tol, abs_tol).min(hmax);

    for &t_next in &grid[1..] {
        while t < t_next {
            let h_try = h.min(t_next - t).min(hmax);
            if h_try < 1e-14 * span.max(1.0) {
                return Err(Error::IntegrationFailure { t, reason: "step size underflow".into() });
            }
            let (y_new, k7, err) = dopri5_step(sys, t, &y, &k1, h_try, rel_tol, abs_tol);
            if err <= 1.0 {
                t += h_try;
                y = y_new;
                k1 = k7; // FSAL
                let fac = if err > 0.0 { SAFETY * err.powf(-0.2) } else { MAX_FACTOR };
                h = h_try * fac.clamp(MIN_FACTOR, MAX_FACTOR);
            } else {
                h = h_try * (SAFETY * err.powf(-0.2)).max(MIN_FACTOR);
            }
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::IntegrationFailure {
                    t,
                    reason: "state became non-finite".into(),
                });
            }
        }
        out.push(y);
    }
    Ok(out)
}

fn dopri5_step<const N: usize, S: OdeSystem<N>>(
    sys: &S,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> ([f64; N], [f64; N], f64) {
    let mut k2 = [0.0; N];
    let mut k3 = [0.0; N];
    let mut k4 = [0.0; N];
    let mut k5 = [0.0; N];
    let mut k6 = [0.0; N];
    let mut k7 = [0.0; N];
    let mut tmp = [0.0; N];

    for i in 0..N {
        tmp[i] = y[i] + h * A21 * k1[i];
    }
    sys.rhs(t + C2 * h, &tmp, &mut k2);
    for i in 0..N {
        tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    sys.rhs(t + C3 * h, &tmp, &mut k3);
    for i in 0..N {
        tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    sys.rhs(t + C4 * h, &tmp, &mut k4);
    for i in 0..N {
        tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    sys.rhs(t + C5 * h, &tmp, &mut k5);
    for i in 0..N {
        tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    sys.rhs(t + h, &tmp, &mut k6);
    let mut y_new = [0.0; N];
    for i in 0..N {
        y_new[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
    }
    sys.rhs(t + h, &y_new, &mut k7);

    let mut err_sq = 0.0;
    for i in 0..N {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let scale = abs_tol + rel_tol * y[i].abs().max(y_new[i].abs());
        let r = e / scale;
        err_sq += r * r;
    }
    (y_new, k7, (err_sq / N as f64).sqrt())
}

/// Conservative starting step from the magnitude of the initial derivative.
fn initial_step<const N: usize>(y: &[f64; N], k1: &[f64; N], rel_tol: f64, abs_tol: f64) -> f64 {
    let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dnorm = k1.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = abs_tol + rel_tol * ynorm;
    if dnorm > 0.0 {
        ((scale / dnorm).powf(0.2)).clamp(1e-10, 1e-2)
    } else {
        1e-6
    }
}

/// Fixed-step classical RK4: each grid interval is split into equal substeps
/// no longer than `max_h`. `on_substep` observes every accepted substep.
pub fn rk4_fixed<const N: usize, S: OdeSystem<N>, F>(
    sys: &S,
    y0: [f64; N],
    grid: &[f64],
    max_h: f64,
    mut on_substep: F,
) -> Result<Vec<[f64; N]>>
where
    F: FnMut(f64, &[f64; N]),
{
    if !(max_h > 0.0) {
        return Err(Error::invalid("rk4 step must be positive"));
    }
    let mut out = Vec::with_capacity(grid.len());
    out.push(y0);
    let mut y = y0;
    let mut k1 = [0.0; N];
    let mut k2 = [0.0; N];
    let mut k3 = [0.0; N];
    let mut k4 = [0.0; N];
    let mut tmp = [0.0; N];

    for w in grid.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let n_sub = ((t1 - t0) / max_h).ceil().max(1.0) as usize;
        let h = (t1 - t0) / n_sub as f64;
        let mut t = t0;
        for _ in 0..n_sub {
            sys.rhs(t, &y, &mut k1);
            for i in 0..N {
                tmp[i] = y[i] + 0.5 * h * k1[i];
            }
            sys.rhs(t + 0.5 * h, &tmp, &mut k2);
            for i in 0..N {
                tmp[i] = y[i] + 0.5 * h * k2[i];
            }
            sys.rhs(t + 0.5 * h, &tmp, &mut k3);
            for i in 0..N {
                tmp[i] = y[i] + h * k3[i];
            }
            sys.rhs(t + h, &tmp, &mut k4);
            for i in 0..N {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            t += h;
            on_substep(t, &y);
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::IntegrationFailure {
                t: t1,
                reason: "state became non-finite".into(),
            });
        }
        out.push(y);
    }
    Ok(out)
}
