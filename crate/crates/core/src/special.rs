//! Complex special functions: log-gamma and the parabolic cylinder function
//! `D_nu(z)` for complex order and argument.
//!
//! No common crate evaluates `D_nu(z)` off the real axis, so it is computed
//! here by integrating the Weber differential equation
//!
//! ```text
//!   w'' + (nu + 1/2 - z^2/4) w = 0
//! ```
//!
//! along the ray from the origin to `z`, starting from the exact series
//! values at `z = 0`. The function is entire in both `nu` and `z`, so the
//! straight path is as good as any. This route is a validation oracle, not a
//! production path, and favours robustness over speed.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::integrate::dopri5;

const LN_2PI_HALF: f64 = 0.918_938_533_204_672_7; // ln(2 pi)/2

// Bernoulli-number coefficients B_2n / (2n (2n-1)) of the Stirling series.
const STIRLING: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    7.0 / 1092.0,
];

/// Principal branch of `ln Gamma(z)` for complex `z`.
///
/// Stirling's series after lifting `|z|` above 12 with the recurrence;
/// the left half-plane goes through the reflection formula.
pub fn ln_gamma(z: C64) -> C64 {
    if z.re < 0.5 {
        // Reflection: ln G(z) = ln(pi / sin(pi z)) - ln G(1 - z).
        return ln_pi_over_sin_pi(z) - ln_gamma(C64::new(1.0, 0.0) - z);
    }
    let mut shift = C64::new(0.0, 0.0);
    let mut w = z;
    while w.norm() < 12.0 {
        shift += w.ln();
        w += 1.0;
    }
    let mut series = C64::new(0.0, 0.0);
    let inv = 1.0 / w;
    let inv2 = inv * inv;
    let mut p = inv;
    for c in STIRLING {
        series += p * c;
        p *= inv2;
    }
    (w - 0.5) * w.ln() - w + LN_2PI_HALF + series - shift
}

/// `ln(pi / sin(pi z))` computed without overflowing for large `|Im z|`.
fn ln_pi_over_sin_pi(z: C64) -> C64 {
    let pz = z * std::f64::consts::PI;
    if pz.im.abs() < 20.0 {
        return C64::new(std::f64::consts::PI, 0.0).ln() - pz.sin().ln();
    }
    // sin(w) = (e^{iw} - e^{-iw}) / 2i; keep only the dominant exponential.
    let i = C64::new(0.0, 1.0);
    let ln_sin = if pz.im > 0.0 {
        // |e^{-iw}| dominates: sin w = e^{-iw} (1 - e^{2iw}) / (-2i).
        -i * pz - (-2.0 * i).ln() + (C64::new(1.0, 0.0) - (2.0 * i * pz).exp()).ln()
    } else {
        // |e^{iw}| dominates: sin w = e^{iw} (1 - e^{-2iw}) / (2i).
        i * pz - (2.0 * i).ln() + (C64::new(1.0, 0.0) - (-2.0 * i * pz).exp()).ln()
    };
    C64::new(std::f64::consts::PI, 0.0).ln() - ln_sin
}

pub fn gamma(z: C64) -> C64 {
    ln_gamma(z).exp()
}

/// `D_nu(0)` and `D_nu'(0)` from the standard series values.
fn pcf_origin(nu: C64) -> (C64, C64) {
    let half_ln_pi = C64::new(0.5 * std::f64::consts::PI.ln(), 0.0);
    let ln2 = std::f64::consts::LN_2;
    let one = C64::new(1.0, 0.0);
    let d0 = (half_ln_pi + nu * (0.5 * ln2) - ln_gamma((one - nu) * 0.5)).exp();
    let dp0 = -((half_ln_pi + (nu + 1.0) * (0.5 * ln2) - ln_gamma(-nu * 0.5)).exp());
    (d0, dp0)
}

/// Parabolic cylinder function `D_nu(z)` and its `z`-derivative.
pub fn pcf_d(nu: C64, z: C64) -> Result<(C64, C64)> {
    let (d0, dp0) = pcf_origin(nu);
    let r = z.norm();
    if r == 0.0 {
        return Ok((d0, dp0));
    }
    let dir = z / r;
    // Scale out the overall magnitude so tolerances stay relative.
    let scale = d0.norm().max(dp0.norm()).max(1e-300);
    let w0 = d0 / scale;
    let wp0 = dp0 * dir / scale; // derivative with respect to arc length s

    let half = C64::new(0.5, 0.0);
    let dir2 = dir * dir;
    let sys = move |s: f64, y: &[f64; 4], dy: &mut [f64; 4]| {
        let w = C64::new(y[0], y[1]);
        let wp = C64::new(y[2], y[3]);
        let zs = dir * s;
        let wpp = dir2 * (zs * zs * 0.25 - nu - half) * w;
        dy[0] = wp.re;
        dy[1] = wp.im;
        dy[2] = wpp.re;
        dy[3] = wpp.im;
    };
    let grid = [0.0, r];
    let out = dopri5(&sys, [w0.re, w0.im, wp0.re, wp0.im], &grid, 1e-13, 1e-16, None).map_err(
        |e| Error::SpecialFunction {
            omega: nu,
            z,
            reason: format!("Weber equation integration failed: {e}"),
        },
    )?;
    let y = out[1];
    let w = C64::new(y[0], y[1]) * scale;
    let dwdz = C64::new(y[2], y[3]) * scale / dir;
    if !w.is_finite() || !dwdz.is_finite() {
        return Err(Error::SpecialFunction {
            omega: nu,
            z,
            reason: "non-finite function value".into(),
        });
    }
    Ok((w, dwdz))
}
