//! Assembly of per-mode factors into the global decoherence factor, plus
//! revival detection and critical-point readout.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::RampProtocol;

/// How a series was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Route {
    Noiseless,
    Factorized,
    CrossOperator,
    Trajectory,
}

/// Per-mode inputs to the assembler: the factor series `F_k(t)` and, when
/// the route provides it, the complex coherence `d_k(t)`.
#[derive(Clone, Debug)]
pub struct ModeFactors {
    pub f: Vec<f64>,
    pub d: Option<Vec<C64>>,
}

/// Time series of the decoherence factor and its per-mode decomposition.
#[derive(Clone, Debug)]
pub struct DecoherenceSeries {
    pub route: Route,
    pub times: Vec<f64>,
    /// Drive field at each grid time.
    pub fields: Vec<f64>,
    /// `[mode][time]`, each in `[0, 1]` up to solver tolerance.
    pub per_mode_f: Vec<Vec<f64>>,
    /// `ln D(t)`, accumulated in log space so deep decoherence never
    /// underflows silently.
    pub log_d: Vec<f64>,
    /// `D(t) = prod_k F_k(t)`; reported as 0 below the f64 floor with the
    /// log retained above.
    pub d: Vec<f64>,
    /// Complex qubit coherence `d(t) = prod_k d_k(t)`; present on the
    /// noiseless and cross-operator routes.
    pub d_complex: Option<Vec<C64>>,
}

/// `D` smaller than this is reported as zero (its log stays available).
pub const D_FLOOR: f64 = 1e-300;

/// Multiply per-mode factors into `D(t)` in fixed mode order.
pub fn assemble_decoherence(
    route: Route,
    ramp: &RampProtocol,
    times: &[f64],
    modes: Vec<ModeFactors>,
) -> Result<DecoherenceSeries> {
    if modes.is_empty() {
        return Err(Error::invalid("no mode factors supplied"));
    }
    let nt = times.len();
    for (i, m) in modes.iter().enumerate() {
        if m.f.len() != nt {
            return Err(Error::invalid(format!(
                "mode {i} factor series has {} samples, grid has {nt}",
                m.f.len()
            )));
        }
        if let Some(d) = &m.d {
            if d.len() != nt {
                return Err(Error::invalid(format!(
                    "mode {i} coherence series has {} samples, grid has {nt}",
                    d.len()
                )));
            }
        }
    }
    let fields: Vec<f64> = times.iter().map(|&t| ramp.field_at(t)).collect();

    let mut log_d = vec![0.0; nt];
    for m in &modes {
        for (j, &f) in m.f.iter().enumerate() {
            log_d[j] += if f > 0.0 { f.ln() } else { f64::NEG_INFINITY };
        }
    }
    let d: Vec<f64> = log_d
        .iter()
        .map(|&l| {
            let v = l.exp();
            if v < D_FLOOR {
                0.0
            } else {
                v
            }
        })
        .collect();

    let have_all_d = modes.iter().all(|m| m.d.is_some());
    let d_complex = if have_all_d {
        let mut acc = vec![C64::new(1.0, 0.0); nt];
        for m in &modes {
            for (j, dk) in m.d.as_ref().unwrap().iter().enumerate() {
                acc[j] *= dk;
            }
        }
        Some(acc)
    } else {
        None
    };

    Ok(DecoherenceSeries {
        route,
        times: times.to_vec(),
        fields,
        per_mode_f: modes.into_iter().map(|m| m.f).collect(),
        log_d,
        d,
        d_complex,
    })
}

impl DecoherenceSeries {
    /// Recompute `D` directly from the stored per-mode factors (consistency
    /// oracle for the log-space accumulation).
    pub fn recompute_product(&self, j: usize) -> f64 {
        self.per_mode_f.iter().map(|row| row[j]).product()
    }

    pub fn h_range(&self) -> (f64, f64) {
        (self.fields[0], *self.fields.last().unwrap())
    }
}

/// Detected revival structure.
#[derive(Clone, Debug, Serialize)]
pub struct RevivalReport {
    /// `(h at peak, D at peak)`, ordered by `h`.
    pub peaks: Vec<(f64, f64)>,
    /// Mean spacing in `h` between consecutive peaks; `None` below 2 peaks.
    pub period_estimate: Option<f64>,
    /// `pi / (4 tau_q delta)`.
    pub theory_period: f64,
}

/// Locate local maxima of `D(h)` inside `window`.
///
/// A grid point is a peak when, after a 3-point moving average, it is
/// strictly greater than its `w = 5` neighbours on each side; plateaus
/// report their midpoint. This is deliberately coarse so integrator-level
/// jitter cannot fake a revival.
pub fn detect_revivals(
    series: &DecoherenceSeries,
    window: (f64, f64),
    tau_q: f64,
    delta: f64,
) -> Result<RevivalReport> {
    let (h_lo, h_hi) = window;
    let (h_min, h_max) = series.h_range();
    if h_lo < h_min - 1e-12 || h_hi > h_max + 1e-12 || h_lo >= h_hi {
        return Err(Error::invalid(format!(
            "revival window [{h_lo}, {h_hi}] outside simulated range [{h_min}, {h_max}]"
        )));
    }
    const W: usize = 5;
    let n = series.d.len();
    // Light smoothing first.
    let smooth: Vec<f64> = (0..n)
        .map(|j| {
            if j == 0 || j == n - 1 {
                series.d[j]
            } else {
                (series.d[j - 1] + series.d[j] + series.d[j + 1]) / 3.0
            }
        })
        .collect();

    let mut peaks = Vec::new();
    let mut j = W;
    while j + W < n {
        let h = series.fields[j];
        if h < h_lo || h > h_hi {
            j += 1;
            continue;
        }
        // Plateau run [j, j_end] of equal smoothed values.
        let mut j_end = j;
        while j_end + 1 < n && smooth[j_end + 1] == smooth[j] {
            j_end += 1;
        }
        if j_end + W >= n {
            break;
        }
        let val = smooth[j];
        let left_ok = (1..=W).all(|o| smooth[j - o] < val);
        let right_ok = (1..=W).all(|o| smooth[j_end + o] < val);
        if left_ok && right_ok {
            let mid = (j + j_end) / 2;
            if series.fields[mid] >= h_lo && series.fields[mid] <= h_hi {
                peaks.push((series.fields[mid], series.d[mid]));
            }
            j = j_end + W;
        } else {
            j += 1;
        }
    }

    let period_estimate = if peaks.len() >= 2 {
        let spacings: Vec<f64> = peaks.windows(2).map(|w| w[1].0 - w[0].0).collect();
        Some(spacings.iter().sum::<f64>() / spacings.len() as f64)
    } else {
        None
    };
    Ok(RevivalReport {
        peaks,
        period_estimate,
        theory_period: std::f64::consts::PI / (4.0 * tau_q * delta),
    })
}

/// `D` at the drive field `h_c`, linearly interpolated between the two
/// nearest grid samples.
pub fn critical_value(series: &DecoherenceSeries, h_c: f64) -> Result<f64> {
    let (h_min, h_max) = series.h_range();
    if h_c < h_min || h_c > h_max {
        return Err(Error::invalid(format!(
            "field {h_c} outside simulated range [{h_min}, {h_max}]"
        )));
    }
    let fields = &series.fields;
    let idx = match fields.binary_search_by(|f| f.partial_cmp(&h_c).unwrap()) {
        Ok(i) => return Ok(series.d[i]),
        Err(i) => i,
    };
    if idx == 0 {
        return Ok(series.d[0]);
    }
    if idx >= fields.len() {
        return Ok(*series.d.last().unwrap());
    }
    let (h0, h1) = (fields[idx - 1], fields[idx]);
    let w = (h_c - h0) / (h1 - h0);
    Ok(series.d[idx - 1] * (1.0 - w) + series.d[idx] * w)
}
