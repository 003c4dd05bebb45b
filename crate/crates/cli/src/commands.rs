//! The four subcommands: single runs, parameter sweeps, the self-check
//! suite, and the information-backflow analysis.

use std::path::Path;

use dephasim::fit::{fit_scaling, nonmarkov_vs_tau_n, FitModel, ScalingFit};
use dephasim::nonmarkov::blp_measure;
use dephasim::observables::{critical_value, detect_revivals, RevivalReport};
use dephasim::pipeline::starting_field_shift;

use crate::config::ExperimentConfig;
use crate::manifest::{now_ms, RunManifest};
use crate::output::{fmt_f64, modes_csv, series_csv, OutputStage};
use crate::runner::{coherence_magnitude, compute};
use crate::CliError;

pub fn run(cfg: ExperimentConfig, out_dir: &Path) -> Result<(), CliError> {
    let started = now_ms();
    let computed = compute(&cfg)?;
    let mut manifest = RunManifest::new("run", cfg.clone(), cfg.ensemble.seed, started);
    manifest.warnings = computed.warnings.clone();
    let mut diagnostics = computed.diagnostics.clone();

    if cfg.run.convergence_check {
        let sys = cfg.system()?;
        let icfg = cfg.integrator_config()?;
        let shift = starting_field_shift(&sys, &icfg, cfg.run.h_i_check)
            .map_err(|e| CliError::Numeric(e.to_string()))?;
        diagnostics["starting_field_shift"] = serde_json::json!({
            "h_i_check": cfg.run.h_i_check,
            "max_abs_dD": shift,
        });
    }
    manifest.diagnostics = diagnostics;

    let mut stage = OutputStage::new(out_dir)?;
    stage.add("series.csv", series_csv(&computed.output.series));
    if cfg.output.emit_modes {
        stage.add(
            "modes.csv",
            modes_csv(&computed.output.modes, &computed.output.series, &cfg.output.snapshot_h),
        );
    }
    manifest.finish(stage.checksums());
    stage.add("manifest.json", manifest.to_json());
    stage.commit()?;
    Ok(())
}

pub fn nonmarkov(cfg: ExperimentConfig, out_dir: &Path) -> Result<(), CliError> {
    let started = now_ms();
    let computed = compute(&cfg)?;
    let d = coherence_magnitude(&computed)?;
    let report = blp_measure(&computed.output.series.times, &d)
        .map_err(|e| CliError::Numeric(e.to_string()))?;

    let mut manifest = RunManifest::new("nonmarkov", cfg.clone(), cfg.ensemble.seed, started);
    manifest.warnings = computed.warnings.clone();
    manifest.diagnostics = computed.diagnostics.clone();

    let body = serde_json::json!({
        "measure": report.measure,
        "increase_intervals": report.increase_intervals,
        "route": format!("{:?}", computed.output.series.route),
        "experiment": cfg.experiment,
        "xi": cfg.noise.xi,
        "tau_n": cfg.noise.tau_n,
    });
    let mut stage = OutputStage::new(out_dir)?;
    let mut json = serde_json::to_vec_pretty(&body).expect("serializable");
    json.push(b'\n');
    stage.add("nonmarkov.json", json);
    stage.add("series.csv", series_csv(&computed.output.series));
    manifest.finish(stage.checksums());
    stage.add("manifest.json", manifest.to_json());
    stage.commit()?;
    println!("backflow measure: {:.6} over {} intervals", report.measure, body["increase_intervals"].as_array().map(|a| a.len()).unwrap_or(0));
    Ok(())
}

struct SweepPoint {
    n: usize,
    delta: f64,
    tau_q: f64,
    xi: f64,
    tau_n: f64,
    d_minus1: Option<f64>,
    d_plus1: Option<f64>,
    log_d_minus1: Option<f64>,
    log_d_plus1: Option<f64>,
    revivals: RevivalReport,
    blp: Option<f64>,
}

pub fn sweep(cfg: ExperimentConfig, out_dir: &Path) -> Result<(), CliError> {
    let started = now_ms();
    let axis_n = non_empty(&cfg.sweep.n, cfg.model.n);
    let axis_delta = non_empty(&cfg.sweep.delta, cfg.model.delta);
    let axis_tau_q = non_empty(&cfg.sweep.tau_q, cfg.model.tau_q);
    let axis_xi = non_empty(&cfg.sweep.xi, cfg.noise.xi);
    let axis_tau_n = non_empty(&cfg.sweep.tau_n, cfg.noise.tau_n);
    let count = axis_n.len() * axis_delta.len() * axis_tau_q.len() * axis_xi.len() * axis_tau_n.len();
    if count > cfg.sweep.budget {
        return Err(CliError::Config(format!(
            "sweep would launch {count} runs, over the budget of {} (raise sweep.budget)",
            cfg.sweep.budget
        )));
    }
    if count == 0 {
        return Err(CliError::Config("sweep axes are empty".into()));
    }

    let window = (cfg.sweep.revival_window[0], cfg.sweep.revival_window[1]);
    let mut points = Vec::with_capacity(count);
    let mut warnings = Vec::new();
    for &n in &axis_n {
        for &delta in &axis_delta {
            for &tau_q in &axis_tau_q {
                for &xi in &axis_xi {
                    for &tau_n in &axis_tau_n {
                        let mut point_cfg = cfg.clone();
                        point_cfg.model.n = n;
                        point_cfg.model.delta = delta;
                        point_cfg.model.tau_q = tau_q;
                        point_cfg.noise.xi = xi;
                        point_cfg.noise.tau_n = tau_n;
                        let computed = compute(&point_cfg)?;
                        warnings.extend(
                            computed
                                .warnings
                                .iter()
                                .map(|w| format!("(N={n}, xi={xi}, tau_n={tau_n}) {w}")),
                        );
                        let series = &computed.output.series;
                        let (h_lo, h_hi) = series.h_range();
                        let sample = |h: f64| -> Option<(f64, f64)> {
                            if h < h_lo || h > h_hi {
                                return None;
                            }
                            let d = critical_value(series, h).ok()?;
                            let j = series
                                .fields
                                .iter()
                                .position(|&f| f >= h)
                                .unwrap_or(series.fields.len() - 1);
                            Some((d, series.log_d[j]))
                        };
                        let m1 = sample(-1.0);
                        let p1 = sample(1.0);
                        let revivals = detect_revivals(series, window, tau_q, delta)
                            .map_err(|e| CliError::Numeric(e.to_string()))?;
                        let blp = if cfg.sweep.blp {
                            let d = coherence_magnitude(&computed)?;
                            Some(
                                blp_measure(&series.times, &d)
                                    .map_err(|e| CliError::Numeric(e.to_string()))?
                                    .measure,
                            )
                        } else {
                            None
                        };
                        points.push(SweepPoint {
                            n,
                            delta,
                            tau_q,
                            xi,
                            tau_n,
                            d_minus1: m1.map(|v| v.0),
                            d_plus1: p1.map(|v| v.0),
                            log_d_minus1: m1.map(|v| v.1),
                            log_d_plus1: p1.map(|v| v.1),
                            revivals,
                            blp,
                        });
                    }
                }
            }
        }
    }

    let fits = standard_fits(&cfg, &points);

    let mut manifest = RunManifest::new("sweep", cfg.clone(), cfg.ensemble.seed, started);
    manifest.warnings = warnings;
    let mut stage = OutputStage::new(out_dir)?;
    stage.add("scaling.csv", scaling_csv(&points));
    let mut fits_json = serde_json::to_vec_pretty(&fits).expect("serializable");
    fits_json.push(b'\n');
    stage.add("fits.json", fits_json);
    manifest.finish(stage.checksums());
    stage.add("manifest.json", manifest.to_json());
    stage.commit()?;
    println!("sweep complete: {count} runs, {} fits", fits.len());
    Ok(())
}

fn non_empty<T: Copy>(axis: &[T], fallback: T) -> Vec<T> {
    if axis.is_empty() {
        vec![fallback]
    } else {
        axis.to_vec()
    }
}

fn scaling_csv(points: &[SweepPoint]) -> Vec<u8> {
    let mut out = String::from(
        "n,delta,tau_q,xi,tau_n,d_at_minus1,d_at_plus1,log_d_minus1,log_d_plus1,n_peaks,peak_h,peak_d,blp_measure\n",
    );
    for p in points {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let peaks_h: Vec<String> = p.revivals.peaks.iter().map(|q| fmt_f64(q.0)).collect();
        let peaks_d: Vec<String> = p.revivals.peaks.iter().map(|q| fmt_f64(q.1)).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            p.n,
            fmt_f64(p.delta),
            fmt_f64(p.tau_q),
            fmt_f64(p.xi),
            fmt_f64(p.tau_n),
            opt(p.d_minus1),
            opt(p.d_plus1),
            opt(p.log_d_minus1),
            opt(p.log_d_plus1),
            p.revivals.peaks.len(),
            peaks_h.join(";"),
            peaks_d.join(";"),
            opt(p.blp),
        ));
    }
    out.into_bytes()
}

/// The scaling laws this tool knows how to extract from a finished grid.
/// Emitted whenever the relevant axes carry at least three points; callers
/// doing bespoke analysis can always refit from scaling.csv.
fn standard_fits(cfg: &ExperimentConfig, points: &[SweepPoint]) -> Vec<NamedFit> {
    let mut fits = Vec::new();
    let is_white = cfg.experiment == "white";
    let is_ou = cfg.experiment == "ou";

    // Critical-point exponentials against the collapse variable.
    if is_white {
        for (field, pick) in [
            ("d_at_minus1", (|p: &SweepPoint| p.d_minus1) as fn(&SweepPoint) -> Option<f64>),
            ("d_at_plus1", |p: &SweepPoint| p.d_plus1),
        ] {
            let pts: Vec<(f64, f64)> = points
                .iter()
                .filter_map(|p| pick(p).map(|d| (p.n as f64 * p.xi * p.xi, d)))
                .filter(|&(_, d)| d > 0.0)
                .collect();
            if pts.len() >= 3 {
                if let Ok(fit) = fit_scaling(&pts, FitModel::Exponential, "N xi^2") {
                    fits.push(NamedFit { name: format!("ln_{field}_vs_n_xi2"), fit });
                }
            }
        }
    }
    if is_ou {
        for (field, pick) in [
            ("d_at_minus1", (|p: &SweepPoint| p.d_minus1) as fn(&SweepPoint) -> Option<f64>),
            ("d_at_plus1", |p: &SweepPoint| p.d_plus1),
        ] {
            let pts: Vec<(f64, f64)> = points
                .iter()
                .filter_map(|p| pick(p).map(|d| (p.n as f64 * p.xi * p.xi / p.tau_n, d)))
                .filter(|&(x, d)| d > 0.0 && x.is_finite())
                .collect();
            if pts.len() >= 3 {
                if let Ok(fit) = fit_scaling(&pts, FitModel::Exponential, "N xi^2 / tau_n") {
                    fits.push(NamedFit { name: format!("ln_{field}_vs_n_xi2_over_tau_n"), fit });
                }
            }
        }
    }

    // Revival scaling: match peaks across runs by their field position.
    let reference = points.iter().max_by_key(|p| p.revivals.peaks.len());
    if let Some(reference) = reference {
        for (idx, &(h_ref, _)) in reference.revivals.peaks.iter().enumerate() {
            let peak_at = |p: &SweepPoint| -> Option<f64> {
                p.revivals
                    .peaks
                    .iter()
                    .min_by(|a, b| {
                        (a.0 - h_ref).abs().partial_cmp(&(b.0 - h_ref).abs()).unwrap()
                    })
                    .filter(|q| (q.0 - h_ref).abs() < 0.1)
                    .map(|q| q.1)
            };
            if is_white && cfg.sweep.xi.len() >= 3 {
                let pts: Vec<(f64, f64)> = points
                    .iter()
                    .filter_map(|p| peak_at(p).map(|d| (p.xi * p.xi, d)))
                    .filter(|&(_, d)| d > 0.0)
                    .collect();
                if pts.len() >= 3 {
                    if let Ok(fit) = fit_scaling(&pts, FitModel::Exponential, "xi^2") {
                        fits.push(NamedFit { name: format!("peak{idx}_ln_dmax_vs_xi2"), fit });
                    }
                }
            }
            if is_ou && cfg.sweep.tau_n.len() >= 3 {
                // Fast-noise branch: linear in tau_n up to 100.
                let fast: Vec<(f64, f64)> = points
                    .iter()
                    .filter(|p| p.tau_n <= 100.0)
                    .filter_map(|p| peak_at(p).map(|d| (p.tau_n, d)))
                    .collect();
                if fast.len() >= 3 {
                    if let Ok(fit) = fit_scaling(&fast, FitModel::LinearInX, "tau_n") {
                        fits.push(NamedFit { name: format!("peak{idx}_dmax_vs_tau_n_fast"), fit });
                    }
                }
                // Slow-noise branch: log-log from 250 upward; the window in
                // between is deliberately left unfitted.
                let slow: Vec<(f64, f64)> = points
                    .iter()
                    .filter(|p| p.tau_n >= 250.0)
                    .filter_map(|p| peak_at(p).map(|d| (p.tau_n, d)))
                    .filter(|&(_, d)| d > 0.0)
                    .collect();
                if slow.len() >= 3 {
                    if let Ok(fit) = fit_scaling(&slow, FitModel::PowerLaw, "ln tau_n") {
                        fits.push(NamedFit {
                            name: format!("peak{idx}_ln_dmax_vs_ln_tau_n_slow"),
                            fit,
                        });
                    }
                }
            }
        }
    }

    // Backflow trend against the correlation time.
    if cfg.sweep.blp && cfg.sweep.tau_n.len() >= 4 {
        let pts: Vec<(f64, f64)> = points
            .iter()
            .filter_map(|p| p.blp.map(|m| (p.tau_n, m)))
            .collect();
        if pts.len() >= 4 {
            if let Ok(fit) = nonmarkov_vs_tau_n(&pts) {
                fits.push(NamedFit { name: "blp_vs_tau_n".into(), fit });
            }
        }
    }
    fits
}

#[derive(serde::Serialize)]
struct NamedFit {
    name: String,
    #[serde(flatten)]
    fit: ScalingFit,
}
