//! Shared experiment execution for the subcommands.

use num_complex::Complex64 as C64;

use crate::config::{ExperimentConfig, RouteKind};
use crate::CliError;
use dephasim::noise::NoiseModel;
use dephasim::pipeline::{
    cross_operator_series, factorized_series, noiseless_series, trajectory_series, RunOutput,
};

pub struct ComputedRun {
    pub output: RunOutput,
    pub warnings: Vec<String>,
    pub diagnostics: serde_json::Value,
}

pub fn compute(cfg: &ExperimentConfig) -> Result<ComputedRun, CliError> {
    let sys = cfg.system()?;
    let noise = cfg.noise_model()?;
    let route = cfg.route_kind()?;

    // Zero noise reduces every route to the noiseless pipeline, bit for bit.
    let effective_noiseless = matches!(noise, NoiseModel::None) || noise.xi() == 0.0;

    let (output, trajectories) = if effective_noiseless {
        let icfg = cfg.integrator_config()?;
        (noiseless_series(&sys, &icfg).map_err(numeric)?, None)
    } else {
        match route {
            RouteKind::Factorized => {
                let icfg = cfg.integrator_config()?;
                (factorized_series(&sys, &noise, &icfg).map_err(numeric)?, None)
            }
            RouteKind::CrossOperator => {
                let icfg = cfg.integrator_config()?;
                (cross_operator_series(&sys, &noise, &icfg).map_err(numeric)?, None)
            }
            RouteKind::Trajectory => {
                let ens = cfg.ensemble_config()?;
                let (out, run) =
                    trajectory_series(&sys, &noise, &ens, cfg.ensemble.checkpoints)
                        .map_err(numeric)?;
                (out, Some(run))
            }
        }
    };

    let mut warnings = Vec::new();
    let diag = output.diagnostics;
    let max_std_err = trajectories
        .as_ref()
        .map(|run| run.global.iter().map(|e| e.std_err).fold(0.0, f64::max));
    if diag.positivity_warning {
        warnings.push(format!(
            "positivity: branch density matrix reached eigenvalue {:.3e}",
            diag.min_rho_eigenvalue.unwrap_or(f64::NAN)
        ));
    }
    if let Some(ns) = diag.max_spectral_norm {
        if ns > 1.0 + 1e-6 {
            warnings.push(format!("contractivity: cross operator norm reached {ns:.6}"));
        }
    }
    let diagnostics = serde_json::json!({
        "min_rho_eigenvalue": diag.min_rho_eigenvalue,
        "max_trace_defect": diag.max_trace_defect,
        "max_spectral_norm": diag.max_spectral_norm,
        "max_norm_defect": diag.max_norm_defect,
        "trajectory_max_std_err": max_std_err,
    });

    Ok(ComputedRun { output, warnings, diagnostics })
}

/// Coherence magnitude series used by the backflow measure, per route:
/// complex trace on the exact routes, the square root of the assembled
/// factor product on the branch-factorized route.
pub fn coherence_magnitude(run: &ComputedRun) -> Result<Vec<C64>, CliError> {
    if let Some(d) = &run.output.series.d_complex {
        return Ok(d.clone());
    }
    match run.output.series.route {
        dephasim::observables::Route::Factorized => Ok(run
            .output
            .series
            .d
            .iter()
            .map(|&v| C64::new(v.max(0.0).sqrt(), 0.0))
            .collect()),
        other => Err(CliError::Config(format!(
            "route {other:?} provides no coherence series for the backflow measure"
        ))),
    }
}

fn numeric(e: dephasim::Error) -> CliError {
    CliError::Numeric(e.to_string())
}
