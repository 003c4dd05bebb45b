//! Experiment configuration: one TOML file, overridable from the command
//! line with repeated `--set key=value` flags (dotted paths, TOML-typed
//! values, so `--set sweep.n=[100,200]` works).

use serde::{Deserialize, Serialize};

use crate::CliError;
use dephasim::integrate::IntegratorConfig;
use dephasim::model::RampProtocol;
use dephasim::noise::NoiseModel;
use dephasim::pipeline::System;
use dephasim::trajectory::{EnsembleConfig, Estimator};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Physics of the drive: `noiseless`, `white`, or `ou`.
    #[serde(default = "default_experiment")]
    pub experiment: String,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub route: RouteSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub validate: ValidateSection,
}

fn default_experiment() -> String {
    "noiseless".into()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config must deserialize")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub n: usize,
    pub delta: f64,
    pub tau_q: f64,
    pub h_i: f64,
    pub h_f: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { n: 500, delta: 0.01, tau_q: 250.0, h_i: -5.0, h_f: 5.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    /// Noise strength (field * sqrt(time)).
    pub xi: f64,
    /// Correlation time; required positive for the `ou` experiment.
    pub tau_n: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { xi: 0.0, tau_n: 0.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RouteSection {
    /// `factorized`, `cross_operator`, or `trajectory`.
    pub kind: String,
}

impl Default for RouteSection {
    fn default() -> Self {
        RouteSection { kind: "cross_operator".into() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub m: usize,
    pub seed: u64,
    pub checkpoints: usize,
    pub common_noise: bool,
    /// `abs2_of_mean` or `mean_of_abs2`.
    pub estimator: String,
    /// Noise substep; 0 selects automatically.
    pub dt_noise: f64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            m: 2000,
            seed: 42,
            checkpoints: 201,
            common_noise: true,
            estimator: "abs2_of_mean".into(),
            dt_noise: 0.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// 0 disables the cap.
    pub max_step: f64,
    pub grid_points: usize,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        IntegratorSection { rel_tol: 1e-9, abs_tol: 1e-11, max_step: 0.0, grid_points: 2000 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    /// Fields at which per-mode factors are exported to modes.csv.
    pub snapshot_h: Vec<f64>,
    pub emit_modes: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into(), snapshot_h: vec![-1.0, 1.0], emit_modes: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Re-run the noiseless pipeline from a deeper starting field and
    /// record the largest |change in D| in the manifest.
    pub convergence_check: bool,
    pub h_i_check: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { convergence_check: false, h_i_check: -8.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Axis lists; empty lists hold the scalar from the base sections.
    pub n: Vec<usize>,
    pub delta: Vec<f64>,
    pub tau_q: Vec<f64>,
    pub xi: Vec<f64>,
    pub tau_n: Vec<f64>,
    /// Refuse to start when the grid would exceed this many runs.
    pub budget: usize,
    pub revival_window: Vec<f64>,
    /// Also compute the information-backflow measure per grid point.
    pub blp: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            n: Vec::new(),
            delta: Vec::new(),
            tau_q: Vec::new(),
            xi: Vec::new(),
            tau_n: Vec::new(),
            budget: 256,
            revival_window: vec![-1.0, 1.0],
            blp: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSection {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
}

impl Default for ValidateSection {
    fn default() -> Self {
        ValidateSection { n: 16, m: 1000, seed: 20240601 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RouteKind {
    Factorized,
    CrossOperator,
    Trajectory,
}

impl ExperimentConfig {
    pub fn load(path: Option<&std::path::Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut value: toml::Value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                text.parse()
                    .map_err(|e| CliError::Config(format!("config {}: {e}", p.display())))?
            }
            None => toml::Value::Table(Default::default()),
        };
        for kv in overrides {
            apply_override(&mut value, kv)?;
        }
        let cfg: ExperimentConfig = value
            .try_into()
            .map_err(|e| CliError::Config(format!("invalid configuration: {e}")))?;
        cfg.validate_semantics()?;
        Ok(cfg)
    }

    fn validate_semantics(&self) -> Result<(), CliError> {
        match self.experiment.as_str() {
            "noiseless" | "white" | "ou" => {}
            other => {
                return Err(CliError::Config(format!(
                    "experiment must be noiseless|white|ou, got {other:?}"
                )))
            }
        }
        self.route_kind()?;
        self.estimator()?;
        if self.experiment == "ou" && !(self.noise.tau_n > 0.0) {
            return Err(CliError::Config(
                "noise.tau_n must be positive for the ou experiment".into(),
            ));
        }
        if self.noise.xi < 0.0 {
            return Err(CliError::Config("noise.xi must be >= 0".into()));
        }
        if self.integrator.grid_points < 2 {
            return Err(CliError::Config("integrator.grid_points must be >= 2".into()));
        }
        if self.sweep.revival_window.len() != 2 {
            return Err(CliError::Config("sweep.revival_window must be [lo, hi]".into()));
        }
        Ok(())
    }

    pub fn route_kind(&self) -> Result<RouteKind, CliError> {
        match self.route.kind.as_str() {
            "factorized" => Ok(RouteKind::Factorized),
            "cross_operator" => Ok(RouteKind::CrossOperator),
            "trajectory" => Ok(RouteKind::Trajectory),
            other => Err(CliError::Config(format!(
                "route.kind must be factorized|cross_operator|trajectory, got {other:?}"
            ))),
        }
    }

    pub fn estimator(&self) -> Result<Estimator, CliError> {
        match self.ensemble.estimator.as_str() {
            "abs2_of_mean" => Ok(Estimator::Abs2OfMean),
            "mean_of_abs2" => Ok(Estimator::MeanOfAbs2),
            other => Err(CliError::Config(format!(
                "ensemble.estimator must be abs2_of_mean|mean_of_abs2, got {other:?}"
            ))),
        }
    }

    pub fn ramp(&self) -> Result<RampProtocol, CliError> {
        RampProtocol::new(self.model.tau_q, self.model.h_i, self.model.h_f)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn system(&self) -> Result<System, CliError> {
        System::new(self.model.n, self.model.delta, self.ramp()?)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn noise_model(&self) -> Result<NoiseModel, CliError> {
        let m = match self.experiment.as_str() {
            "noiseless" => NoiseModel::None,
            "white" => NoiseModel::White { xi: self.noise.xi },
            "ou" => NoiseModel::Ou { xi: self.noise.xi, tau_n: self.noise.tau_n },
            _ => unreachable!("validated"),
        };
        m.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(m)
    }

    pub fn integrator_config(&self) -> Result<IntegratorConfig, CliError> {
        let ramp = self.ramp()?;
        let mut cfg = IntegratorConfig::uniform(&ramp, self.integrator.grid_points)
            .map_err(|e| CliError::Config(e.to_string()))?
            .with_tols(self.integrator.rel_tol, self.integrator.abs_tol);
        if self.integrator.max_step > 0.0 {
            cfg.max_step = Some(self.integrator.max_step);
        }
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn ensemble_config(&self) -> Result<EnsembleConfig, CliError> {
        if self.ensemble.m < 2 {
            return Err(CliError::Config("ensemble.m must be >= 2".into()));
        }
        Ok(EnsembleConfig {
            n_traj: self.ensemble.m,
            seed: self.ensemble.seed,
            estimator: self.estimator()?,
            common_noise: self.ensemble.common_noise,
            dt_noise: if self.ensemble.dt_noise > 0.0 { Some(self.ensemble.dt_noise) } else { None },
            rel_tol: 1e-8,
        })
    }
}

/// Apply one `path.to.key=value` override; the value is parsed as TOML.
fn apply_override(root: &mut toml::Value, kv: &str) -> Result<(), CliError> {
    let (path, raw) = kv
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {kv:?} is not key=value")))?;
    let parsed: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .map_err(|e| CliError::Config(format!("override value {raw:?}: {e}")))?
        .remove("v")
        .expect("just inserted");
    let mut node = root;
    let parts: Vec<&str> = path.trim().split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Config(format!("override path {path:?} is malformed")));
        }
        let table = node.as_table_mut().ok_or_else(|| {
            CliError::Config(format!("override path {path:?}: {part} is not a table"))
        })?;
        if i == parts.len() - 1 {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    unreachable!("loop returns on the last component")
}
