//! Drive-field noise models and reproducible path sampling.
//!
//! The colored process is stationary Gaussian with autocorrelation
//! `(xi^2 / 2 tau_n) exp(-|t - t'| / tau_n)`; its total kernel weight is
//! `xi^2`, so the `tau_n -> 0` limit at fixed `xi` is exactly the white
//! process with `<S(t) S(t')> = xi^2 delta(t - t')`. No rescaling is applied
//! anywhere when switching between the two.
//!
//! Random streams are counter-based: every work item derives its own
//! generator from `(master seed, labels...)`, so results never depend on
//! thread scheduling.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseModel {
    None,
    White { xi: f64 },
    Ou { xi: f64, tau_n: f64 },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::None => Ok(()),
            NoiseModel::White { xi } => {
                if xi < 0.0 || !xi.is_finite() {
                    Err(Error::invalid(format!("noise strength must be >= 0, got {xi}")))
                } else {
                    Ok(())
                }
            }
            NoiseModel::Ou { xi, tau_n } => {
                if xi < 0.0 || !xi.is_finite() {
                    Err(Error::invalid(format!("noise strength must be >= 0, got {xi}")))
                } else if !(tau_n > 0.0) {
                    Err(Error::invalid(format!("correlation time must be > 0, got {tau_n}")))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn xi(&self) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::White { xi } | NoiseModel::Ou { xi, .. } => xi,
        }
    }

    /// Stationary variance `xi^2 / (2 tau_n)` of the colored process.
    pub fn stationary_variance(&self) -> Option<f64> {
        match *self {
            NoiseModel::Ou { xi, tau_n } => Some(xi * xi / (2.0 * tau_n)),
            _ => None,
        }
    }
}

/// SplitMix64 round; the standard 64-bit mixer.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic generator for the work item identified by `labels`.
pub fn stream_rng(master: u64, labels: &[u64]) -> ChaCha12Rng {
    let mut state = master ^ 0xd1b5_4a32_d192_ed03;
    for &l in labels {
        state = splitmix64(&mut state) ^ l.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(seed)
}

/// Exact stationary discretization of the colored process on a uniform grid.
///
/// `S_{n+1} = S_n e^{-dt/tau_n} + sigma_step N(0,1)` with
/// `sigma_step^2 = (xi^2 / 2 tau_n)(1 - e^{-2 dt/tau_n})`, started from the
/// stationary law. Identical seeds give identical paths.
pub fn sample_ou_path(noise: &NoiseModel, grid: &[f64], seed: u64) -> Result<Vec<f64>> {
    let mut rng = stream_rng(seed, &[0x0u64]);
    sample_ou_path_with(noise, grid, &mut rng)
}

pub(crate) fn sample_ou_path_with<R: Rng>(
    noise: &NoiseModel,
    grid: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (xi, tau_n) = match *noise {
        NoiseModel::Ou { xi, tau_n } => (xi, tau_n),
        _ => return Err(Error::invalid("colored-path sampling requires the OU noise model")),
    };
    noise.validate()?;
    if grid.len() < 2 {
        return Err(Error::invalid("noise grid needs at least 2 points"));
    }
    let dt = grid[1] - grid[0];
    if !(dt > 0.0) {
        return Err(Error::invalid("noise grid must be increasing"));
    }
    for w in grid.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt {
            return Err(Error::invalid("noise grid must be uniform"));
        }
    }
    let var_stat = xi * xi / (2.0 * tau_n);
    let decay = (-dt / tau_n).exp();
    let sigma_step = (var_stat * (1.0 - decay * decay)).sqrt();

    let mut path = Vec::with_capacity(grid.len());
    let z0: f64 = rng.sample(StandardNormal);
    let mut s = var_stat.sqrt() * z0;
    path.push(s);
    for _ in 1..grid.len() {
        let z: f64 = rng.sample(StandardNormal);
        s = s * decay + sigma_step * z;
        path.push(s);
    }
    Ok(path)
}

/// Piecewise-constant white-noise representation: one independent value per
/// substep with variance `xi^2 / dt`, converging to the ideal process as
/// `dt -> 0`.
pub(crate) fn sample_white_path_with<R: Rng>(
    xi: f64,
    n_steps: usize,
    dt: f64,
    rng: &mut R,
) -> Vec<f64> {
    let sigma = xi / dt.sqrt();
    (0..n_steps)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            sigma * z
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|j| j as f64 * dt).collect()
    }

    #[test]
    fn zero_strength_gives_zero_path() {
        let noise = NoiseModel::Ou { xi: 0.0, tau_n: 50.0 };
        let path = sample_ou_path(&noise, &uniform_grid(100, 0.5), 7).unwrap();
        assert!(path.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn rejects_non_uniform_grid() {
        let noise = NoiseModel::Ou { xi: 0.01, tau_n: 5.0 };
        let grid = vec![0.0, 1.0, 2.5];
        assert!(sample_ou_path(&noise, &grid, 1).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let noise = NoiseModel::Ou { xi: 0.003, tau_n: 50.0 };
        let grid = uniform_grid(1000, 0.25);
        let a = sample_ou_path(&noise, &grid, 42).unwrap();
        let b = sample_ou_path(&noise, &grid, 42).unwrap();
        let c = sample_ou_path(&noise, &grid, 43).unwrap();
        assert_eq!(a, b);
        assert!(a != c);
    }

    #[test]
    fn stationary_variance_matches_closed_form() {
        // Monte Carlo over independent stationary draws (the first sample of
        // each path is exactly stationary).
        let xi = 0.003;
        let tau_n = 50.0;
        let noise = NoiseModel::Ou { xi, tau_n };
        let target = xi * xi / (2.0 * tau_n);
        let m = 100_000;
        let mut rng = stream_rng(2024, &[1]);
        let grid = uniform_grid(2, 1.0);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..m {
            let s0 = sample_ou_path_with(&noise, &grid, &mut rng).unwrap()[0];
            sum += s0;
            sum_sq += s0 * s0;
        }
        let mean = sum / m as f64;
        let var = sum_sq / m as f64 - mean * mean;
        // Var of the sample variance of a Gaussian: 2 sigma^4 / (m - 1).
        let se = (2.0 * target * target / (m as f64 - 1.0)).sqrt();
        assert!(
            (var - target).abs() < 3.0 * se,
            "var {var} vs {target}, se {se}"
        );
    }

    #[test]
    fn autocorrelation_decays_exponentially() {
        let xi = 0.003;
        let tau_n = 50.0;
        let noise = NoiseModel::Ou { xi, tau_n };
        let dt = 1.0;
        let n = 400_000;
        let grid = uniform_grid(n, dt);
        let path = sample_ou_path(&noise, &grid, 99).unwrap();
        let mean = path.iter().sum::<f64>() / n as f64;
        let var = path.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n as f64;
        for lag in [10usize, 50, 100] {
            let mut acc = 0.0;
            for j in 0..n - lag {
                acc += (path[j] - mean) * (path[j + lag] - mean);
            }
            let rho = acc / ((n - lag) as f64 * var);
            let expected = (-(lag as f64) * dt / tau_n).exp();
            // Bartlett-style error scale for an exponentially correlated
            // series: effective sample count ~ n dt / (2 tau_n).
            let se = ((2.0 * tau_n / dt) / n as f64).sqrt() * 2.0;
            assert!(
                (rho - expected).abs() < 3.0 * se,
                "lag {lag}: rho {rho} vs {expected} (se {se})"
            );
        }
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(NoiseModel::White { xi: -0.1 }.validate().is_err());
        assert!(NoiseModel::Ou { xi: 0.1, tau_n: 0.0 }.validate().is_err());
        assert!(NoiseModel::Ou { xi: 0.1, tau_n: -2.0 }.validate().is_err());
        assert!(NoiseModel::None.validate().is_ok());
    }
}
