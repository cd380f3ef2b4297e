//! Semiclassical Monte-Carlo oracle for radiation-pressure torque noise.
//!
//! Photon arrivals are Poisson in time and spatially independent across the
//! Gaussian intensity profile; each reflected photon transfers angular
//! impulse 2ħk·x about the torsion axis. A centered beam exerts zero mean
//! torque while its shot noise reproduces the closed-form backaction PSD.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::CODATA;
use crate::params::{ParamError, ProbeBeam};

#[derive(Debug, Error)]
pub enum McError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("expected photons per bin {0:.1} < 100; semiclassical sampling invalid")]
    TooFewPhotonsPerBin(f64),
    #[error("{0} bins < 1024; series too short for a PSD estimate")]
    TooFewBins(usize),
}

/// Configuration of one photon-stream realization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhotonStreamConfig {
    /// Probe beam; wavelength, power, and the spot size on the ribbon enter.
    pub beam: ProbeBeam,
    /// Bin width, s.
    pub dt: f64,
    /// Total duration, s.
    pub duration: f64,
    /// RNG seed; identical seeds reproduce bit-identical series.
    pub seed: u64,
    /// Beam center offset from the torsion axis, m.
    pub x_off: f64,
}

impl PhotonStreamConfig {
    /// Mean photon flux N = P·λ/(2πħc), 1/s.
    pub fn photon_flux(&self) -> f64 {
        self.beam.power * self.beam.wavelength / (2.0 * std::f64::consts::PI * CODATA.hbar * CODATA.c)
    }

    pub fn bins(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), McError> {
        self.beam.validate()?;
        let per_bin = self.photon_flux() * self.dt;
        if per_bin < 100.0 {
            return Err(McError::TooFewPhotonsPerBin(per_bin));
        }
        let bins = self.bins();
        if bins < 1024 {
            return Err(McError::TooFewBins(bins));
        }
        Ok(())
    }
}

/// Binned torque series from one realization.
#[derive(Debug, Clone)]
pub struct TorqueSeries {
    /// Torque per bin, N·m.
    pub tau: Vec<f64>,
    /// Bin width, s.
    pub dt: f64,
    /// Total photons drawn.
    pub n_photons: u64,
}

impl TorqueSeries {
    pub fn mean(&self) -> f64 {
        self.tau.iter().sum::<f64>() / self.tau.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.tau.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>()
            / (self.tau.len() - 1) as f64
    }

    /// Standard error of the mean torque from bin-to-bin scatter.
    pub fn mean_stderr(&self) -> f64 {
        (self.variance() / self.tau.len() as f64).sqrt()
    }
}

/// Draw the binned radiation-pressure torque series.
///
/// Each bin draws a Poisson photon count m, then the summed photon position
/// directly as Normal(m·x_off, √m·w/2) — the exact distribution of the sum of
/// m independent positions from the Gaussian intensity marginal (std w/2).
pub fn simulate_torque_series(cfg: &PhotonStreamConfig) -> Result<TorqueSeries, McError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let flux = cfg.photon_flux();
    let w = cfg.beam.spot_on_target();
    let sigma_x = 0.5 * w;
    let k = 2.0 * std::f64::consts::PI / cfg.beam.wavelength;
    let impulse = 2.0 * CODATA.hbar * k;
    let bins = cfg.bins();

    let poisson = Poisson::new(flux * cfg.dt).expect("positive mean");
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let mut tau = Vec::with_capacity(bins);
    let mut n_photons = 0u64;
    for _ in 0..bins {
        let m = poisson.sample(&mut rng);
        let count = m as u64;
        n_photons += count;
        let sum_x = m * cfg.x_off + m.sqrt() * sigma_x * unit.sample(&mut rng);
        tau.push(impulse * sum_x / cfg.dt);
    }
    Ok(TorqueSeries {
        tau,
        dt: cfg.dt,
        n_photons,
    })
}

/// White-noise PSD estimate of the torque series with its batch-means
/// uncertainty.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BackactionEstimate {
    /// Single-sided torque PSD, N²m²/Hz.
    pub s_tau: f64,
    /// Standard error of `s_tau` from batch means.
    pub stderr: f64,
    /// Photons consumed by the realization.
    pub n_photons: u64,
    /// Sample mean torque, N·m.
    pub mean_torque: f64,
    /// Standard error of the mean torque.
    pub mean_stderr: f64,
}

/// Estimate the single-sided backaction torque PSD, 2·Var(τ)·dt, for the
/// configured stream. The process is white by construction, so a variance
/// estimate replaces a periodogram.
pub fn estimate_backaction_psd(cfg: &PhotonStreamConfig) -> Result<BackactionEstimate, McError> {
    let series = simulate_torque_series(cfg)?;
    let s_tau = 2.0 * series.variance() * series.dt;

    // Batch means give the estimator spread without distributional input.
    let n_batches = 32.min(series.tau.len() / 32);
    let batch_len = series.tau.len() / n_batches;
    let mut batch_psd = Vec::with_capacity(n_batches);
    for b in 0..n_batches {
        let slice = &series.tau[b * batch_len..(b + 1) * batch_len];
        let mean = slice.iter().sum::<f64>() / slice.len() as f64;
        let var = slice.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>()
            / (slice.len() - 1) as f64;
        batch_psd.push(2.0 * var * series.dt);
    }
    let batch_mean = batch_psd.iter().sum::<f64>() / n_batches as f64;
    let batch_var = batch_psd
        .iter()
        .map(|s| (s - batch_mean) * (s - batch_mean))
        .sum::<f64>()
        / (n_batches - 1) as f64;
    Ok(BackactionEstimate {
        s_tau,
        stderr: (batch_var / n_batches as f64).sqrt(),
        n_photons: series.n_photons,
        mean_torque: series.mean(),
        mean_stderr: series.mean_stderr(),
    })
}
