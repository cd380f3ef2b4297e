//! Calibration and model fitting: thermal-noise bootstrap, lateral
//! calibration, and the correlated intensity-backaction fit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitting::{levenberg_marquardt, FitError};
use crate::params::TorsionMode;
use crate::spectra::susceptibility;

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("raw spectrum invalid: {0}")]
    BadSpectrum(&'static str),
    #[error("spectrum spans {spanned:.1} linewidths around resonance; need at least {required:.0}")]
    SpanTooNarrow { spanned: f64, required: f64 },
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Uncalibrated detector-units spectrum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawSpectrum {
    /// Frequency grid, Hz, strictly increasing.
    pub freqs_hz: Vec<f64>,
    /// PSD in detector units, V²/Hz.
    pub psd: Vec<f64>,
}

impl RawSpectrum {
    pub fn validate(&self) -> Result<(), CalibError> {
        if self.freqs_hz.len() < 8 || self.freqs_hz.len() != self.psd.len() {
            return Err(CalibError::BadSpectrum("length mismatch or too short"));
        }
        for i in 1..self.freqs_hz.len() {
            if self.freqs_hz[i] <= self.freqs_hz[i - 1] {
                return Err(CalibError::BadSpectrum("grid not strictly increasing"));
            }
        }
        if self.psd.iter().any(|&p| !(p.is_finite() && p > 0.0)) {
            return Err(CalibError::BadSpectrum("PSD must be finite and positive"));
        }
        Ok(())
    }

    fn check_span(&self, mode: &TorsionMode) -> Result<(), CalibError> {
        let f_m = mode.omega_m / (2.0 * std::f64::consts::PI);
        let linewidth = mode.gamma_m / (2.0 * std::f64::consts::PI);
        let lo = self.freqs_hz[0];
        let hi = *self.freqs_hz.last().unwrap();
        let spanned = ((hi - f_m).min(f_m - lo)).max(0.0) * 2.0 / linewidth;
        if !(lo < f_m && f_m < hi) || spanned < 10.0 {
            return Err(CalibError::SpanTooNarrow {
                spanned,
                required: 10.0,
            });
        }
        Ok(())
    }
}

/// Thermal-bootstrap calibration result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapFit {
    /// Transduction gain, V/rad.
    pub gain: f64,
    pub gain_sigma: f64,
    /// Detector noise floor, V²/Hz.
    pub floor: f64,
    pub floor_sigma: f64,
    /// RMS fit residual, V²/Hz.
    pub residual: f64,
}

/// Fit g²·S_th·|χ_m|² + floor to a raw spectrum, bootstrapping the gain off
/// the thermal model of the mode.
pub fn bootstrap_calibration(
    raw: &RawSpectrum,
    mode: &TorsionMode,
) -> Result<BootstrapFit, CalibError> {
    raw.validate()?;
    raw.check_span(mode)?;
    let s_tau_th = mode.thermal_torque_psd();
    let thermal_shape: Vec<f64> = raw
        .freqs_hz
        .iter()
        .map(|&f| s_tau_th * susceptibility(mode, 2.0 * std::f64::consts::PI * f).norm_sqr())
        .collect();
    // Scale the parameters to order unity for the solver.
    let peak = raw
        .psd
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let shape_peak = thermal_shape
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let g_sq_scale = peak / shape_peak;
    let floor_scale = raw.psd.iter().cloned().fold(f64::INFINITY, f64::min).max(peak * 1e-12);
    let n = raw.psd.len();
    let fit = levenberg_marquardt(
        |p, res, jac| {
            for i in 0..n {
                res[i] = p[0] * g_sq_scale * thermal_shape[i] + p[1] * floor_scale - raw.psd[i];
                jac[i][0] = g_sq_scale * thermal_shape[i];
                jac[i][1] = floor_scale;
            }
        },
        &[0.5, 0.5],
        n,
        200,
    )?;
    let g_sq = fit.params[0] * g_sq_scale;
    if g_sq <= 0.0 {
        return Err(CalibError::Fit(FitError::Degenerate(
            "non-positive inferred gain",
        )));
    }
    let gain = g_sq.sqrt();
    // σ_g = σ_{g²}/(2g).
    let gain_sigma = fit.sigma(0) * g_sq_scale / (2.0 * gain);
    Ok(BootstrapFit {
        gain,
        gain_sigma,
        floor: fit.params[1] * floor_scale,
        floor_sigma: fit.sigma(1) * floor_scale,
        residual: fit.residual,
    })
}

/// Angular calibration from a measured lateral displacement response:
/// ∂V/∂θ = 2·L_OL·∂V/∂Δx.
pub fn lateral_calibration(dv_dx: f64, lever_arm: f64) -> f64 {
    2.0 * lever_arm * dv_dx
}

/// Correlated intensity-backaction fit outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationFit {
    /// Imprecision floor, rad²/Hz.
    pub s_imp: f64,
    pub s_imp_sigma: f64,
    /// Intensity-noise backaction torque PSD, N²m²/Hz.
    pub s_tau_im: f64,
    pub s_tau_im_sigma: f64,
    /// Correlation amplitude multiplying Re[χ_m].
    pub c: f64,
    pub c_sigma: f64,
    /// RMS fit residual, rad²/Hz.
    pub residual: f64,
}

/// Fit S_imp + (S_IM + S_th)·|χ_m|² + C·Re[χ_m] to a calibrated spectrum
/// (rad²/Hz) with the thermal torque PSD supplied externally.
pub fn fit_correlations(
    freqs_hz: &[f64],
    psd: &[f64],
    mode: &TorsionMode,
    s_tau_th: f64,
) -> Result<CorrelationFit, CalibError> {
    let raw = RawSpectrum {
        freqs_hz: freqs_hz.to_vec(),
        psd: psd.to_vec(),
    };
    raw.validate()?;
    raw.check_span(mode)?;
    let n = psd.len();
    let mut chi_sq = Vec::with_capacity(n);
    let mut chi_re = Vec::with_capacity(n);
    for &f in freqs_hz {
        let chi = susceptibility(mode, 2.0 * std::f64::consts::PI * f);
        chi_sq.push(chi.norm_sqr());
        chi_re.push(chi.re);
    }
    let peak_sq = chi_sq.iter().cloned().fold(0.0, f64::max);
    let peak_re = chi_re.iter().map(|r| r.abs()).fold(0.0, f64::max);
    let psd_peak = psd.iter().cloned().fold(0.0, f64::max);
    let psd_floor = psd.iter().cloned().fold(f64::INFINITY, f64::min);
    // Order-unity scalings from peak-height heuristics.
    let imp_scale = psd_floor;
    let im_scale = psd_peak / peak_sq;
    let c_scale = psd_peak / peak_re;
    let flat = psd_floor >= 0.99 * psd_peak;
    if flat {
        return Err(CalibError::Fit(FitError::Degenerate(
            "spectrum is flat; correlation model unidentifiable",
        )));
    }
    let fit = levenberg_marquardt(
        |p, res, jac| {
            for i in 0..n {
                let model = p[0] * imp_scale
                    + (p[1] * im_scale + s_tau_th) * chi_sq[i]
                    + p[2] * c_scale * chi_re[i];
                res[i] = model - psd[i];
                jac[i][0] = imp_scale;
                jac[i][1] = im_scale * chi_sq[i];
                jac[i][2] = c_scale * chi_re[i];
            }
        },
        &[0.5, 0.5, 0.0],
        n,
        200,
    )?;
    Ok(CorrelationFit {
        s_imp: fit.params[0] * imp_scale,
        s_imp_sigma: fit.sigma(0) * imp_scale,
        s_tau_im: fit.params[1] * im_scale,
        s_tau_im_sigma: fit.sigma(1) * im_scale,
        c: fit.params[2] * c_scale,
        c_sigma: fit.sigma(2) * c_scale,
        residual: fit.residual,
    })
}

/// Synthetic raw spectrum of a calibrated thermal peak over a white floor,
/// with multiplicative estimation noise of relative scale 1/√n_avg.
pub fn synthesize_raw_spectrum(
    mode: &TorsionMode,
    gain: f64,
    floor: f64,
    freqs_hz: &[f64],
    n_avg: usize,
    seed: u64,
) -> RawSpectrum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma_rel = 1.0 / (n_avg as f64).sqrt();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let s_tau_th = mode.thermal_torque_psd();
    let psd = freqs_hz
        .iter()
        .map(|&f| {
            let model = gain * gain
                * s_tau_th
                * susceptibility(mode, 2.0 * std::f64::consts::PI * f).norm_sqr()
                + floor;
            model * (1.0 + sigma_rel * unit.sample(&mut rng)).max(0.05)
        })
        .collect();
    RawSpectrum {
        freqs_hz: freqs_hz.to_vec(),
        psd,
    }
}

/// Synthetic calibrated spectrum with correlated intensity backaction.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_correlated_spectrum(
    mode: &TorsionMode,
    s_imp: f64,
    s_tau_im: f64,
    c: f64,
    s_tau_th: f64,
    freqs_hz: &[f64],
    n_avg: usize,
    seed: u64,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma_rel = 1.0 / (n_avg as f64).sqrt();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    freqs_hz
        .iter()
        .map(|&f| {
            let chi = susceptibility(mode, 2.0 * std::f64::consts::PI * f);
            let model = s_imp + (s_tau_im + s_tau_th) * chi.norm_sqr() + c * chi.re;
            model * (1.0 + sigma_rel * unit.sample(&mut rng)).max(0.05)
        })
        .collect()
}
