//! Cold-damping analysis: closed-loop spectra, phonon occupancy, optimal
//! gain, and the in-loop occupancy estimator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{Detector, ProbeBeam, TorsionMode};
use crate::series::SpectrumSeries;
use crate::spectra::{self, SpectraError};

#[derive(Debug, Error)]
pub enum FeedbackError {
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error("optimal gain is unbounded for n_imp = 0")]
    UnboundedGain,
    #[error("in-loop peak sits below the noise floor; cannot estimate occupancy")]
    PeakBelowFloor,
}

/// Derivative (viscous) feedback configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FeedbackConfig {
    /// Feedback damping rate, rad/s (≥ 0).
    pub gamma_fb: f64,
    /// Effective imprecision quanta of the measurement driving the loop.
    pub n_imp: f64,
    /// The torsion mode being damped.
    pub mode: TorsionMode,
}

impl FeedbackConfig {
    pub fn gamma_eff(&self) -> f64 {
        self.mode.gamma_m + self.gamma_fb
    }

    /// Imprecision PSD implied by `n_imp` for this mode, rad²/Hz.
    pub fn s_imp(&self) -> f64 {
        2.0 * self.n_imp * self.mode.zero_point_peak_psd()
    }
}

/// Physical-motion and in-loop (measured) spectra of the damped oscillator.
#[derive(Debug, Clone)]
pub struct ClosedLoopSpectra {
    /// PSD of the oscillator's physical angular motion.
    pub physical: SpectrumSeries,
    /// PSD of the in-loop measurement record (motion plus squashed
    /// imprecision).
    pub in_loop: SpectrumSeries,
}

/// Closed-loop spectra under ideal derivative feedback.
///
/// The physical motion responds with the effective susceptibility (γ_eff in
/// place of γ_m) to the thermal, backaction, and zero-point-equivalent
/// torques plus the fed-back measurement noise torque (I·γ_fb·ω)²·S_imp.
/// The in-loop record adds the imprecision with its loop-induced correlation
/// factor |1 + i·I·γ_fb·ω·χ_eff(ω)|², which reduces to 1 at γ_fb = 0 and to
/// (γ_m/γ_eff)² on resonance (noise squashing).
pub fn closed_loop_spectrum(
    cfg: &FeedbackConfig,
    beam: &ProbeBeam,
    det: &Detector,
    freqs: &[f64],
) -> Result<ClosedLoopSpectra, FeedbackError> {
    let mode = &cfg.mode;
    let eff_mode = TorsionMode {
        omega_m: mode.omega_m,
        gamma_m: cfg.gamma_eff(),
        q: mode.omega_m / cfg.gamma_eff(),
        moment_of_inertia: mode.moment_of_inertia,
        temperature: mode.temperature,
    };
    let s_imp = spectra::imprecision_psd(beam, det);
    let s_tau_ba = spectra::backaction_torque_psd(beam);
    let s_tau_th = mode.thermal_torque_psd();
    // Zero-point motion expressed as an equivalent white torque so it damps
    // like the thermal term: S_zp_peak/|χ_m(ω_m)|².
    let inertia = mode.moment_of_inertia;
    let s_tau_zp = mode.zero_point_peak_psd() * (inertia * mode.gamma_m * mode.omega_m).powi(2);

    let n = freqs.len();
    let mut phys_imp = Vec::with_capacity(n);
    let mut phys_ba = Vec::with_capacity(n);
    let mut phys_th = Vec::with_capacity(n);
    let mut phys_zp = Vec::with_capacity(n);
    let mut loop_imp = Vec::with_capacity(n);
    for &omega in freqs {
        let chi_eff = spectra::susceptibility(&eff_mode, omega);
        let chi_sq = chi_eff.norm_sqr();
        let fed_back = (inertia * cfg.gamma_fb * omega).powi(2) * s_imp;
        phys_imp.push(chi_sq * fed_back);
        phys_ba.push(chi_sq * s_tau_ba);
        phys_th.push(chi_sq * s_tau_th);
        phys_zp.push(chi_sq * s_tau_zp);
        // |1 + i·I·γ_fb·ω·χ_eff|² carries both the fed-back noise and its
        // anti-correlation with the record (squashing on resonance).
        let corr =
            num_complex::Complex64::new(1.0, 0.0)
                + num_complex::Complex64::new(0.0, inertia * cfg.gamma_fb * omega) * chi_eff;
        loop_imp.push(s_imp * corr.norm_sqr());
    }
    let zeros = vec![0.0; n];
    let physical = SpectrumSeries::from_components(
        freqs.to_vec(),
        phys_imp,
        phys_ba.clone(),
        phys_th.clone(),
        phys_zp.clone(),
        zeros.clone(),
    )
    .map_err(SpectraError::from)?;
    let in_loop = SpectrumSeries::from_components(
        freqs.to_vec(),
        loop_imp,
        phys_ba,
        phys_th,
        phys_zp,
        zeros,
    )
    .map_err(SpectraError::from)?;
    Ok(ClosedLoopSpectra { physical, in_loop })
}

/// Phonon occupancy of the cold-damped mode,
/// (γ_m/γ_eff)·n_th + (γ_eff/γ_m)·n_imp.
///
/// Valid in the weak-backaction limit; a warning is logged when the fed-back
/// imprecision term dominates, i.e. the loop is past its optimum.
pub fn phonon_number(cfg: &FeedbackConfig) -> f64 {
    let n_th = cfg.mode.thermal_occupation();
    let gamma_eff = cfg.gamma_eff();
    let cooled = cfg.mode.gamma_m / gamma_eff * n_th;
    let heated = gamma_eff / cfg.mode.gamma_m * cfg.n_imp;
    if heated > cooled {
        log::warn!(
            "feedback past its optimum: fed-back imprecision {heated:.3e} exceeds residual thermal {cooled:.3e}"
        );
    }
    cooled + heated
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OptimalGain {
    /// Effective damping rate minimizing the occupancy, γ_m·√(n_th/n_imp).
    pub gamma_eff_opt: f64,
    /// Occupancy floor 2·√(n_th·n_imp).
    pub n_min: f64,
}

/// Gain optimum of the cold-damping tradeoff.
pub fn optimal_gain(cfg: &FeedbackConfig) -> Result<OptimalGain, FeedbackError> {
    if cfg.n_imp <= 0.0 {
        return Err(FeedbackError::UnboundedGain);
    }
    let n_th = cfg.mode.thermal_occupation();
    Ok(OptimalGain {
        gamma_eff_opt: cfg.mode.gamma_m * (n_th / cfg.n_imp).sqrt(),
        n_min: 2.0 * (n_th * cfg.n_imp).sqrt(),
    })
}

/// Analytic cooling curve: occupancy at each requested effective damping.
pub fn cooling_curve(cfg: &FeedbackConfig, gamma_effs: &[f64]) -> Vec<(f64, f64)> {
    gamma_effs
        .iter()
        .map(|&gamma_eff| {
            let pt = FeedbackConfig {
                gamma_fb: (gamma_eff - cfg.mode.gamma_m).max(0.0),
                ..*cfg
            };
            (gamma_eff, phonon_number(&pt))
        })
        .collect()
}

/// Occupancy from a measured in-loop spectrum: the peak height above the
/// imprecision floor at resonance, corrected by the loop gain,
/// n_m = (γ_eff/γ_m)·(S(ω_m) − floor + S_imp)/(2·S_zp).
///
/// The floor is taken from the outer quarters of the supplied grid, so the
/// series must extend well past the resonance wings.
pub fn estimate_occupancy_from_spectrum(
    series: &SpectrumSeries,
    cfg: &FeedbackConfig,
) -> Result<f64, FeedbackError> {
    let peak = series.total[series.nearest_index(cfg.mode.omega_m)];
    let n = series.len();
    let quarter = (n / 4).max(1);
    let mut edges: Vec<f64> = series.total[..quarter]
        .iter()
        .chain(series.total[n - quarter..].iter())
        .copied()
        .collect();
    edges.sort_by(f64::total_cmp);
    let floor = edges[edges.len() / 2];
    let above = peak - floor;
    if above < 0.0 {
        return Err(FeedbackError::PeakBelowFloor);
    }
    let n_m = (cfg.gamma_eff() / cfg.mode.gamma_m) * (above + cfg.s_imp())
        / (2.0 * cfg.mode.zero_point_peak_psd());
    Ok(n_m)
}
