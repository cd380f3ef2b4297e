//! Closed-form frequency-domain noise models: mechanical susceptibility,
//! component PSDs, total spectra, and quantum-limit quantities.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::CODATA;
use crate::params::{Detector, ProbeBeam, TorsionMode};
use crate::series::{SeriesError, SpectrumSeries};

#[derive(Debug, Error)]
pub enum SpectraError {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("extraneous noise must be zero for the quantum-limit optimum")]
    ExtraneousNoise,
}

/// Mechanical susceptibility χ_m(ω) = I⁻¹/(ω² − ω_m² − i·γ_m·ω), rad/(N·m).
///
/// The magnitude at resonance is Q/(I·ω_m²).
pub fn susceptibility(mode: &TorsionMode, omega: f64) -> Complex64 {
    let denom = Complex64::new(
        omega * omega - mode.omega_m * mode.omega_m,
        -mode.gamma_m * omega,
    );
    denom.inv() / mode.moment_of_inertia
}

/// Shot-noise imprecision of the far-field split detection with the beam
/// focused on the ribbon, plus the extraneous floor:
/// (1/w₀²)·(ħcλ/4πP)·(π/2η_d) + S_extra, rad²/Hz.
pub fn imprecision_psd(beam: &ProbeBeam, det: &Detector) -> f64 {
    let shot = (1.0 / (beam.waist * beam.waist))
        * (CODATA.hbar * CODATA.c * beam.wavelength / (4.0 * std::f64::consts::PI * beam.power))
        * (std::f64::consts::PI / (2.0 * det.eta_d));
    shot + det.s_extra
}

/// Radiation-pressure backaction torque PSD, w²·4πħP/(cλ) with w the spot
/// size on the ribbon, N²m²/Hz.
pub fn backaction_torque_psd(beam: &ProbeBeam) -> f64 {
    let w = beam.spot_on_target();
    w * w * 4.0 * std::f64::consts::PI * CODATA.hbar * beam.power
        / (CODATA.c * beam.wavelength)
}

/// Scalar noise budget of one probe/detector/mode configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseBudget {
    /// Total imprecision floor, rad²/Hz.
    pub s_imp: f64,
    /// Backaction torque PSD, N²m²/Hz.
    pub s_tau_ba: f64,
    /// Thermal torque PSD, N²m²/Hz.
    pub s_tau_th: f64,
    /// Zero-point peak PSD, rad²/Hz.
    pub s_zp_peak: f64,
    /// Effective imprecision quanta, S_imp/(2·S_zp_peak).
    pub n_imp: f64,
    /// Imprecision-backaction product, J²s².
    pub product: f64,
    /// Total receiver efficiency η_SD·η_d.
    pub eta_total: f64,
    /// Thermal occupation of the bath.
    pub n_th: f64,
    /// Imprecision relative to the standard quantum limit, dB:
    /// 10·log₁₀((1/4)/n_imp).
    pub imp_db_below_sql: f64,
}

/// Assemble every scalar of the noise budget. With `s_extra = 0` the product
/// equals ħ²/(η_SD·η_d)·(w/w₀)² to machine precision.
pub fn budget(beam: &ProbeBeam, det: &Detector, mode: &TorsionMode) -> NoiseBudget {
    let s_imp = imprecision_psd(beam, det);
    let s_tau_ba = backaction_torque_psd(beam);
    let s_zp_peak = mode.zero_point_peak_psd();
    let n_imp = s_imp / (2.0 * s_zp_peak);
    NoiseBudget {
        s_imp,
        s_tau_ba,
        s_tau_th: mode.thermal_torque_psd(),
        s_zp_peak,
        n_imp,
        product: s_imp * s_tau_ba,
        eta_total: det.eta_total(),
        n_th: mode.thermal_occupation(),
        imp_db_below_sql: 10.0 * (0.25 / n_imp).log10(),
    }
}

/// Imprecision-backaction correlation model: an extra white intensity-noise
/// torque `s_tau_im` and a correlation amplitude `c` entering the measured
/// spectrum as c·Re[χ_m(ω)].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Correlation {
    /// Classical intensity-noise backaction torque PSD, N²m²/Hz.
    pub s_tau_im: f64,
    /// Correlation amplitude; units chosen so c·Re[χ_m] is rad²/Hz.
    pub c: f64,
}

/// Scalar inputs of the measured-spectrum model, kept separate from the
/// probe/detector so individual terms can be switched off.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumModel {
    pub s_imp: f64,
    pub s_tau_ba: f64,
    pub s_tau_th: f64,
    pub s_zp_peak: f64,
    pub correlation: Option<Correlation>,
}

impl SpectrumModel {
    pub fn from_system(beam: &ProbeBeam, det: &Detector, mode: &TorsionMode) -> Self {
        Self {
            s_imp: imprecision_psd(beam, det),
            s_tau_ba: backaction_torque_psd(beam),
            s_tau_th: mode.thermal_torque_psd(),
            s_zp_peak: mode.zero_point_peak_psd(),
            correlation: None,
        }
    }

    pub fn with_correlation(mut self, correlation: Option<Correlation>) -> Self {
        self.correlation = correlation;
        self
    }

    /// Evaluate the per-point measured spectrum
    /// S_imp + |χ|²·(S_BA + S_th + S_IM) + S_zp(ω) + c·Re[χ]
    /// on `freqs` (rad/s). The zero-point term carries the same Lorentzian
    /// lineshape as the thermal term, scaled to its stated peak.
    pub fn evaluate(
        &self,
        mode: &TorsionMode,
        freqs: &[f64],
    ) -> Result<SpectrumSeries, SpectraError> {
        let n = freqs.len();
        let chi_res_sq = susceptibility(mode, mode.omega_m).norm_sqr();
        let (s_tau_im, c) = self
            .correlation
            .map_or((0.0, 0.0), |corr| (corr.s_tau_im, corr.c));

        let mut imprecision = Vec::with_capacity(n);
        let mut backaction = Vec::with_capacity(n);
        let mut thermal = Vec::with_capacity(n);
        let mut zero_point = Vec::with_capacity(n);
        let mut correlation = Vec::with_capacity(n);
        for &omega in freqs {
            let chi = susceptibility(mode, omega);
            let chi_sq = chi.norm_sqr();
            imprecision.push(self.s_imp);
            backaction.push(chi_sq * (self.s_tau_ba + s_tau_im));
            thermal.push(chi_sq * self.s_tau_th);
            zero_point.push(self.s_zp_peak * chi_sq / chi_res_sq);
            correlation.push(c * chi.re);
        }
        Ok(SpectrumSeries::from_components(
            freqs.to_vec(),
            imprecision,
            backaction,
            thermal,
            zero_point,
            correlation,
        )?)
    }
}

/// Measured spectrum of the configured system on `freqs` (rad/s).
pub fn total_spectrum(
    beam: &ProbeBeam,
    det: &Detector,
    mode: &TorsionMode,
    freqs: &[f64],
    correlation: Option<Correlation>,
) -> Result<SpectrumSeries, SpectraError> {
    SpectrumModel::from_system(beam, det, mode)
        .with_correlation(correlation)
        .evaluate(mode, freqs)
}

/// On-resonance added measurement noise S_imp(P) + |χ(ω_m)|²·S_BA(P) for a
/// focused beam (w = w₀) with power `power`, rad²/Hz.
pub fn added_noise_on_resonance(
    beam: &ProbeBeam,
    det: &Detector,
    mode: &TorsionMode,
    power: f64,
) -> f64 {
    let mut b = *beam;
    b.power = power;
    b.focus_offset = 0.0;
    let det0 = Detector {
        eta_d: det.eta_d,
        s_extra: 0.0,
    };
    let chi_sq = susceptibility(mode, mode.omega_m).norm_sqr();
    imprecision_psd(&b, &det0) + chi_sq * backaction_torque_psd(&b)
}

/// Power optimum of the added noise and its value at the optimum.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SqlOptimum {
    /// Power minimizing the on-resonance added noise, W.
    pub p_opt: f64,
    /// Added noise at the optimum, S_zp(ω_m)/√(η_SD·η_d), rad²/Hz.
    pub added_min: f64,
}

/// Analytic minimum over power of the on-resonance added noise for a focused
/// beam. Requires a zero extraneous floor; the detector's quantum efficiency
/// sets how far above the standard quantum limit the optimum sits.
pub fn sql_optimal_power(
    beam: &ProbeBeam,
    det: &Detector,
    mode: &TorsionMode,
) -> Result<SqlOptimum, SpectraError> {
    if det.s_extra != 0.0 {
        return Err(SpectraError::ExtraneousNoise);
    }
    // S_imp = a/P and |χ|²·S_BA = b·P; the optimum is P* = √(a/b) with
    // minimum 2√(ab) = S_zp(ω_m)/√η.
    let a = CODATA.hbar * CODATA.c * beam.wavelength
        / (8.0 * beam.waist * beam.waist * det.eta_d);
    let chi_sq = susceptibility(mode, mode.omega_m).norm_sqr();
    let b = chi_sq * beam.waist * beam.waist * 4.0 * std::f64::consts::PI * CODATA.hbar
        / (CODATA.c * beam.wavelength);
    Ok(SqlOptimum {
        p_opt: (a / b).sqrt(),
        added_min: 2.0 * (a * b).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Detector, ProbeBeam, TorsionMode};
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn device_mode() -> TorsionMode {
        TorsionMode::new(2.0 * std::f64::consts::PI * 52.5e3, 3.3e7, 3.8e-18, 295.0).unwrap()
    }

    fn beam(power: f64, waist: f64) -> ProbeBeam {
        ProbeBeam {
            wavelength: 850.0e-9,
            power,
            waist,
            focus_offset: 0.0,
            lever_arm: 0.5,
            lateral_offset: 0.0,
        }
    }

    fn ideal_detector() -> Detector {
        Detector {
            eta_d: 1.0,
            s_extra: 0.0,
        }
    }

    #[test]
    fn susceptibility_magnitude_at_resonance() {
        let mode = device_mode();
        let chi = susceptibility(&mode, mode.omega_m);
        // Q/(I·ω_m²)
        assert!(rel(chi.norm(), 7.98090e13) < 1e-4);
        assert!(rel(chi.norm(), mode.q / (mode.moment_of_inertia * mode.omega_m.powi(2))) < 1e-12);
    }

    #[test]
    fn susceptibility_static_magnitude() {
        let mode = device_mode();
        let chi = susceptibility(&mode, 0.0);
        assert!(rel(chi.norm(), 2.41846e6) < 1e-4);
    }

    #[test]
    fn susceptibility_lorentzian_symmetry() {
        // For vanishing damping the magnitude is symmetric about resonance to
        // first order in the detuning.
        let mode = TorsionMode::new(1.0e5, 1.0e12, 1.0e-18, 295.0).unwrap();
        let eps = 1.0e-4;
        let lo = susceptibility(&mode, mode.omega_m * (1.0 - eps)).norm();
        let hi = susceptibility(&mode, mode.omega_m * (1.0 + eps)).norm();
        assert!(rel(lo, hi) < 2.0 * eps);
    }

    #[test]
    fn imprecision_matches_hand_values() {
        let det = ideal_detector();
        let s = imprecision_psd(&beam(10.0e-3, 60.0e-6), &det);
        assert!(rel(s, 9.3309e-23) < 1e-4);
        let det75 = Detector {
            eta_d: 0.75,
            s_extra: 0.0,
        };
        let s = imprecision_psd(&beam(1.0e-3, 60.0e-6), &det75);
        assert!(rel(s, 1.24412e-21) < 1e-4);
    }

    #[test]
    fn imprecision_scales_inverse_power() {
        let det = ideal_detector();
        let s1 = imprecision_psd(&beam(1.0e-3, 60.0e-6), &det);
        let s2 = imprecision_psd(&beam(2.0e-3, 60.0e-6), &det);
        assert!(rel(s2, s1 / 2.0) < 1e-14);
    }

    #[test]
    fn backaction_matches_hand_value() {
        let s = backaction_torque_psd(&beam(1.0e-3, 60.0e-6));
        assert!(rel(s, 1.872198e-47) < 1e-4);
    }

    #[test]
    fn backaction_doubles_at_rayleigh_offset() {
        let b0 = beam(1.0e-3, 60.0e-6);
        let mut b = b0;
        b.focus_offset = b.rayleigh_range();
        assert!(rel(backaction_torque_psd(&b), 2.0 * backaction_torque_psd(&b0)) < 1e-13);
        let mut dark = b0;
        dark.power = 1e-300;
        assert!(backaction_torque_psd(&dark) < 1e-340_f64.max(f64::MIN_POSITIVE * 1e10));
    }

    #[test]
    fn product_is_half_pi_hbar_squared_when_focused() {
        let mode = device_mode();
        let det = ideal_detector();
        for p in [1e-6, 1e-4, 1e-2, 1.0] {
            let nb = budget(&beam(p, 60.0e-6), &det, &mode);
            assert!(rel(nb.product, 1.746862e-68) < 1e-4);
            assert!(
                rel(
                    nb.product,
                    std::f64::consts::FRAC_PI_2 * CODATA.hbar * CODATA.hbar
                ) < 1e-12
            );
        }
    }

    #[test]
    fn quoted_floor_gives_four_milliquanta() {
        // An imprecision floor of 1.4e-22 rad²/Hz over the device zero-point
        // peak corresponds to n_imp ≈ 0.004, i.e. 18 dB below the SQL.
        let mode = device_mode();
        let s_zp = mode.zero_point_peak_psd();
        let n_imp = 1.4e-22 / (2.0 * s_zp);
        assert!(rel(n_imp, 0.004) < 0.05);
        let db = 10.0 * (0.25 / 0.004f64).log10();
        assert!((db - 18.0).abs() < 0.2);
    }

    #[test]
    fn total_spectrum_thermal_peak() {
        // With imprecision and backaction switched off, the resonance is the
        // thermal peak S_th·|χ(ω_m)|², which dominates zero point by ~n_th.
        let mode = device_mode();
        let model = SpectrumModel {
            s_imp: 0.0,
            s_tau_ba: 0.0,
            s_tau_th: mode.thermal_torque_psd(),
            s_zp_peak: mode.zero_point_peak_psd(),
            correlation: None,
        };
        let series = model.evaluate(&mode, &[mode.omega_m]).unwrap();
        assert!(rel(series.thermal[0], 3.94165e-12) < 1e-4);
        let ratio = series.thermal[0] / series.zero_point[0];
        assert!(rel(ratio, 2.0 * mode.thermal_occupation()) < 1e-10);
    }

    #[test]
    fn total_spectrum_correlation_asymmetry() {
        let mode = device_mode();
        let det = ideal_detector();
        let b = beam(1.0e-3, 60.0e-6);
        let delta = 3.0 * mode.gamma_m;
        let freqs = [mode.omega_m - delta, mode.omega_m + delta];
        // Correlation amplitude sized to the thermal peak so the induced
        // asymmetry dominates the intrinsic lineshape asymmetry.
        let c0 = mode.thermal_torque_psd() * susceptibility(&mode, mode.omega_m).norm();
        let s = total_spectrum(
            &b,
            &det,
            &mode,
            &freqs,
            Some(Correlation {
                s_tau_im: 0.0,
                c: c0,
            }),
        )
        .unwrap();
        let asym = s.total[0] - s.total[1];
        assert!(asym.abs() > 0.0);
        let flipped = total_spectrum(
            &b,
            &det,
            &mode,
            &freqs,
            Some(Correlation {
                s_tau_im: 0.0,
                c: -c0,
            }),
        )
        .unwrap();
        let asym_flipped = flipped.total[0] - flipped.total[1];
        assert!(asym * asym_flipped < 0.0);
        // Without correlation the two sides agree to lineshape precision.
        let sym = total_spectrum(&b, &det, &mode, &freqs, None).unwrap();
        assert!(rel(sym.total[0], sym.total[1]) < 1e-6);
    }

    #[test]
    fn total_spectrum_flat_when_torques_vanish() {
        let mode = device_mode();
        let s_imp = 1.0e-22;
        let model = SpectrumModel {
            s_imp,
            s_tau_ba: 0.0,
            s_tau_th: 0.0,
            s_zp_peak: mode.zero_point_peak_psd(),
            correlation: None,
        };
        let freqs: Vec<f64> = (0..200)
            .map(|i| mode.omega_m * (0.9 + 0.2 * i as f64 / 199.0))
            .collect();
        let series = model.evaluate(&mode, &freqs).unwrap();
        for i in 0..series.len() {
            let expected = s_imp
                + model.s_zp_peak * susceptibility(&mode, freqs[i]).norm_sqr()
                    / susceptibility(&mode, mode.omega_m).norm_sqr();
            assert!(rel(series.total[i], expected) < 1e-12);
            assert_eq!(series.imprecision[i], s_imp);
        }
    }

    #[test]
    fn total_spectrum_rejects_empty_grid() {
        let mode = device_mode();
        let det = ideal_detector();
        assert!(total_spectrum(&beam(1e-3, 60e-6), &det, &mode, &[], None).is_err());
    }

    #[test]
    fn sql_added_minimum_matches_efficiency_scaling() {
        let mode = device_mode();
        let det = ideal_detector();
        let b = beam(1.0e-3, 60.0e-6);
        let opt = sql_optimal_power(&b, &det, &mode).unwrap();
        let s_zp = mode.zero_point_peak_psd();
        // η_d = 1 leaves the split-detection penalty √(π/2).
        assert!(rel(opt.added_min, s_zp * (std::f64::consts::PI / 2.0).sqrt()) < 1e-12);
        assert!(rel(opt.added_min, s_zp / det.eta_total().sqrt()) < 1e-12);
        assert!(opt.p_opt.is_finite() && opt.p_opt > 0.0);
    }

    #[test]
    fn sql_minimum_confirmed_by_power_scan() {
        let mode = device_mode();
        let det = ideal_detector();
        let b = beam(1.0e-3, 60.0e-6);
        let opt = sql_optimal_power(&b, &det, &mode).unwrap();
        let mut scan_min = f64::INFINITY;
        let decades = 6.0;
        let n = 1200;
        for i in 0..=n {
            let p = 10f64.powf(-5.0 + decades * i as f64 / n as f64);
            scan_min = scan_min.min(added_noise_on_resonance(&b, &det, &mode, p));
        }
        assert!(rel(scan_min, opt.added_min) < 0.01);
        // AM-GM bound: every scanned point sits at or above the optimum.
        assert!(scan_min >= opt.added_min * (1.0 - 1e-12));
    }

    #[test]
    fn sql_rejects_extraneous_noise() {
        let mode = device_mode();
        let det = Detector {
            eta_d: 1.0,
            s_extra: 1e-24,
        };
        assert!(sql_optimal_power(&beam(1e-3, 60e-6), &det, &mode).is_err());
    }

    proptest! {
        #[test]
        fn product_independent_of_power_and_wavelength(
            p in 1e-6f64..1.0,
            lambda in 400e-9f64..2000e-9,
            w0 in 10e-6f64..200e-6,
            eta_d in 0.1f64..1.0,
        ) {
            let det = Detector { eta_d, s_extra: 0.0 };
            let b = ProbeBeam {
                wavelength: lambda,
                power: p,
                waist: w0,
                focus_offset: 0.0,
                lever_arm: 0.5,
                lateral_offset: 0.0,
            };
            let product = imprecision_psd(&b, &det) * backaction_torque_psd(&b);
            let expected = CODATA.hbar * CODATA.hbar / det.eta_total();
            prop_assert!(rel(product, expected) < 1e-10);
            // At η ≤ 1 the product never falls below ħ².
            prop_assert!(product >= CODATA.hbar * CODATA.hbar * (1.0 - 1e-12));
        }

        #[test]
        fn imprecision_scales_inverse_waist_squared(
            w0 in 10e-6f64..300e-6,
            factor in 1.1f64..5.0,
        ) {
            let det = Detector { eta_d: 1.0, s_extra: 0.0 };
            let s1 = imprecision_psd(&beam(1e-3, w0), &det);
            let s2 = imprecision_psd(&beam(1e-3, w0 * factor), &det);
            prop_assert!(rel(s1 / s2, factor * factor) < 1e-10);
        }

        #[test]
        fn series_component_sum_invariant(
            scale in 1e-26f64..1e-18,
            c_sign in prop::bool::ANY,
        ) {
            let mode = device_mode();
            let det = ideal_detector();
            let b = beam(1e-3, 60e-6);
            let freqs: Vec<f64> = (0..64)
                .map(|i| mode.omega_m * (0.95 + 0.1 * i as f64 / 63.0))
                .collect();
            let corr = Correlation {
                s_tau_im: scale,
                c: if c_sign { 1e-38 } else { -1e-38 },
            };
            let s = total_spectrum(&b, &det, &mode, &freqs, Some(corr)).unwrap();
            prop_assert!(s.validate().is_ok());
        }
    }
}
