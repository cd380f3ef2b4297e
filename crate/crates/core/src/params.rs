//! Device and probe parameter types plus the derived oscillator quantities
//! every other module consumes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::CODATA;

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    Invalid {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("derived quantity {name} is not finite")]
    NonFinite { name: &'static str },
}

fn require_positive(name: &'static str, value: f64) -> Result<(), ParamError> {
    if !(value.is_finite() && value > 0.0) {
        return Err(ParamError::Invalid {
            name,
            value,
            reason: "must be finite and > 0",
        });
    }
    Ok(())
}

fn require_finite(name: &'static str, value: f64) -> Result<f64, ParamError> {
    if !value.is_finite() {
        return Err(ParamError::NonFinite { name });
    }
    Ok(value)
}

/// Ribbon geometry and material parameters, with the fitted surface-profile
/// polynomial (offset, tilt, curvature) of the reflecting face.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RibbonGeometry {
    /// Length, m.
    pub length: f64,
    /// Width, m.
    pub width: f64,
    /// Thickness, m.
    pub thickness: f64,
    /// Tensile stress, Pa.
    pub stress: f64,
    /// Density, kg/m³.
    pub density: f64,
    /// Elastic modulus, Pa.
    pub youngs_modulus: f64,
    /// Intrinsic (undiluted) quality factor.
    pub q_intrinsic: f64,
    /// Surface profile constant term, m.
    pub surf_offset: f64,
    /// Surface profile linear term (slope), dimensionless.
    pub surf_tilt: f64,
    /// Surface profile quadratic term, 1/m. The face acts as a parabolic
    /// mirror of radius 1/(2·surf_curvature).
    pub surf_curvature: f64,
}

impl RibbonGeometry {
    pub fn validate(&self) -> Result<(), ParamError> {
        require_positive("length", self.length)?;
        require_positive("width", self.width)?;
        require_positive("thickness", self.thickness)?;
        if !(self.length > self.width && self.width > self.thickness) {
            return Err(ParamError::Invalid {
                name: "geometry ordering",
                value: self.width,
                reason: "requires length > width > thickness",
            });
        }
        require_positive("stress", self.stress)?;
        require_positive("density", self.density)?;
        require_positive("youngs_modulus", self.youngs_modulus)?;
        require_positive("q_intrinsic", self.q_intrinsic)?;
        require_finite("surf_offset", self.surf_offset)?;
        require_finite("surf_tilt", self.surf_tilt)?;
        require_finite("surf_curvature", self.surf_curvature)?;
        Ok(())
    }

    /// Fundamental torsion-mode angular frequency, (π/L)·√(σ/ρ), rad/s.
    pub fn angular_frequency(&self) -> f64 {
        (std::f64::consts::PI / self.length) * (self.stress / self.density).sqrt()
    }

    /// Moment of inertia of the fundamental torsion mode, ρ·L·h·w³/24, kg·m².
    pub fn moment_of_inertia(&self) -> f64 {
        self.density * self.length * self.thickness * self.width.powi(3) / 24.0
    }

    /// Dissipation-dilution estimate of the torsional quality factor,
    /// Q₀·σ·w²/(E·h²).
    pub fn dilution_q(&self) -> f64 {
        self.q_intrinsic * self.stress * self.width * self.width
            / (self.youngs_modulus * self.thickness * self.thickness)
    }

    /// Effective radius of curvature of the reflecting face, 1/(2·Ap).
    /// Infinite for a flat ribbon.
    pub fn radius_of_curvature(&self) -> f64 {
        if self.surf_curvature == 0.0 {
            f64::INFINITY
        } else {
            1.0 / (2.0 * self.surf_curvature)
        }
    }

    /// Derive the torsion mode at bath temperature `temperature` (K).
    ///
    /// `q_override` replaces the dilution estimate when a measured Q is
    /// available (ringdown values supersede the estimate for reproduction
    /// runs).
    pub fn derive_mode(
        &self,
        temperature: f64,
        q_override: Option<f64>,
    ) -> Result<TorsionMode, ParamError> {
        self.validate()?;
        require_positive("temperature", temperature)?;
        let omega_m = require_finite("omega_m", self.angular_frequency())?;
        let inertia = require_finite("moment_of_inertia", self.moment_of_inertia())?;
        let q = match q_override {
            Some(q) => {
                require_positive("q_override", q)?;
                q
            }
            None => require_finite("dilution_q", self.dilution_q())?,
        };
        TorsionMode::new(omega_m, q, inertia, temperature)
    }
}

/// Derived oscillator state of one torsion mode.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TorsionMode {
    /// Resonance angular frequency, rad/s.
    pub omega_m: f64,
    /// Damping rate, rad/s. Always equals `omega_m / q`.
    pub gamma_m: f64,
    /// Quality factor.
    pub q: f64,
    /// Moment of inertia, kg·m².
    pub moment_of_inertia: f64,
    /// Bath temperature, K.
    pub temperature: f64,
}

impl TorsionMode {
    pub fn new(
        omega_m: f64,
        q: f64,
        moment_of_inertia: f64,
        temperature: f64,
    ) -> Result<Self, ParamError> {
        require_positive("omega_m", omega_m)?;
        require_positive("q", q)?;
        require_positive("moment_of_inertia", moment_of_inertia)?;
        require_positive("temperature", temperature)?;
        let mode = Self {
            omega_m,
            gamma_m: omega_m / q,
            q,
            moment_of_inertia,
            temperature,
        };
        if !mode.is_high_q() {
            log::warn!(
                "torsion mode Q = {:.3} < 10; spectral approximations degrade",
                q
            );
        }
        Ok(mode)
    }

    /// Construct from a damping rate instead of Q.
    pub fn from_damping(
        omega_m: f64,
        gamma_m: f64,
        moment_of_inertia: f64,
        temperature: f64,
    ) -> Result<Self, ParamError> {
        require_positive("gamma_m", gamma_m)?;
        Self::new(omega_m, omega_m / gamma_m, moment_of_inertia, temperature)
    }

    /// Same mode with the quality factor replaced (damping rescaled).
    pub fn with_q(&self, q: f64) -> Result<Self, ParamError> {
        Self::new(self.omega_m, q, self.moment_of_inertia, self.temperature)
    }

    /// High-Q spectral approximations assume Q ≫ 1; flagged below 10.
    pub fn is_high_q(&self) -> bool {
        self.q >= 10.0
    }

    /// Single-sided thermal torque PSD, 4·k_B·T·I·γ_m (white), N²m²/Hz.
    pub fn thermal_torque_psd(&self) -> f64 {
        4.0 * CODATA.k_b * self.temperature * self.moment_of_inertia * self.gamma_m
    }

    /// Peak zero-point angular displacement PSD, 2ħQ/(I·ω_m²), rad²/Hz.
    pub fn zero_point_peak_psd(&self) -> f64 {
        2.0 * CODATA.hbar * self.q / (self.moment_of_inertia * self.omega_m * self.omega_m)
    }

    /// Thermal bath occupation n_th = k_B·T/(ħ·ω_m).
    pub fn thermal_occupation(&self) -> f64 {
        CODATA.k_b * self.temperature / (CODATA.hbar * self.omega_m)
    }
}

/// Gaussian probe beam parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProbeBeam {
    /// Wavelength, m.
    pub wavelength: f64,
    /// Optical power, W.
    pub power: f64,
    /// Waist (1/e² intensity radius), m.
    pub waist: f64,
    /// Signed focus offset of the waist relative to the ribbon, m. Negative
    /// values place the waist upstream (toward the lens).
    pub focus_offset: f64,
    /// Lever arm to the split photodetector, m.
    pub lever_arm: f64,
    /// Lateral offset of the beam center from the torsion axis, m.
    pub lateral_offset: f64,
}

impl ProbeBeam {
    pub fn validate(&self) -> Result<(), ParamError> {
        require_positive("wavelength", self.wavelength)?;
        require_positive("power", self.power)?;
        require_positive("waist", self.waist)?;
        require_positive("lever_arm", self.lever_arm)?;
        require_finite("focus_offset", self.focus_offset)?;
        require_finite("lateral_offset", self.lateral_offset)?;
        Ok(())
    }

    /// Diffraction half-angle θ_D = λ/(π·w₀).
    pub fn divergence_angle(&self) -> f64 {
        self.wavelength / (std::f64::consts::PI * self.waist)
    }

    /// Rayleigh range z_R = π·w₀²/λ.
    pub fn rayleigh_range(&self) -> f64 {
        std::f64::consts::PI * self.waist * self.waist / self.wavelength
    }

    /// Spot radius w(dz) = w₀·√(1+(dz/z_R)²) a distance `dz` from the waist.
    pub fn spot_radius(&self, dz: f64) -> f64 {
        let u = dz / self.rayleigh_range();
        self.waist * (1.0 + u * u).sqrt()
    }

    /// Signed wavefront radius of curvature R(dz) = dz·(1+(z_R/dz)²);
    /// infinite at the waist.
    pub fn wavefront_radius(&self, dz: f64) -> f64 {
        if dz == 0.0 {
            f64::INFINITY
        } else {
            let zr = self.rayleigh_range();
            dz * (1.0 + (zr / dz) * (zr / dz))
        }
    }

    /// Spot radius on the ribbon given the configured focus offset.
    pub fn spot_on_target(&self) -> f64 {
        self.spot_radius(self.focus_offset)
    }
}

/// Split-photodetector receiver parameters.
///
/// The split-detection efficiency 2/π is intrinsic to the receiver type and
/// is therefore fixed, not a field.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Detector {
    /// Photodetector quantum efficiency, in (0, 1].
    pub eta_d: f64,
    /// Extraneous imprecision floor added on top of shot noise, rad²/Hz.
    pub s_extra: f64,
}

impl Detector {
    pub const ETA_SD: f64 = 2.0 / std::f64::consts::PI;

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.eta_d.is_finite() && self.eta_d > 0.0 && self.eta_d <= 1.0) {
            return Err(ParamError::Invalid {
                name: "eta_d",
                value: self.eta_d,
                reason: "must lie in (0, 1]",
            });
        }
        if !(self.s_extra.is_finite() && self.s_extra >= 0.0) {
            return Err(ParamError::Invalid {
                name: "s_extra",
                value: self.s_extra,
                reason: "must be finite and >= 0",
            });
        }
        Ok(())
    }

    /// Intrinsic split-detection efficiency, 2/π.
    pub fn eta_sd(&self) -> f64 {
        Self::ETA_SD
    }

    /// Total measurement efficiency η = η_SD·η_d ≤ 2/π.
    pub fn eta_total(&self) -> f64 {
        Self::ETA_SD * self.eta_d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    /// Geometry used by the reproduction configs throughout the tests.
    pub(crate) fn device_geometry() -> RibbonGeometry {
        RibbonGeometry {
            length: 7.0e-3,
            width: 400.0e-6,
            thickness: 75.0e-9,
            stress: 0.85e9,
            density: 2700.0,
            youngs_modulus: 250.0e9,
            q_intrinsic: 7000.0,
            surf_offset: 0.0,
            surf_tilt: 0.0,
            surf_curvature: 1.0 / 0.06,
        }
    }

    pub(crate) fn device_mode() -> TorsionMode {
        TorsionMode::new(
            2.0 * std::f64::consts::PI * 52.5e3,
            3.3e7,
            3.8e-18,
            295.0,
        )
        .unwrap()
    }

    #[test]
    fn moment_of_inertia_matches_device() {
        let geom = device_geometry();
        // 2700 · 7 mm · 75 nm · (400 µm)³ / 24
        assert!(rel(geom.moment_of_inertia(), 3.78e-18) < 1e-12);
    }

    #[test]
    fn angular_frequency_from_stress_and_density() {
        let geom = device_geometry();
        let f = geom.angular_frequency() / (2.0 * std::f64::consts::PI);
        // (π/L)·√(σ/ρ) for the quoted geometry gives 40.07 kHz.
        assert!(rel(f, 40.074e3) < 1e-3);
    }

    #[test]
    fn inertia_scales_with_width_cubed() {
        let geom = device_geometry();
        let mut wide = geom;
        wide.width *= 2.0;
        assert!(rel(wide.moment_of_inertia(), 8.0 * geom.moment_of_inertia()) < 1e-14);
    }

    #[test]
    fn derive_mode_is_pure_and_deterministic() {
        let geom = device_geometry();
        let a = geom.derive_mode(295.0, None).unwrap();
        let b = geom.derive_mode(295.0, None).unwrap();
        assert_eq!(a.omega_m, b.omega_m);
        assert_eq!(a.q, b.q);
        assert!(rel(a.q, a.omega_m / a.gamma_m) < 1e-14);
    }

    #[test]
    fn derive_mode_accepts_measured_q() {
        let geom = device_geometry();
        let mode = geom.derive_mode(295.0, Some(3.3e7)).unwrap();
        assert_eq!(mode.q, 3.3e7);
        assert!(rel(mode.gamma_m, mode.omega_m / 3.3e7) < 1e-15);
    }

    #[test]
    fn derive_mode_rejects_bad_inputs() {
        let mut geom = device_geometry();
        geom.stress = -1.0;
        assert!(geom.derive_mode(295.0, None).is_err());
        let geom = device_geometry();
        assert!(geom.derive_mode(0.0, None).is_err());
    }

    #[test]
    fn thermal_torque_psd_matches_device() {
        let mode = device_mode();
        let s = mode.thermal_torque_psd();
        // 4·k_B·T·I·ω_m/Q by hand.
        assert!(rel(s, 6.18834e-40) < 1e-4);
        // Amplitude within 5% of 2.5e-20 N·m/√Hz.
        assert!(rel(s.sqrt(), 2.5e-20) < 0.05);
    }

    #[test]
    fn thermal_torque_psd_linear_in_temperature() {
        let mode = device_mode();
        let hot = TorsionMode::new(mode.omega_m, mode.q, mode.moment_of_inertia, 590.0).unwrap();
        assert!(rel(hot.thermal_torque_psd(), 2.0 * mode.thermal_torque_psd()) < 1e-14);
    }

    #[test]
    fn zero_point_peak_matches_device() {
        let mode = device_mode();
        let s = mode.zero_point_peak_psd();
        assert!(rel(s, 1.6832915e-20) < 1e-4);
        assert!(rel(s.sqrt(), 1.3e-10) < 0.03);
        assert!(rel(mode.thermal_occupation(), 1.2e8) < 0.05);
    }

    #[test]
    fn zero_point_peak_linear_in_q() {
        let mode = device_mode();
        let half = mode.with_q(mode.q / 2.0).unwrap();
        assert!(rel(half.zero_point_peak_psd(), mode.zero_point_peak_psd() / 2.0) < 1e-14);
    }

    #[test]
    fn zero_point_thermal_product_identity() {
        // S_zp·S_th·ω_m = 8·ħ·k_B·T, independent of I and Q.
        let mode = device_mode();
        let lhs = mode.zero_point_peak_psd() * mode.thermal_torque_psd() * mode.omega_m;
        let rhs = 8.0 * CODATA.hbar * CODATA.k_b * mode.temperature;
        assert!(rel(lhs, rhs) < 1e-12);
        let other = TorsionMode::new(1.0e5, 1.0e4, 5.5e-17, 77.0).unwrap();
        let lhs = other.zero_point_peak_psd() * other.thermal_torque_psd() * other.omega_m;
        let rhs = 8.0 * CODATA.hbar * CODATA.k_b * other.temperature;
        assert!(rel(lhs, rhs) < 1e-12);
    }

    #[test]
    fn dilution_scaling_laws() {
        // With Q from dilution, the thermal torque PSD scales as h³·w and
        // inversely with Q0; the zero-point peak inversely so.
        let geom = device_geometry();
        let base = geom.derive_mode(295.0, None).unwrap();

        let mut thicker = geom;
        thicker.thickness *= 2.0;
        let t = thicker.derive_mode(295.0, None).unwrap();
        assert!(rel(t.thermal_torque_psd(), 8.0 * base.thermal_torque_psd()) < 1e-12);
        assert!(rel(t.zero_point_peak_psd(), base.zero_point_peak_psd() / 8.0) < 1e-12);

        let mut wider = geom;
        wider.width *= 3.0;
        let w = wider.derive_mode(295.0, None).unwrap();
        assert!(rel(w.thermal_torque_psd(), 3.0 * base.thermal_torque_psd()) < 1e-12);
        assert!(rel(w.zero_point_peak_psd(), base.zero_point_peak_psd() / 3.0) < 1e-12);

        let mut purer = geom;
        purer.q_intrinsic *= 5.0;
        let p = purer.derive_mode(295.0, None).unwrap();
        assert!(rel(p.thermal_torque_psd(), base.thermal_torque_psd() / 5.0) < 1e-12);
        assert!(rel(p.zero_point_peak_psd(), 5.0 * base.zero_point_peak_psd()) < 1e-12);
    }

    #[test]
    fn beam_derived_quantities() {
        let beam = ProbeBeam {
            wavelength: 850.0e-9,
            power: 1.0e-3,
            waist: 60.0e-6,
            focus_offset: 0.0,
            lever_arm: 0.5,
            lateral_offset: 0.0,
        };
        assert!(rel(beam.divergence_angle(), 4.50938e-3) < 1e-4);
        assert!(rel(beam.rayleigh_range(), 13.3057e-3) < 1e-4);
        assert!(beam.wavefront_radius(0.0).is_infinite());
        let zr = beam.rayleigh_range();
        assert!(rel(beam.spot_radius(zr), beam.waist * 2.0f64.sqrt()) < 1e-14);
        assert!(rel(beam.wavefront_radius(zr), 2.0 * zr) < 1e-14);
        assert!(beam.wavefront_radius(-zr) < 0.0);
    }

    #[test]
    fn detector_efficiencies() {
        let det = Detector {
            eta_d: 0.75,
            s_extra: 0.0,
        };
        det.validate().unwrap();
        assert!(rel(det.eta_total(), 0.75 * 2.0 / std::f64::consts::PI) < 1e-15);
        assert!(det.eta_total() <= 2.0 / std::f64::consts::PI);
        assert!(Detector { eta_d: 1.2, s_extra: 0.0 }.validate().is_err());
        assert!(Detector { eta_d: 0.5, s_extra: -1.0 }.validate().is_err());
    }

    #[test]
    fn low_q_flagged() {
        let mode = TorsionMode::new(1.0e5, 5.0, 1e-18, 295.0).unwrap();
        assert!(!mode.is_high_q());
    }
}
