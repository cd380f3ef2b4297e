//! Run configuration: a sectioned TOML file with SI-unit keys. Unknown keys
//! are rejected; command-line `--set section.key=value` overrides apply
//! before validation; every run echoes the resolved config with its hash.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use olev_core::diffraction::IntegrationGrid;
use olev_core::{Detector, ProbeBeam, RibbonGeometry, TorsionMode};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RibbonSection {
    pub length_m: f64,
    pub width_m: f64,
    pub thickness_m: f64,
    pub stress_pa: f64,
    pub density_kg_m3: f64,
    pub youngs_modulus_pa: f64,
    pub q_intrinsic: f64,
    #[serde(default)]
    pub surf_offset_m: f64,
    #[serde(default)]
    pub surf_tilt: f64,
    #[serde(default)]
    pub surf_curvature_per_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSection {
    pub temperature_k: f64,
    #[serde(default)]
    pub q_override: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSection {
    pub wavelength_m: f64,
    pub power_w: f64,
    pub waist_m: f64,
    #[serde(default)]
    pub focus_offset_m: f64,
    pub lever_arm_m: f64,
    #[serde(default)]
    pub lateral_offset_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub eta_d: f64,
    #[serde(default)]
    pub s_extra_rad2_hz: f64,
}

fn default_grid_points() -> usize {
    2001
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub freq_min_hz: f64,
    pub freq_max_hz: f64,
    #[serde(default = "default_grid_points")]
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// One of "waist", "focus", "power".
    pub parameter: String,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    /// "linear" (default) or "log".
    #[serde(default)]
    pub scale: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DiffractionSection {
    #[serde(default)]
    pub quad_points: Option<usize>,
    #[serde(default)]
    pub domain_halfwidth: Option<f64>,
    #[serde(default)]
    pub farfield_points: Option<usize>,
    #[serde(default)]
    pub farfield_halfwidth: Option<f64>,
    /// Emit the detector-plane intensity profile alongside the sensitivity.
    #[serde(default)]
    pub emit_profile: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub dt_s: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub x_off_m: f64,
    #[serde(default)]
    pub emit_series: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    /// Reduced quality factor for desk-scale runs (0 keeps the mode's Q).
    #[serde(default)]
    pub q_reduced: f64,
    /// Integrator steps per oscillation period (>= 20).
    #[serde(default = "default_steps_per_period")]
    pub steps_per_period: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub thermal: bool,
    #[serde(default)]
    pub initial_angle_rad: f64,
    #[serde(default)]
    pub feedback_gamma_fb: f64,
    #[serde(default)]
    pub feedback_s_imp_rad2_hz: f64,
    #[serde(default)]
    pub tone_amplitude_nm: f64,
    #[serde(default)]
    pub tone_freq_hz: f64,
    #[serde(default)]
    pub shot_power_w: f64,
    #[serde(default)]
    pub shot_wavelength_m: f64,
    #[serde(default)]
    pub shot_spot_m: f64,
    #[serde(default)]
    pub shot_x_off_m: f64,
    #[serde(default)]
    pub shot_extra_position_psd: f64,
    #[serde(default)]
    pub intensity_s_tau_im: f64,
    #[serde(default)]
    pub intensity_x_off_m: f64,
}

fn default_steps_per_period() -> f64 {
    20.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoolSection {
    pub n_imp: f64,
    pub gamma_eff_min: f64,
    pub gamma_eff_max: f64,
    #[serde(default = "default_cool_points")]
    pub points: usize,
    /// Number of time-domain verification points along the curve (0 = none).
    #[serde(default)]
    pub sim_points: usize,
}

fn default_cool_points() -> usize {
    60
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibSection {
    /// Input raw spectrum CSV (freq_hz, psd_v2_hz); synthesized when absent.
    #[serde(default)]
    pub input_csv: Option<String>,
    #[serde(default = "default_n_avg")]
    pub n_avg: usize,
    #[serde(default)]
    pub seed: u64,
    /// Synthetic generation parameters.
    #[serde(default = "default_gain")]
    pub gain_v_per_rad: f64,
    #[serde(default)]
    pub floor_v2_hz: f64,
    /// Measured lateral response for the cross-check, V/m (0 = skip).
    #[serde(default)]
    pub dv_dx_v_per_m: f64,
    #[serde(default = "default_span")]
    pub span_linewidths: f64,
    #[serde(default = "default_calib_points")]
    pub points: usize,
}

fn default_n_avg() -> usize {
    400
}

fn default_gain() -> f64 {
    1.0e6
}

fn default_span() -> f64 {
    25.0
}

fn default_calib_points() -> usize {
    1201
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationSection {
    /// Input calibrated spectrum CSV (freq_hz, psd_rad2_hz); synthesized
    /// when absent.
    #[serde(default)]
    pub input_csv: Option<String>,
    #[serde(default = "default_n_avg")]
    pub n_avg: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_s_imp")]
    pub s_imp_rad2_hz: f64,
    /// Intensity backaction as a multiple of the thermal torque PSD.
    #[serde(default = "default_im_ratio")]
    pub s_tau_im_ratio: f64,
    /// Correlation amplitude as a multiple of S_th·|χ(ω_m)|.
    #[serde(default = "default_c_scale")]
    pub c_scale: f64,
    #[serde(default = "default_span")]
    pub span_linewidths: f64,
    #[serde(default = "default_calib_points")]
    pub points: usize,
}

fn default_s_imp() -> f64 {
    1.0e-22
}

fn default_im_ratio() -> f64 {
    2.5
}

fn default_c_scale() -> f64 {
    0.8
}

/// Whole-run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub ribbon: RibbonSection,
    pub mode: ModeSection,
    pub beam: BeamSection,
    pub detector: DetectorSection,
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub diffraction: Option<DiffractionSection>,
    #[serde(default)]
    pub mc: Option<McSection>,
    #[serde(default)]
    pub sim: Option<SimSection>,
    #[serde(default)]
    pub cool: Option<CoolSection>,
    #[serde(default)]
    pub calib: Option<CalibSection>,
    #[serde(default)]
    pub correlations: Option<CorrelationSection>,
}

impl RunConfig {
    /// Parse a config file, apply `section.key=value` overrides, and verify
    /// there are no unknown keys.
    pub fn load(path: &Path, overrides: &[String]) -> Result<(Self, String, String)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut value: toml::Value = text.parse().context("config is not valid TOML")?;
        for entry in overrides {
            apply_override(&mut value, entry)?;
        }
        let resolved = toml::to_string_pretty(&value).context("cannot re-serialize config")?;
        let config: RunConfig = value.try_into().context("invalid config")?;
        let hash = hex_digest(&resolved);
        Ok((config, resolved, hash))
    }

    pub fn geometry(&self) -> RibbonGeometry {
        RibbonGeometry {
            length: self.ribbon.length_m,
            width: self.ribbon.width_m,
            thickness: self.ribbon.thickness_m,
            stress: self.ribbon.stress_pa,
            density: self.ribbon.density_kg_m3,
            youngs_modulus: self.ribbon.youngs_modulus_pa,
            q_intrinsic: self.ribbon.q_intrinsic,
            surf_offset: self.ribbon.surf_offset_m,
            surf_tilt: self.ribbon.surf_tilt,
            surf_curvature: self.ribbon.surf_curvature_per_m,
        }
    }

    pub fn torsion_mode(&self) -> Result<TorsionMode> {
        self.geometry()
            .derive_mode(self.mode.temperature_k, self.mode.q_override)
            .context("invalid ribbon/mode parameters")
    }

    pub fn probe_beam(&self) -> Result<ProbeBeam> {
        let beam = ProbeBeam {
            wavelength: self.beam.wavelength_m,
            power: self.beam.power_w,
            waist: self.beam.waist_m,
            focus_offset: self.beam.focus_offset_m,
            lever_arm: self.beam.lever_arm_m,
            lateral_offset: self.beam.lateral_offset_m,
        };
        beam.validate().context("invalid beam parameters")?;
        Ok(beam)
    }

    pub fn detector(&self) -> Result<Detector> {
        let det = Detector {
            eta_d: self.detector.eta_d,
            s_extra: self.detector.s_extra_rad2_hz,
        };
        det.validate().context("invalid detector parameters")?;
        Ok(det)
    }

    pub fn integration_grid(&self) -> IntegrationGrid {
        let defaults = IntegrationGrid::default();
        match &self.diffraction {
            Some(d) => IntegrationGrid {
                quad_points: d.quad_points.unwrap_or(defaults.quad_points),
                domain_halfwidth: d.domain_halfwidth.unwrap_or(defaults.domain_halfwidth),
                farfield_points: d.farfield_points.unwrap_or(defaults.farfield_points),
                farfield_halfwidth: d
                    .farfield_halfwidth
                    .unwrap_or(defaults.farfield_halfwidth),
            },
            None => defaults,
        }
    }
}

fn apply_override(value: &mut toml::Value, entry: &str) -> Result<()> {
    let (key, raw) = entry
        .split_once('=')
        .with_context(|| format!("override '{entry}' is not key=value"))?;
    let parsed: toml::Value = match raw.parse::<toml::Value>() {
        Ok(v) => v,
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut node = value;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.len() < 2 {
        bail!("override key '{key}' must be section.key");
    }
    for part in &parts[..parts.len() - 1] {
        node = node
            .as_table_mut()
            .with_context(|| format!("'{key}' does not address a table"))?
            .entry(part.to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    node.as_table_mut()
        .with_context(|| format!("'{key}' does not address a table"))?
        .insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

pub fn hex_digest(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[ribbon]
length_m = 7.0e-3
width_m = 400.0e-6
thickness_m = 75.0e-9
stress_pa = 0.85e9
density_kg_m3 = 2700.0
youngs_modulus_pa = 250.0e9
q_intrinsic = 7000.0

[mode]
temperature_k = 295.0

[beam]
wavelength_m = 850.0e-9
power_w = 1.0e-3
waist_m = 60.0e-6
lever_arm_m = 0.5

[detector]
eta_d = 1.0
"#;

    #[test]
    fn parses_minimal_config() {
        let dir = std::env::temp_dir().join("olev-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("minimal.toml");
        std::fs::write(&path, MINIMAL).unwrap();
        let (config, _, hash) = RunConfig::load(&path, &[]).unwrap();
        assert_eq!(hash.len(), 64);
        assert!(config.torsion_mode().is_ok());
        assert!(config.probe_beam().is_ok());

        // Overrides change the resolved hash deterministically.
        let (with_override, _, hash2) =
            RunConfig::load(&path, &["beam.power_w=2.0e-3".to_string()]).unwrap();
        assert_eq!(with_override.beam.power_w, 2.0e-3);
        assert_ne!(hash, hash2);
    }

    #[test]
    fn rejects_unknown_keys() {
        let dir = std::env::temp_dir().join("olev-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("unknown.toml");
        std::fs::write(&path, format!("{MINIMAL}\n[beam2]\nx = 1\n")).unwrap();
        assert!(RunConfig::load(&path, &[]).is_err());
        let path2 = dir.join("unknown2.toml");
        std::fs::write(&path2, MINIMAL.replace("eta_d = 1.0", "eta_d = 1.0\nbogus = 2")).unwrap();
        assert!(RunConfig::load(&path2, &[]).is_err());
    }
}
