//! End-to-end validation suite.
//!
//! Every check exercises a headline quantity of the model chain at a pinned
//! tolerance and reports one pass/fail line. The same suite backs the
//! `acceptance` integration test and the CLI `verify` command.

use serde::Serialize;

use crate::calib;
use crate::constants::CODATA;
use crate::diffraction::{
    critical_compensation_waist, spd_sensitivity, sweep_focus, sweep_waist, DiffractionScene,
    IntegrationGrid,
};
use crate::feedback::{self, FeedbackConfig};
use crate::mc_photon::{estimate_backaction_psd, PhotonStreamConfig};
use crate::params::{Detector, ProbeBeam, RibbonGeometry, TorsionMode};
use crate::psd::{coherence, estimate_psd_with_segment};
use crate::spectra::{self, susceptibility};
use crate::timesim::{
    cold_damp_run, integrate, ringdown_q, Drives, FeedbackDrive, ShotDrive, SimConfig,
};

/// Outcome of one suite check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub id: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(id: &'static str, passed: bool, detail: String) -> Self {
        Self { id, passed, detail }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Reproduction-device parameters used throughout the suite.
pub struct DeviceCase {
    pub geometry: RibbonGeometry,
    pub mode: TorsionMode,
    pub beam: ProbeBeam,
    pub detector: Detector,
}

impl Default for DeviceCase {
    fn default() -> Self {
        Self {
            geometry: RibbonGeometry {
                length: 7.0e-3,
                width: 400.0e-6,
                thickness: 75.0e-9,
                stress: 0.85e9,
                density: 2700.0,
                youngs_modulus: 250.0e9,
                q_intrinsic: 7000.0,
                surf_offset: 0.0,
                surf_tilt: 0.0,
                surf_curvature: 1.0 / 0.06, // 3 cm radius of curvature
            },
            // Measured-mode values: ringdown Q and simulated inertia.
            mode: TorsionMode::new(2.0 * std::f64::consts::PI * 52.5e3, 3.3e7, 3.8e-18, 295.0)
                .expect("device mode valid"),
            beam: ProbeBeam {
                wavelength: 850.0e-9,
                power: 10.0e-3,
                waist: 60.0e-6,
                focus_offset: 0.0,
                lever_arm: 0.5,
                lateral_offset: 0.0,
            },
            detector: Detector {
                eta_d: 1.0,
                s_extra: 0.0,
            },
        }
    }
}

/// Thermal torque amplitude of the device mode: 2.5e-20 N·m/√Hz within 5%.
pub fn check_thermal_torque() -> CheckResult {
    let mode = DeviceCase::default().mode;
    let amplitude = mode.thermal_torque_psd().sqrt();
    let err = rel(amplitude, 2.5e-20);
    CheckResult::new(
        "thermal_torque_amplitude",
        err < 0.05,
        format!("sqrt(S_tau_th) = {amplitude:.4e} N·m/√Hz vs 2.5e-20 (rel {err:.4})"),
    )
}

/// Zero-point peak 1.3e-10 rad/√Hz within 3% and bath occupation 1.2e8
/// within 5%.
pub fn check_zero_point_peak() -> CheckResult {
    let mode = DeviceCase::default().mode;
    let amplitude = mode.zero_point_peak_psd().sqrt();
    let n_th = mode.thermal_occupation();
    let err_a = rel(amplitude, 1.3e-10);
    let err_n = rel(n_th, 1.2e8);
    CheckResult::new(
        "zero_point_peak_and_occupation",
        err_a < 0.03 && err_n < 0.05,
        format!(
            "sqrt(S_zp) = {amplitude:.4e} rad/√Hz (rel {err_a:.4}); n_th = {n_th:.4e} (rel {err_n:.4})"
        ),
    )
}

/// Imprecision-backaction product equals (π/2)ħ² within 1e-3 relative,
/// independent of power over six decades, for a focused beam and ideal
/// detector.
pub fn check_product_identity() -> CheckResult {
    let case = DeviceCase::default();
    let expected = std::f64::consts::FRAC_PI_2 * CODATA.hbar * CODATA.hbar;
    let mut worst = 0.0f64;
    for i in 0..=24 {
        let power = 10f64.powf(-5.0 + 6.0 * i as f64 / 24.0);
        let mut beam = case.beam;
        beam.power = power;
        let nb = spectra::budget(&beam, &case.detector, &case.mode);
        worst = worst.max(rel(nb.product, expected));
    }
    CheckResult::new(
        "imprecision_backaction_product",
        worst < 1e-3,
        format!("worst relative deviation from (π/2)ħ² over 6 power decades: {worst:.2e}"),
    )
}

/// Dense power scan of the on-resonance added noise agrees with the
/// analytic optimum S_zp(ω_m)/√η within 1%.
pub fn check_sql_optimum() -> CheckResult {
    let case = DeviceCase::default();
    let opt = spectra::sql_optimal_power(&case.beam, &case.detector, &case.mode)
        .expect("no extraneous noise configured");
    let expected = case.mode.zero_point_peak_psd() / case.detector.eta_total().sqrt();
    let mut scan_min = f64::INFINITY;
    let n = 1200;
    for i in 0..=n {
        let p = 10f64.powf(-6.0 + 6.0 * i as f64 / n as f64);
        scan_min = scan_min
            .min(spectra::added_noise_on_resonance(&case.beam, &case.detector, &case.mode, p));
    }
    let err_formula = rel(opt.added_min, expected);
    let err_scan = rel(scan_min, opt.added_min);
    CheckResult::new(
        "sql_power_optimum",
        err_formula < 1e-9 && err_scan < 0.01,
        format!(
            "added_min = {:.4e} rad²/Hz (formula rel {err_formula:.2e}, scan rel {err_scan:.2e}), P_opt = {:.3e} W",
            opt.added_min, opt.p_opt
        ),
    )
}

fn diffraction_case(waist: f64, curvature: f64, focus_offset: f64) -> DiffractionScene {
    let case = DeviceCase::default();
    let mut geom = case.geometry;
    geom.surf_curvature = curvature;
    let mut beam = case.beam;
    beam.power = 100.0e-6;
    beam.waist = waist;
    beam.focus_offset = focus_offset;
    DiffractionScene {
        geom,
        beam,
        grid: IntegrationGrid::default(),
    }
}

fn closed_form_imprecision(beam: &ProbeBeam, waist: f64) -> f64 {
    CODATA.hbar * CODATA.c * beam.wavelength / (8.0 * waist * waist * beam.power)
}

/// Flat-ribbon numerical imprecision matches the closed form within 1% for
/// 10, 20, and 50 µm waists.
pub fn check_diffraction_oracle() -> CheckResult {
    let mut detail = String::new();
    let mut passed = true;
    for &w0 in &[10.0e-6, 20.0e-6, 50.0e-6] {
        let scene = diffraction_case(w0, 0.0, 0.0);
        match spd_sensitivity(&scene) {
            Ok(result) => {
                let expected = closed_form_imprecision(&scene.beam, w0);
                let err = rel(result.s_imp, expected);
                passed &= err < 0.01;
                detail.push_str(&format!("w0 {:.0} µm rel {:.2e}; ", w0 * 1e6, err));
            }
            Err(e) => {
                passed = false;
                detail.push_str(&format!("w0 {:.0} µm failed: {e}; ", w0 * 1e6));
            }
        }
    }
    CheckResult::new("diffraction_matches_closed_form", passed, detail)
}

/// Curved-ribbon waist sweep bottoms out at 60 ± 10 µm and the critical
/// compensation waist is 63.7 ± 2 µm.
pub fn check_curved_waist_optimum() -> CheckResult {
    let template = diffraction_case(60.0e-6, 1.0 / 0.06, 0.0);
    let waists: Vec<f64> = (6..=20).map(|i| i as f64 * 5.0e-6).collect();
    let points = sweep_waist(&template, &waists);
    let best = points
        .iter()
        .filter_map(|p| p.result.as_ref().ok().map(|r| (p.param, r.s_imp)))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    let (w_min, _) = match best {
        Some(b) => b,
        None => {
            return CheckResult::new(
                "curved_ribbon_waist_optimum",
                false,
                "sweep produced no valid points".into(),
            )
        }
    };
    let w_crit = critical_compensation_waist(&template.geom, template.beam.wavelength)
        .expect("curved ribbon");
    let sweep_ok = (50.0e-6..=70.0e-6).contains(&w_min);
    let crit_ok = (w_crit - 63.7e-6).abs() < 2.0e-6;
    CheckResult::new(
        "curved_ribbon_waist_optimum",
        sweep_ok && crit_ok,
        format!(
            "sweep minimum at {:.1} µm (target 60±10); critical waist {:.1} µm (target 63.7±2)",
            w_min * 1e6,
            w_crit * 1e6
        ),
    )
}

/// Focus-offset compensation: the 60 µm sweep optimum sits at |z| in
/// [13, 15] mm; at a waist where the wavefront cancels the ribbon curvature
/// the imprecision returns to the flat-ribbon value at the enlarged spot
/// within 5%; the backaction penalty at the Rayleigh offset is 2 ± 5%.
pub fn check_focus_compensation() -> CheckResult {
    let template = diffraction_case(60.0e-6, 1.0 / 0.06, 0.0);
    let offsets: Vec<f64> = (10..=50).map(|i| -(i as f64) * 0.5e-3).collect();
    let sweep = match sweep_focus(&template, &offsets) {
        Ok(s) => s,
        Err(e) => {
            return CheckResult::new("focus_compensation", false, format!("sweep failed: {e}"))
        }
    };
    let z_abs = sweep.optimal_z.abs();
    let window_ok = (13.0e-3..=15.0e-3).contains(&z_abs);

    // Full cancellation is only reachable below the critical waist for the
    // net aperture phase; verify restoration there (30 µm, inner root).
    let comp_template = diffraction_case(30.0e-6, 1.0 / 0.06, 0.0);
    let zr = comp_template.beam.rayleigh_range();
    let r_target = 1.0 / (4.0 * comp_template.geom.surf_curvature);
    let disc = (r_target * r_target - 4.0 * zr * zr).sqrt();
    let zeta = 0.5 * (r_target - disc);
    let mut comp = comp_template;
    comp.beam.focus_offset = -zeta;
    let (comp_ok, comp_detail) = match spd_sensitivity(&comp) {
        Ok(r) => {
            let flat_at_spot = closed_form_imprecision(&comp.beam, comp.beam.spot_on_target());
            let err = rel(r.s_imp, flat_at_spot);
            (err < 0.05, format!("compensated rel {err:.2e}"))
        }
        Err(e) => (false, format!("compensated scene failed: {e}")),
    };

    let penalty = (template.beam.spot_radius(template.beam.rayleigh_range())
        / template.beam.waist)
        .powi(2);
    let penalty_ok = rel(penalty, 2.0) < 0.05;
    CheckResult::new(
        "focus_compensation",
        window_ok && comp_ok && penalty_ok,
        format!(
            "sweep optimum |z| = {:.2} mm (target 13–15); {comp_detail}; Rayleigh-offset backaction penalty {penalty:.3}",
            z_abs * 1e3
        ),
    )
}

/// Monte-Carlo torque PSD within 5% of the closed form with over a million
/// photons, and a centered beam consistent with zero mean torque at 3σ.
pub fn check_monte_carlo_backaction() -> CheckResult {
    let case = DeviceCase::default();
    let mut beam = case.beam;
    beam.power = 1.0e-3;
    let cfg = PhotonStreamConfig {
        beam,
        dt: 4.0e-13,
        duration: 4.0e-13 * 65536.0,
        seed: 20240,
        x_off: 0.0,
    };
    let est = match estimate_backaction_psd(&cfg) {
        Ok(e) => e,
        Err(e) => return CheckResult::new("monte_carlo_backaction", false, format!("{e}")),
    };
    let expected = spectra::backaction_torque_psd(&beam);
    let err = rel(est.s_tau, expected);
    let photons_ok = est.n_photons >= 1_000_000;
    let mean_ok = est.mean_torque.abs() <= 3.0 * est.mean_stderr;
    CheckResult::new(
        "monte_carlo_backaction",
        err < 0.05 && photons_ok && mean_ok,
        format!(
            "S_tau = {:.4e} vs {:.4e} (rel {err:.2e}); {} photons; |mean|/σ = {:.2}",
            est.s_tau,
            expected,
            est.n_photons,
            est.mean_torque.abs() / est.mean_stderr
        ),
    )
}

/// Cooling floors 2√(n_th·n_imp) land on 1.4e3 (n_imp = 0.004) and within
/// [5.2e3, 5.4e3] (n_imp = 0.06); an n_imp of 0.004 sits 18.0 ± 0.2 dB below
/// the standard quantum limit.
pub fn check_cooling_floors() -> CheckResult {
    let mode = DeviceCase::default().mode;
    let quiet = FeedbackConfig {
        gamma_fb: 0.0,
        n_imp: 0.004,
        mode,
    };
    let relaxed = FeedbackConfig {
        gamma_fb: 0.0,
        n_imp: 0.06,
        mode,
    };
    let n_quiet = feedback::optimal_gain(&quiet).expect("n_imp > 0").n_min;
    let n_relaxed = feedback::optimal_gain(&relaxed).expect("n_imp > 0").n_min;
    let db = 10.0 * (0.25f64 / 0.004).log10();
    // The quoted floor carries two significant figures; accept half a step
    // of the last digit.
    let quiet_ok = (n_quiet - 1.4e3).abs() < 50.0;
    let relaxed_ok = (5.2e3..=5.4e3).contains(&n_relaxed);
    let db_ok = (db - 18.0).abs() < 0.2;
    CheckResult::new(
        "cooling_floors",
        quiet_ok && relaxed_ok && db_ok,
        format!(
            "n_min(0.004) = {n_quiet:.1} (target 1.4e3); n_min(0.06) = {n_relaxed:.1} (target 5.2e3–5.4e3); {db:.2} dB below SQL"
        ),
    )
}

/// Time-domain twin at reduced Q = 1e3: equipartition within 10%, resonance
/// PSD within 10% of the susceptibility model, ringdown Q within 5%,
/// cold-damped occupancy within 15% of the closed-loop formula across a
/// decade of gains, and drive coherence above 0.9 with a π phase flip.
pub fn check_time_domain_twin() -> CheckResult {
    let device = DeviceCase::default();
    let mode = device.mode.with_q(1.0e3).expect("reduced-Q mode");
    let dt = 2.0 * std::f64::consts::PI / (20.0 * mode.omega_m);
    let mut detail = String::new();
    let mut passed = true;

    // Equipartition and resonance PSD from one long thermal run.
    let cfg = SimConfig {
        mode,
        dt,
        duration: 6.0,
        seed: 401,
        drives: Drives {
            thermal: true,
            ..Drives::default()
        },
        initial_angle: 0.0,
        initial_velocity: 0.0,
    };
    match integrate(&cfg) {
        Ok(series) => {
            let skip = series.theta.len() / 20;
            let tail = &series.theta[skip..];
            let theta_sq = tail.iter().map(|t| t * t).sum::<f64>() / tail.len() as f64;
            let expected = CODATA.k_b * mode.temperature
                / (mode.moment_of_inertia * mode.omega_m * mode.omega_m);
            let err = rel(theta_sq, expected);
            passed &= err < 0.10;
            detail.push_str(&format!("equipartition rel {err:.3}; "));

            let est = estimate_psd_with_segment(&series.theta, dt, 1 << 17)
                .expect("long thermal record");
            let f_m = mode.omega_m / (2.0 * std::f64::consts::PI);
            let half_band = 2.0 * mode.gamma_m / (2.0 * std::f64::consts::PI);
            let s_th = mode.thermal_torque_psd();
            let mut measured = 0.0;
            let mut model = 0.0;
            for (i, &f) in est.freqs_hz.iter().enumerate() {
                if (f - f_m).abs() <= half_band {
                    measured += est.psd[i];
                    model +=
                        susceptibility(&mode, 2.0 * std::f64::consts::PI * f).norm_sqr() * s_th;
                }
            }
            let err = rel(measured, model);
            passed &= err < 0.10;
            detail.push_str(&format!("resonant PSD rel {err:.3}; "));
        }
        Err(e) => {
            passed = false;
            detail.push_str(&format!("thermal run failed: {e}; "));
        }
    }

    // Ringdown.
    let ring_cfg = SimConfig {
        mode,
        dt,
        duration: 0.06,
        seed: 402,
        drives: Drives::default(),
        initial_angle: 1.0e-7,
        initial_velocity: 0.0,
    };
    match integrate(&ring_cfg).and_then(|s| ringdown_q(&s.theta, dt, &mode)) {
        Ok(q_fit) => {
            let err = rel(q_fit, 1.0e3);
            passed &= err < 0.05;
            detail.push_str(&format!("ringdown Q rel {err:.3}; "));
        }
        Err(e) => {
            passed = false;
            detail.push_str(&format!("ringdown failed: {e}; "));
        }
    }

    // Cold damping across a decade of effective gains.
    let s_imp = 1.0e-21;
    let n_imp = s_imp / (2.0 * mode.zero_point_peak_psd());
    let mut worst = 0.0f64;
    for (i, factor) in [10.0, 18.0, 32.0, 56.0, 100.0].iter().enumerate() {
        let gamma_fb = (factor - 1.0) * mode.gamma_m;
        let gamma_eff = mode.gamma_m * factor;
        let cfg = SimConfig {
            mode,
            dt: 2.0 * std::f64::consts::PI / (80.0 * mode.omega_m),
            duration: (1600.0 / gamma_eff).min(0.6),
            seed: 410 + i as u64,
            drives: Drives {
                thermal: true,
                feedback: Some(FeedbackDrive { gamma_fb, s_imp }),
                ..Drives::default()
            },
            initial_angle: 0.0,
            initial_velocity: 0.0,
        };
        match cold_damp_run(&cfg) {
            Ok(run) => {
                let fb = FeedbackConfig {
                    gamma_fb,
                    n_imp,
                    mode,
                };
                worst = worst.max(rel(run.n_m_estimate, feedback::phonon_number(&fb)));
            }
            Err(e) => {
                passed = false;
                detail.push_str(&format!("cold damp x{factor} failed: {e}; "));
            }
        }
    }
    passed &= worst < 0.15;
    detail.push_str(&format!("cold damping worst rel {worst:.3}; "));

    // Coherence of a dominant position-modulated drive.
    let coh_cfg = SimConfig {
        mode,
        dt,
        duration: 1.0,
        seed: 420,
        drives: Drives {
            thermal: true,
            shot: Some(ShotDrive {
                power: 0.5e-3,
                wavelength: 633.0e-9,
                spot: 50.0e-6,
                x_off: 0.0,
                extra_position_psd: 1.0e-10,
            }),
            ..Drives::default()
        },
        initial_angle: 0.0,
        initial_velocity: 0.0,
    };
    match integrate(&coh_cfg) {
        Ok(series) => {
            let drive = series.drive_x.as_ref().expect("shot drive records x");
            let coh = coherence(&series.theta, drive, dt).expect("long record");
            let f_m = mode.omega_m / (2.0 * std::f64::consts::PI);
            let nearest = |f: f64| -> usize {
                coh.freqs_hz
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (a.1 - f).abs().total_cmp(&(b.1 - f).abs()))
                    .unwrap()
                    .0
            };
            let mag = coh.magnitude[nearest(f_m)];
            let df = 20.0 * mode.gamma_m / (2.0 * std::f64::consts::PI);
            let mut flip = (coh.phase[nearest(f_m - df)] - coh.phase[nearest(f_m + df)]).abs();
            if flip > std::f64::consts::PI {
                flip = 2.0 * std::f64::consts::PI - flip;
            }
            passed &= mag > 0.9 && (flip - std::f64::consts::PI).abs() < 0.5;
            detail.push_str(&format!("|C| = {mag:.3}, phase flip {flip:.2} rad"));
        }
        Err(e) => {
            passed = false;
            detail.push_str(&format!("coherence run failed: {e}"));
        }
    }

    CheckResult::new("time_domain_twin", passed, detail)
}

/// Calibration round trips: bootstrap gain within 1%, lateral agreement
/// within mutual uncertainty, correlated-backaction ratio within 10% with
/// the correlation sign recovered.
pub fn check_calibration_round_trip() -> CheckResult {
    let mode = DeviceCase::default()
        .mode
        .with_q(1.0e4)
        .expect("reduced-Q mode");
    let f_m = mode.omega_m / (2.0 * std::f64::consts::PI);
    let half = 25.0 * mode.gamma_m / (2.0 * std::f64::consts::PI);
    let freqs: Vec<f64> = (0..1201)
        .map(|i| f_m - half + 2.0 * half * i as f64 / 1200.0)
        .collect();
    let mut detail = String::new();
    let mut passed = true;

    let lever_arm = 0.5;
    let dv_dx = 2.2e6;
    let gain_true = calib::lateral_calibration(dv_dx, lever_arm);
    let raw = calib::synthesize_raw_spectrum(&mode, gain_true, 1.0e-12, &freqs, 400, 73);
    match calib::bootstrap_calibration(&raw, &mode) {
        Ok(fit) => {
            let err = rel(fit.gain, gain_true);
            passed &= err < 0.01;
            let mutual = (fit.gain_sigma.powi(2) + (0.005 * gain_true).powi(2)).sqrt();
            let agree = (fit.gain - gain_true).abs() < 3.0 * mutual;
            passed &= agree;
            detail.push_str(&format!(
                "bootstrap gain rel {err:.2e}, lateral agreement {:.2}σ; ",
                (fit.gain - gain_true).abs() / mutual
            ));
        }
        Err(e) => {
            passed = false;
            detail.push_str(&format!("bootstrap failed: {e}; "));
        }
    }

    let s_tau_th = mode.thermal_torque_psd();
    let s_tau_im = 2.5 * s_tau_th;
    let c = 0.8 * s_tau_th * susceptibility(&mode, mode.omega_m).norm();
    let psd =
        calib::synthesize_correlated_spectrum(&mode, 1.0e-22, s_tau_im, c, s_tau_th, &freqs, 400, 37);
    match calib::fit_correlations(&freqs, &psd, &mode, s_tau_th) {
        Ok(fit) => {
            let err = rel(fit.s_tau_im / s_tau_th, 2.5);
            passed &= err < 0.10 && fit.c > 0.0;
            detail.push_str(&format!("backaction ratio rel {err:.2e}; "));
            let flipped = calib::synthesize_correlated_spectrum(
                &mode, 1.0e-22, s_tau_im, -c, s_tau_th, &freqs, 400, 37,
            );
            match calib::fit_correlations(&freqs, &flipped, &mode, s_tau_th) {
                Ok(fit2) => {
                    passed &= fit2.c < 0.0;
                    detail.push_str("correlation sign tracked");
                }
                Err(e) => {
                    passed = false;
                    detail.push_str(&format!("flipped fit failed: {e}"));
                }
            }
        }
        Err(e) => {
            passed = false;
            detail.push_str(&format!("correlation fit failed: {e}"));
        }
    }
    CheckResult::new("calibration_round_trip", passed, detail)
}

/// The ideal shot-noise floor at the 10 mW settings lower-bounds the
/// measured floor it models.
pub fn check_ideal_floor_bound() -> CheckResult {
    let case = DeviceCase::default();
    let ideal = spectra::imprecision_psd(&case.beam, &case.detector);
    let measured_floor = 1.4e-22;
    CheckResult::new(
        "ideal_floor_bounds_measured",
        ideal <= measured_floor,
        format!("ideal {ideal:.3e} rad²/Hz ≤ measured {measured_floor:.3e}"),
    )
}

/// Run the full suite in order.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        check_thermal_torque(),
        check_zero_point_peak(),
        check_product_identity(),
        check_sql_optimum(),
        check_diffraction_oracle(),
        check_curved_waist_optimum(),
        check_focus_compensation(),
        check_monte_carlo_backaction(),
        check_cooling_floors(),
        check_time_domain_twin(),
        check_calibration_round_trip(),
        check_ideal_floor_bound(),
    ]
}
