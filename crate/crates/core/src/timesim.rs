//! Stochastic time-domain twin of the torsion oscillator.
//!
//! The damped oscillator driven by white thermal torque is advanced with the
//! exact discretization of the linear system (matrix exponential plus the
//! exact process-noise covariance), so the sampled statistics carry no
//! step-size bias. Deterministic and per-bin stochastic drive torques enter
//! as zero-order-hold inputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::CODATA;
use crate::fitting::{levenberg_marquardt, solve_linear};
use crate::params::{ParamError, TorsionMode};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("dt = {dt:.3e} s too coarse; need <= {max:.3e} s to resolve the oscillation")]
    StepTooCoarse { dt: f64, max: f64 },
    #[error("mode is overdamped; the oscillatory propagator does not apply")]
    Overdamped,
    #[error("loop went unstable at step {step} (gamma_fb = {gamma_fb:.3e} rad/s, |theta| = {amplitude:.3e})")]
    Unstable {
        step: usize,
        gamma_fb: f64,
        amplitude: f64,
    },
    #[error("series does not decay; cannot fit a ringdown")]
    NoDecay,
    #[error("series too short: {0}")]
    TooShort(&'static str),
    #[error("cold damping requires a feedback drive")]
    NoFeedback,
}

/// Shot-noise torque drive sampled per bin from the photon stream, with an
/// optional extra white position modulation of the drive beam.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ShotDrive {
    pub power: f64,
    pub wavelength: f64,
    /// Spot radius on the ribbon, m.
    pub spot: f64,
    /// Beam center offset from the torsion axis, m.
    pub x_off: f64,
    /// White displacement PSD added to the beam position, m²/Hz.
    pub extra_position_psd: f64,
}

/// Classical intensity-noise torque: white at the given PSD, present when the
/// beam is displaced from the axis.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IntensityDrive {
    pub s_tau_im: f64,
    pub x_off: f64,
}

/// Derivative feedback acting on the measured (noisy) angle.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FeedbackDrive {
    pub gamma_fb: f64,
    /// Imprecision PSD of the measurement record, rad²/Hz.
    pub s_imp: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ToneDrive {
    /// Torque amplitude, N·m.
    pub amplitude: f64,
    /// Drive frequency, rad/s.
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Drives {
    pub thermal: bool,
    pub shot: Option<ShotDrive>,
    pub intensity: Option<IntensityDrive>,
    pub feedback: Option<FeedbackDrive>,
    pub tone: Option<ToneDrive>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimConfig {
    pub mode: TorsionMode,
    /// Step, s; must resolve the oscillation (≤ T_m/20).
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    pub drives: Drives,
    /// Initial angle, rad (ringdowns start from here).
    pub initial_angle: f64,
    /// Initial angular velocity, rad/s.
    pub initial_velocity: f64,
}

impl SimConfig {
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let max_dt = 2.0 * std::f64::consts::PI / (20.0 * self.mode.omega_m);
        if self.dt > max_dt {
            return Err(SimError::StepTooCoarse {
                dt: self.dt,
                max: max_dt,
            });
        }
        if self.mode.gamma_m * 0.5 >= self.mode.omega_m {
            return Err(SimError::Overdamped);
        }
        let gamma_eff = self.mode.gamma_m
            + self.drives.feedback.map_or(0.0, |f| f.gamma_fb);
        if self.drives.thermal && self.duration * gamma_eff < 50.0 {
            log::warn!(
                "duration {:.3e} s is below 50/gamma_eff; spectral estimates will not converge",
                self.duration
            );
        }
        Ok(())
    }
}

/// Recorded state and drive series of one run.
#[derive(Debug, Clone)]
pub struct RecordedSeries {
    pub dt: f64,
    pub seed: u64,
    /// Physical angle per step, rad.
    pub theta: Vec<f64>,
    /// Measured angle (with imprecision noise) when a feedback drive ran.
    pub theta_measured: Option<Vec<f64>>,
    /// Total applied drive torque per step (thermal bath excluded), N·m.
    pub tau_drive: Vec<f64>,
    /// Drive-beam displacement equivalent of the shot drive, m.
    pub drive_x: Option<Vec<f64>>,
}

/// Exact one-step propagator of the damped oscillator with white thermal
/// torque: state transition, zero-order-hold input gain, and process-noise
/// Cholesky factor.
struct Propagator {
    phi: [[f64; 2]; 2],
    gain: [f64; 2],
    chol: [[f64; 2]; 2],
}

impl Propagator {
    fn new(mode: &TorsionMode, dt: f64, thermal: bool) -> Self {
        let alpha = 0.5 * mode.gamma_m;
        let omega0 = mode.omega_m;
        let omega_d = (omega0 * omega0 - alpha * alpha).sqrt();
        let h = |s: f64| (-alpha * s).exp() * (omega_d * s).sin() / omega_d;
        let g = |s: f64| {
            (-alpha * s).exp() * ((omega_d * s).cos() - (alpha / omega_d) * (omega_d * s).sin())
        };
        let e = (-alpha * dt).exp();
        let (sin, cos) = (omega_d * dt).sin_cos();
        let phi = [
            [e * (cos + alpha / omega_d * sin), h(dt)],
            [-omega0 * omega0 * h(dt), g(dt)],
        ];

        // 64-node Gauss-Legendre over one step; the integrands carry at most
        // a twentieth of an oscillation period, so this is exact to rounding.
        let nodes = 64;
        let (gl_x, gl_w) = crate::diffraction::gauss_legendre(nodes);
        let mut gain = [0.0, 0.0];
        let mut q = [0.0, 0.0, 0.0]; // [hh, hg, gg]
        for i in 0..nodes {
            let s = 0.5 * dt * (gl_x[i] + 1.0);
            let wgt = 0.5 * dt * gl_w[i];
            let hs = h(s);
            let gs = g(s);
            gain[0] += wgt * hs;
            gain[1] += wgt * gs;
            q[0] += wgt * hs * hs;
            q[1] += wgt * hs * gs;
            q[2] += wgt * gs * gs;
        }
        let mut chol = [[0.0; 2]; 2];
        if thermal {
            // Two-sided acceleration noise intensity S_tau/(2 I²).
            let d = mode.thermal_torque_psd() / (2.0 * mode.moment_of_inertia.powi(2));
            let q11 = d * q[0];
            let q12 = d * q[1];
            let q22 = d * q[2];
            let l11 = q11.sqrt();
            let l21 = if l11 > 0.0 { q12 / l11 } else { 0.0 };
            let l22 = (q22 - l21 * l21).max(0.0).sqrt();
            chol = [[l11, 0.0], [l21, l22]];
        }
        Self { phi, gain, chol }
    }

    /// Stationary covariance of the sampled chain, solving
    /// Σ = Φ·Σ·Φᵀ + Q directly.
    fn stationary_variance(&self, mode: &TorsionMode) -> f64 {
        let p = &self.phi;
        let l = &self.chol;
        let q11 = l[0][0] * l[0][0];
        let q12 = l[1][0] * l[0][0];
        let q22 = l[1][0] * l[1][0] + l[1][1] * l[1][1];
        let _ = mode;
        let a = [
            [
                1.0 - p[0][0] * p[0][0],
                -2.0 * p[0][0] * p[0][1],
                -p[0][1] * p[0][1],
            ],
            [
                -p[0][0] * p[1][0],
                1.0 - (p[0][0] * p[1][1] + p[0][1] * p[1][0]),
                -p[0][1] * p[1][1],
            ],
            [
                -p[1][0] * p[1][0],
                -2.0 * p[1][0] * p[1][1],
                1.0 - p[1][1] * p[1][1],
            ],
        ];
        let sol = solve_linear(
            &[a[0].to_vec(), a[1].to_vec(), a[2].to_vec()],
            &[q11, q12, q22],
        )
        .expect("stationary covariance system is well conditioned");
        sol[0]
    }
}

/// Integrate the configured run and record the requested series.
pub fn integrate(cfg: &SimConfig) -> Result<RecordedSeries, SimError> {
    cfg.validate()?;
    let mode = &cfg.mode;
    let inertia = mode.moment_of_inertia;
    let dt = cfg.dt;
    let steps = cfg.steps();
    let prop = Propagator::new(mode, dt, cfg.drives.thermal);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let shot = cfg.drives.shot.map(|s| {
        let flux =
            s.power * s.wavelength / (2.0 * std::f64::consts::PI * CODATA.hbar * CODATA.c);
        let k = 2.0 * std::f64::consts::PI / s.wavelength;
        let impulse = 2.0 * CODATA.hbar * k;
        let poisson = Poisson::new(flux * dt).expect("positive mean");
        let extra_std = (s.extra_position_psd / (2.0 * dt)).sqrt();
        (s, flux, impulse, poisson, extra_std)
    });
    let intensity_std = cfg
        .drives
        .intensity
        .map(|d| (d.s_tau_im / (2.0 * dt)).sqrt());
    let meas_std = cfg
        .drives
        .feedback
        .map(|f| (f.s_imp / (2.0 * dt)).sqrt());

    let mut theta = Vec::with_capacity(steps);
    let mut tau_drive = Vec::with_capacity(steps);
    let mut theta_measured = cfg.drives.feedback.map(|_| Vec::with_capacity(steps));
    let mut drive_x = cfg.drives.shot.map(|_| Vec::with_capacity(steps));

    let mut x = [cfg.initial_angle, cfg.initial_velocity];
    let mut prev_meas: Option<f64> = None;
    for n in 0..steps {
        theta.push(x[0]);
        let t_mid = (n as f64 + 0.5) * dt;
        let mut tau = 0.0;

        if let Some(tone) = cfg.drives.tone {
            tau += tone.amplitude * (tone.omega * t_mid).cos();
        }
        if let Some((s, flux, impulse, ref poisson, extra_std)) = shot {
            let m = poisson.sample(&mut rng);
            let sum_x = m * s.x_off + m.sqrt() * 0.5 * s.spot * unit.sample(&mut rng);
            let mut tau_shot = impulse * sum_x / dt;
            if extra_std > 0.0 {
                tau_shot += impulse * flux * extra_std * unit.sample(&mut rng);
            }
            drive_x
                .as_mut()
                .expect("shot drive records displacement")
                .push(tau_shot / (impulse * flux));
            tau += tau_shot;
        }
        if let Some(std) = intensity_std {
            tau += std * unit.sample(&mut rng);
        }
        if let Some(fb) = cfg.drives.feedback {
            let meas = x[0] + meas_std.unwrap() * unit.sample(&mut rng);
            if let Some(prev) = prev_meas {
                tau -= inertia * fb.gamma_fb * (meas - prev) / dt;
            }
            prev_meas = Some(meas);
            theta_measured
                .as_mut()
                .expect("feedback drive records the measurement")
                .push(meas);
        }
        tau_drive.push(tau);

        let u = tau / inertia;
        let (w0, w1) = if cfg.drives.thermal {
            let xi0 = unit.sample(&mut rng);
            let xi1 = unit.sample(&mut rng);
            (
                prop.chol[0][0] * xi0,
                prop.chol[1][0] * xi0 + prop.chol[1][1] * xi1,
            )
        } else {
            (0.0, 0.0)
        };
        x = [
            prop.phi[0][0] * x[0] + prop.phi[0][1] * x[1] + prop.gain[0] * u + w0,
            prop.phi[1][0] * x[0] + prop.phi[1][1] * x[1] + prop.gain[1] * u + w1,
        ];
        if !x[0].is_finite() || x[0].abs() > 1.0e3 {
            return Err(SimError::Unstable {
                step: n,
                gamma_fb: cfg.drives.feedback.map_or(0.0, |f| f.gamma_fb),
                amplitude: x[0],
            });
        }
    }
    Ok(RecordedSeries {
        dt,
        seed: cfg.seed,
        theta,
        theta_measured,
        tau_drive,
        drive_x,
    })
}

/// Stationary angle variance of the discretized thermal chain; used to
/// verify the integrator against equipartition without sampling noise.
pub fn discrete_stationary_variance(mode: &TorsionMode, dt: f64) -> f64 {
    Propagator::new(mode, dt, true).stationary_variance(mode)
}

/// Fit Q from a ringdown record.
///
/// The per-period mean-square envelope 2⟨θ²⟩ equals A²(t) plus a constant
/// measurement-noise offset, so it is fitted as a·e^(−γt) + b; the offset
/// keeps the estimate unbiased on noisy records.
pub fn ringdown_q(series: &[f64], dt: f64, mode: &TorsionMode) -> Result<f64, SimError> {
    let period = 2.0 * std::f64::consts::PI / mode.omega_m;
    let block = (period / dt).round().max(2.0) as usize;
    if series.len() < 16 * block {
        return Err(SimError::TooShort("need at least 16 oscillation periods"));
    }
    let pts: Vec<(f64, f64)> = series
        .chunks_exact(block)
        .enumerate()
        .map(|(i, chunk)| {
            let ms = chunk.iter().map(|v| v * v).sum::<f64>() / block as f64;
            ((i as f64 + 0.5) * block as f64 * dt, 2.0 * ms)
        })
        .collect();
    let n = pts.len();
    let eighth = (n / 8).max(1);
    let head = pts[..eighth].iter().map(|p| p.1).sum::<f64>() / eighth as f64;
    let tail = pts[n - eighth..].iter().map(|p| p.1).sum::<f64>() / eighth as f64;
    let span = pts[n - 1].0 - pts[0].0;
    if head <= 0.0 {
        return Err(SimError::TooShort("record carries no signal"));
    }
    let b0 = tail.min(head) * 0.5;
    let a0 = (head - b0).max(head * 1e-3);
    let gamma0 = (((head - b0) / (tail - b0).max(a0 * 1e-6)).ln() / span).max(0.1 / span);
    let fit = levenberg_marquardt(
        |p, res, jac| {
            for (i, &(t, e)) in pts.iter().enumerate() {
                let decay = (-p[1] * t).exp();
                res[i] = p[0] * decay + p[2] - e;
                jac[i][0] = decay;
                jac[i][1] = -p[0] * t * decay;
                jac[i][2] = 1.0;
            }
        },
        &[a0, gamma0, b0],
        n,
        300,
    )
    .map_err(|_| SimError::NoDecay)?;
    let gamma = fit.params[1];
    if !(gamma > 0.0) || gamma * span < 0.2 || fit.params[0] <= 0.0 {
        return Err(SimError::NoDecay);
    }
    Ok(mode.omega_m / gamma)
}

/// Cold-damping run outcome with its phonon estimate.
#[derive(Debug)]
pub struct ColdDampRun {
    pub series: RecordedSeries,
    /// Occupancy n = I·ω_m·⟨θ²⟩/ħ − 1/2 from the post-transient record.
    pub n_m_estimate: f64,
    pub gamma_eff: f64,
}

/// Run the closed loop and estimate the occupancy from the physical variance.
pub fn cold_damp_run(cfg: &SimConfig) -> Result<ColdDampRun, SimError> {
    let fb = cfg.drives.feedback.ok_or(SimError::NoFeedback)?;
    let series = integrate(cfg)?;
    let gamma_eff = cfg.mode.gamma_m + fb.gamma_fb;
    let skip = ((5.0 / (gamma_eff * cfg.dt)).ceil() as usize).min(series.theta.len() / 2);
    let tail = &series.theta[skip..];
    let theta_sq = tail.iter().map(|t| t * t).sum::<f64>() / tail.len() as f64;
    let n_m = cfg.mode.moment_of_inertia * cfg.mode.omega_m * theta_sq / CODATA.hbar - 0.5;
    Ok(ColdDampRun {
        series,
        n_m_estimate: n_m,
        gamma_eff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psd::{coherence, estimate_psd_with_segment};
    use crate::spectra::susceptibility;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn desk_mode(q: f64) -> TorsionMode {
        TorsionMode::new(2.0 * std::f64::consts::PI * 52.5e3, q, 3.8e-18, 295.0).unwrap()
    }

    fn base_config(mode: TorsionMode, duration: f64, seed: u64) -> SimConfig {
        SimConfig {
            mode,
            dt: 2.0 * std::f64::consts::PI / (20.0 * mode.omega_m),
            duration,
            seed,
            drives: Drives {
                thermal: true,
                ..Drives::default()
            },
            initial_angle: 0.0,
            initial_velocity: 0.0,
        }
    }

    #[test]
    fn equipartition_of_thermal_run() {
        let mode = desk_mode(300.0);
        let cfg = base_config(mode, 1.2, 17);
        let series = integrate(&cfg).unwrap();
        let skip = series.theta.len() / 10;
        let tail = &series.theta[skip..];
        let theta_sq = tail.iter().map(|t| t * t).sum::<f64>() / tail.len() as f64;
        let expected = CODATA.k_b * mode.temperature
            / (mode.moment_of_inertia * mode.omega_m * mode.omega_m);
        assert!(
            rel(theta_sq, expected) < 0.10,
            "{theta_sq:.4e} vs {expected:.4e}"
        );
    }

    #[test]
    fn discrete_chain_reproduces_equipartition_exactly() {
        let mode = desk_mode(1.0e3);
        let dt = 2.0 * std::f64::consts::PI / (20.0 * mode.omega_m);
        let expected = CODATA.k_b * mode.temperature
            / (mode.moment_of_inertia * mode.omega_m * mode.omega_m);
        let v1 = discrete_stationary_variance(&mode, dt);
        let v2 = discrete_stationary_variance(&mode, dt / 2.0);
        assert!(rel(v1, expected) < 1e-9);
        assert!(rel(v2, expected) < 1e-9);
        assert!(rel(v1, v2) < 1e-9);
    }

    #[test]
    fn noiseless_ringdown_envelope() {
        let mode = desk_mode(1.0e3);
        let mut cfg = base_config(mode, 0.05, 1);
        cfg.drives.thermal = false;
        cfg.initial_angle = 1.0e-7;
        let series = integrate(&cfg).unwrap();
        // Envelope e^{-γt/2} against the analytic prediction at mid-run.
        let q = ringdown_q(&series.theta, cfg.dt, &mode).unwrap();
        assert!(rel(q, 1.0e3) < 0.05);
    }

    #[test]
    fn noisy_ringdown_recovers_q() {
        let mode = desk_mode(1.0e3);
        let mut cfg = base_config(mode, 0.05, 2);
        cfg.drives.thermal = false;
        cfg.initial_angle = 1.0e-7;
        let series = integrate(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let unit = Normal::new(0.0, 1.0e-8).unwrap();
        let noisy: Vec<f64> = series
            .theta
            .iter()
            .map(|&t| t + unit.sample(&mut rng))
            .collect();
        let q = ringdown_q(&noisy, cfg.dt, &mode).unwrap();
        assert!(rel(q, 1.0e3) < 0.10, "recovered Q = {q:.1}");
    }

    #[test]
    fn non_decaying_series_flagged() {
        let mode = desk_mode(1.0e3);
        let dt = 2.0 * std::f64::consts::PI / (20.0 * mode.omega_m);
        let series: Vec<f64> = (0..20000)
            .map(|i| 1.0e-7 * (mode.omega_m * i as f64 * dt).sin())
            .collect();
        assert!(matches!(
            ringdown_q(&series, dt, &mode),
            Err(SimError::NoDecay)
        ));
    }

    #[test]
    fn coherent_tone_reaches_susceptibility_amplitude() {
        let mode = desk_mode(1.0e3);
        let mut cfg = base_config(mode, 40.0 / mode.gamma_m, 3);
        cfg.drives.thermal = false;
        let tau0 = 1.0e-19;
        cfg.drives.tone = Some(ToneDrive {
            amplitude: tau0,
            omega: mode.omega_m,
        });
        let series = integrate(&cfg).unwrap();
        let last = &series.theta[series.theta.len() - 2000..];
        let amplitude = last.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let expected = susceptibility(&mode, mode.omega_m).norm() * tau0;
        assert!(
            rel(amplitude, expected) < 0.05,
            "{amplitude:.4e} vs {expected:.4e}"
        );
    }

    #[test]
    fn thermal_psd_matches_susceptibility_model() {
        let mode = desk_mode(300.0);
        let cfg = base_config(mode, 1.2, 23);
        let series = integrate(&cfg).unwrap();
        let est = estimate_psd_with_segment(&series.theta, cfg.dt, 1 << 17).unwrap();
        // Band-average around resonance against |χ|²·S_th.
        let f_m = mode.omega_m / (2.0 * std::f64::consts::PI);
        let half_band = 2.0 * mode.gamma_m / (2.0 * std::f64::consts::PI);
        let s_th = mode.thermal_torque_psd();
        let mut measured = 0.0;
        let mut model = 0.0;
        for (i, &f) in est.freqs_hz.iter().enumerate() {
            if (f - f_m).abs() <= half_band {
                measured += est.psd[i];
                model += susceptibility(&mode, 2.0 * std::f64::consts::PI * f).norm_sqr() * s_th;
            }
        }
        assert!(
            rel(measured, model) < 0.10,
            "band ratio {:.3}",
            measured / model
        );
        assert!(est.parseval_mismatch(&series.theta) < 0.05);
    }

    #[test]
    fn deterministic_under_seed() {
        let mode = desk_mode(1.0e3);
        let mut cfg = base_config(mode, 0.02, 77);
        cfg.drives.feedback = Some(FeedbackDrive {
            gamma_fb: 10.0 * mode.gamma_m,
            s_imp: 1.0e-20,
        });
        let a = integrate(&cfg).unwrap();
        let b = integrate(&cfg).unwrap();
        assert_eq!(a.theta.len(), b.theta.len());
        for i in 0..a.theta.len() {
            assert_eq!(a.theta[i].to_bits(), b.theta[i].to_bits());
        }
    }

    #[test]
    fn cold_damping_cools_toward_model() {
        let mode = desk_mode(1.0e3);
        let s_imp = 1.0e-21;
        let gamma_fb = 20.0 * mode.gamma_m;
        let mut cfg = base_config(mode, 1.0, 5);
        cfg.dt = 2.0 * std::f64::consts::PI / (80.0 * mode.omega_m);
        cfg.drives.feedback = Some(FeedbackDrive { gamma_fb, s_imp });
        let run = cold_damp_run(&cfg).unwrap();
        let n_imp = s_imp / (2.0 * mode.zero_point_peak_psd());
        let fb = crate::feedback::FeedbackConfig {
            gamma_fb,
            n_imp,
            mode,
        };
        let expected = crate::feedback::phonon_number(&fb);
        assert!(
            rel(run.n_m_estimate, expected) < 0.15,
            "{:.3e} vs {:.3e}",
            run.n_m_estimate,
            expected
        );
    }

    #[test]
    fn runaway_loop_is_flagged() {
        let mode = desk_mode(1.0e3);
        let mut cfg = base_config(mode, 0.01, 6);
        cfg.drives.feedback = Some(FeedbackDrive {
            gamma_fb: 40.0 * mode.omega_m,
            s_imp: 1.0e-18,
        });
        cfg.initial_angle = 1.0e-7;
        assert!(matches!(
            cold_damp_run(&cfg),
            Err(SimError::Unstable { .. })
        ));
    }

    #[test]
    fn position_drive_dominates_coherence_with_phase_flip() {
        let mode = desk_mode(1.0e3);
        let mut cfg = base_config(mode, 1.0, 8);
        cfg.drives.shot = Some(ShotDrive {
            power: 0.5e-3,
            wavelength: 633.0e-9,
            spot: 50.0e-6,
            x_off: 0.0,
            extra_position_psd: 1.0e-10,
        });
        let series = integrate(&cfg).unwrap();
        let drive = series.drive_x.as_ref().unwrap();
        let coh = coherence(&series.theta, drive, cfg.dt).unwrap();
        let f_m = mode.omega_m / (2.0 * std::f64::consts::PI);
        let nearest = |f: f64| -> usize {
            coh.freqs_hz
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - f).abs().total_cmp(&(b.1 - f).abs()))
                .unwrap()
                .0
        };
        let at_res = nearest(f_m);
        assert!(
            coh.magnitude[at_res] > 0.9,
            "|C| = {:.3}",
            coh.magnitude[at_res]
        );
        let df_lw = 20.0 * mode.gamma_m / (2.0 * std::f64::consts::PI);
        let below = nearest(f_m - df_lw);
        let above = nearest(f_m + df_lw);
        let mut flip = (coh.phase[below] - coh.phase[above]).abs();
        if flip > std::f64::consts::PI {
            flip = 2.0 * std::f64::consts::PI - flip;
        }
        assert!(
            (flip - std::f64::consts::PI).abs() < 0.5,
            "phase flip {flip:.3}"
        );
    }

    #[test]
    fn step_guard_rejects_coarse_dt() {
        let mode = desk_mode(1.0e3);
        let mut cfg = base_config(mode, 0.01, 1);
        cfg.dt = 1.0 / (2.0 * 52.5e3);
        assert!(matches!(
            integrate(&cfg),
            Err(SimError::StepTooCoarse { .. })
        ));
    }
}
