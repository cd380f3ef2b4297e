//! Command implementations. Every command writes only inside the configured
//! output directory, embeds the config hash in each artifact, and is
//! byte-deterministic for a fixed config and seed.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use olev_core::calib::{self, RawSpectrum};
use olev_core::diffraction::{
    critical_compensation_waist, hg10_readout_gain, spd_sensitivity, sweep_focus, sweep_waist,
    DiffractionScene, SweepPoint,
};
use olev_core::feedback::{self, FeedbackConfig};
use olev_core::mc_photon::{estimate_backaction_psd, simulate_torque_series, PhotonStreamConfig};
use olev_core::psd::estimate_psd;
use olev_core::spectra::{self, susceptibility};
use olev_core::timesim::{
    cold_damp_run, integrate, Drives, FeedbackDrive, IntensityDrive, ShotDrive, SimConfig,
    ToneDrive,
};
use olev_core::{acceptance, SpectrumSeries, TorsionMode};

use crate::config::RunConfig;

/// Output format of tabular artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

pub struct Context_ {
    pub config: RunConfig,
    pub resolved: String,
    pub hash: String,
    pub out_dir: PathBuf,
    pub format: Format,
    pub seed_override: Option<u64>,
}

impl Context_ {
    pub fn prepare(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("cannot create {}", self.out_dir.display()))?;
        let echo = serde_json::json!({
            "config_hash": self.hash,
            "config": toml_to_json(&self.resolved)?,
        });
        self.write_json("config_echo.json", &echo)?;
        Ok(())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut wrapped = serde_json::to_value(value)?;
        if let Some(map) = wrapped.as_object_mut() {
            map.insert(
                "config_hash".to_string(),
                serde_json::Value::String(self.hash.clone()),
            );
        }
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(&wrapped)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }

    pub fn write_table(&self, name: &str, columns: &[&str], rows: &[Vec<f64>]) -> Result<PathBuf> {
        match self.format {
            Format::Csv => {
                let path = self.path(&format!("{name}.csv"));
                let mut out = String::new();
                out.push_str(&format!("# config_hash = {}\n", self.hash));
                out.push_str(&columns.join(","));
                out.push('\n');
                for row in rows {
                    let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
                    out.push_str(&line.join(","));
                    out.push('\n');
                }
                fs::write(&path, out)?;
                Ok(path)
            }
            Format::Json => {
                let rows_json: Vec<serde_json::Value> = rows
                    .iter()
                    .map(|row| {
                        columns
                            .iter()
                            .zip(row)
                            .map(|(c, v)| (c.to_string(), serde_json::json!(v)))
                            .collect::<serde_json::Map<_, _>>()
                            .into()
                    })
                    .collect();
                let value = serde_json::json!({ "rows": rows_json });
                self.write_json(&format!("{name}.json"), &value)
            }
        }
    }

    pub fn write_spectrum(&self, name: &str, series: &SpectrumSeries) -> Result<PathBuf> {
        match self.format {
            Format::Csv => {
                let path = self.path(&format!("{name}.csv"));
                let mut buf = Vec::new();
                series.write_csv(&mut buf, &format!("config_hash = {}", self.hash))?;
                fs::write(&path, buf)?;
                Ok(path)
            }
            Format::Json => {
                let rows: Vec<Vec<f64>> = (0..series.len())
                    .map(|i| {
                        vec![
                            series.freqs[i] / (2.0 * std::f64::consts::PI),
                            series.total[i],
                            series.imprecision[i],
                            series.backaction[i],
                            series.thermal[i],
                            series.zero_point[i],
                            series.correlation[i],
                        ]
                    })
                    .collect();
                self.write_table(
                    name,
                    &[
                        "freq_hz",
                        "total",
                        "imprecision",
                        "backaction",
                        "thermal",
                        "zero_point",
                        "correlation",
                    ],
                    &rows,
                )
            }
        }
    }

    fn seed_for(&self, configured: u64) -> u64 {
        self.seed_override.unwrap_or(configured)
    }
}

fn toml_to_json(text: &str) -> Result<serde_json::Value> {
    let value: toml::Value = text.parse()?;
    Ok(serde_json::to_value(value)?)
}

/// Noise budget plus total-spectrum series on the configured grid.
pub fn cmd_budget(ctx: &Context_) -> Result<()> {
    let cfg = &ctx.config;
    let mode = cfg.torsion_mode()?;
    let beam = cfg.probe_beam()?;
    let det = cfg.detector()?;
    let budget = spectra::budget(&beam, &det, &mode);
    ctx.write_json("budget.json", &budget)?;

    let grid = cfg.grid.clone().unwrap_or_else(|| crate::config::GridSection {
        freq_min_hz: 0.98 * mode.omega_m / (2.0 * std::f64::consts::PI),
        freq_max_hz: 1.02 * mode.omega_m / (2.0 * std::f64::consts::PI),
        points: 2001,
    });
    if grid.points < 2 || grid.freq_max_hz <= grid.freq_min_hz || grid.freq_min_hz < 0.0 {
        bail!("invalid frequency grid");
    }
    let freqs: Vec<f64> = (0..grid.points)
        .map(|i| {
            2.0 * std::f64::consts::PI
                * (grid.freq_min_hz
                    + (grid.freq_max_hz - grid.freq_min_hz) * i as f64
                        / (grid.points - 1) as f64)
        })
        .collect();
    let series = spectra::total_spectrum(&beam, &det, &mode, &freqs, None)
        .map_err(|e| anyhow!("spectrum evaluation failed: {e}"))?;
    ctx.write_spectrum("spectrum", &series)?;
    println!(
        "budget: n_imp = {:.4e}, product = {:.4e} J^2 s^2, {} spectrum points",
        budget.n_imp,
        budget.product,
        series.len()
    );
    Ok(())
}

fn scene_from(ctx: &Context_) -> Result<DiffractionScene> {
    let cfg = &ctx.config;
    Ok(DiffractionScene {
        geom: cfg.geometry(),
        beam: cfg.probe_beam()?,
        grid: cfg.integration_grid(),
    })
}

fn sweep_rows(points: &[SweepPoint]) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::with_capacity(points.len());
    for p in points {
        match &p.result {
            Ok(r) => rows.push(vec![p.param, r.s_imp, r.d_delta_p_dx, r.w_eff]),
            Err(e) => log::warn!("sweep point {:.4e} failed: {e}", p.param),
        }
    }
    if rows.is_empty() {
        bail!("sweep produced no valid points");
    }
    Ok(rows)
}

/// Parameter sweeps: waist and focus go through the diffraction model, power
/// through the closed-form budget.
pub fn cmd_sweep(ctx: &Context_) -> Result<()> {
    let cfg = &ctx.config;
    let sweep = cfg
        .sweep
        .as_ref()
        .context("config needs a [sweep] section")?;
    if sweep.points < 2 || !(sweep.stop > sweep.start) || sweep.start <= 0.0 {
        bail!("invalid sweep range");
    }
    let log_scale = matches!(sweep.scale.as_deref(), Some("log"));
    let values: Vec<f64> = (0..sweep.points)
        .map(|i| {
            let t = i as f64 / (sweep.points - 1) as f64;
            if log_scale {
                sweep.start * (sweep.stop / sweep.start).powf(t)
            } else {
                sweep.start + (sweep.stop - sweep.start) * t
            }
        })
        .collect();

    match sweep.parameter.as_str() {
        "waist" => {
            let scene = scene_from(ctx)?;
            let points = sweep_waist(&scene, &values);
            let rows = sweep_rows(&points)?;
            let best = rows
                .iter()
                .min_by(|a, b| a[1].total_cmp(&b[1]))
                .expect("nonempty");
            ctx.write_table("sweep_waist", &["param", "s_imp", "d_delta_p_dx", "w_eff"], &rows)?;
            println!(
                "waist sweep: minimum s_imp = {:.4e} rad^2/Hz at w0 = {:.4e} m",
                best[1], best[0]
            );
        }
        "focus" => {
            let scene = scene_from(ctx)?;
            // Focus offsets may be negative; accept a descending range too.
            let offsets: Vec<f64> = values.clone();
            let result =
                sweep_focus(&scene, &offsets).map_err(|e| anyhow!("focus sweep failed: {e}"))?;
            let rows = sweep_rows(&result.points)?;
            ctx.write_table("sweep_focus", &["param", "s_imp", "d_delta_p_dx", "w_eff"], &rows)?;
            println!(
                "focus sweep: optimum z = {:.4e} m, s_imp = {:.4e}, backaction penalty {:.3}",
                result.optimal_z, result.s_imp_min, result.backaction_penalty
            );
        }
        "power" => {
            let mode = cfg.torsion_mode()?;
            let det = cfg.detector()?;
            let beam = cfg.probe_beam()?;
            let chi_sq = susceptibility(&mode, mode.omega_m).norm_sqr();
            let s_zp = mode.zero_point_peak_psd();
            let rows: Vec<Vec<f64>> = values
                .iter()
                .map(|&p| {
                    let mut b = beam;
                    b.power = p;
                    let s_imp = spectra::imprecision_psd(&b, &det);
                    let s_ba = chi_sq * spectra::backaction_torque_psd(&b);
                    vec![p, s_imp, s_ba, s_imp + s_ba, s_imp / (2.0 * s_zp)]
                })
                .collect();
            ctx.write_table(
                "sweep_power",
                &["param", "s_imp", "s_ba_onres", "added_onres", "n_imp"],
                &rows,
            )?;
            let best = rows
                .iter()
                .min_by(|a, b| a[3].total_cmp(&b[3]))
                .expect("nonempty");
            println!(
                "power sweep: added-noise minimum {:.4e} rad^2/Hz at P = {:.4e} W",
                best[3], best[0]
            );
        }
        other => bail!("unknown sweep parameter '{other}' (waist|focus|power)"),
    }
    Ok(())
}

#[derive(Serialize)]
struct DiffractionReport {
    d_delta_p_dx_w_per_m: f64,
    s_imp_ideal_rad2_hz: f64,
    s_imp_detected_rad2_hz: f64,
    w_eff_m: f64,
    critical_compensation_waist_m: Option<f64>,
    hg10_gain_per_rad: f64,
}

/// Single-scene diffraction evaluation.
pub fn cmd_diffraction(ctx: &Context_) -> Result<()> {
    let scene = scene_from(ctx)?;
    let det = ctx.config.detector()?;
    let result = spd_sensitivity(&scene).map_err(|e| anyhow!("diffraction failed: {e}"))?;
    let report = DiffractionReport {
        d_delta_p_dx_w_per_m: result.d_delta_p_dx,
        s_imp_ideal_rad2_hz: result.s_imp,
        s_imp_detected_rad2_hz: result.s_imp / det.eta_d + det.s_extra,
        w_eff_m: result.w_eff,
        critical_compensation_waist_m: critical_compensation_waist(
            &scene.geom,
            scene.beam.wavelength,
        )
        .ok(),
        hg10_gain_per_rad: hg10_readout_gain(&scene.beam),
    };
    ctx.write_json("diffraction.json", &report)?;
    if ctx
        .config
        .diffraction
        .as_ref()
        .is_some_and(|d| d.emit_profile)
    {
        let lobe = scene.beam.wavelength * scene.beam.lever_arm
            / (std::f64::consts::PI * scene.beam.waist);
        let rows: Vec<Vec<f64>> = (-300..=300)
            .map(|i| {
                let x = i as f64 / 50.0 * lobe;
                let amp = olev_core::diffraction::far_field(&scene, x, 0.0)
                    .map(|v| v.norm_sqr())
                    .unwrap_or(f64::NAN);
                vec![x, amp]
            })
            .collect();
        ctx.write_table("farfield_profile", &["x_m", "intensity"], &rows)?;
    }
    println!(
        "diffraction: s_imp = {:.4e} rad^2/Hz at spot {:.4e} m",
        report.s_imp_ideal_rad2_hz, report.w_eff_m
    );
    Ok(())
}

/// Monte-Carlo backaction estimate.
pub fn cmd_mc_backaction(ctx: &Context_) -> Result<()> {
    let cfg = &ctx.config;
    let mc = cfg.mc.as_ref().context("config needs an [mc] section")?;
    let stream = PhotonStreamConfig {
        beam: cfg.probe_beam()?,
        dt: mc.dt_s,
        duration: mc.duration_s,
        seed: ctx.seed_for(mc.seed),
        x_off: mc.x_off_m,
    };
    let estimate =
        estimate_backaction_psd(&stream).map_err(|e| anyhow!("photon stream failed: {e}"))?;
    ctx.write_json("mc_backaction.json", &estimate)?;
    if mc.emit_series {
        let series =
            simulate_torque_series(&stream).map_err(|e| anyhow!("photon stream failed: {e}"))?;
        let rows: Vec<Vec<f64>> = series
            .tau
            .iter()
            .enumerate()
            .map(|(i, &t)| vec![i as f64 * series.dt, t])
            .collect();
        ctx.write_table("mc_torque_series", &["time_s", "torque_nm"], &rows)?;
    }
    let closed_form = spectra::backaction_torque_psd(&cfg.probe_beam()?);
    println!(
        "mc-backaction: S_tau = {:.4e} ± {:.2e} N^2 m^2/Hz (closed form {:.4e}, {} photons)",
        estimate.s_tau, estimate.stderr, closed_form, estimate.n_photons
    );
    Ok(())
}

fn sim_mode(cfg: &RunConfig, sim: &crate::config::SimSection) -> Result<TorsionMode> {
    let mode = cfg.torsion_mode()?;
    if sim.q_reduced > 0.0 {
        Ok(mode.with_q(sim.q_reduced)?)
    } else {
        Ok(mode)
    }
}

fn sim_config(ctx: &Context_) -> Result<SimConfig> {
    let cfg = &ctx.config;
    let sim = cfg.sim.as_ref().context("config needs a [sim] section")?;
    let mode = sim_mode(cfg, sim)?;
    if sim.steps_per_period < 20.0 {
        bail!("steps_per_period must be at least 20");
    }
    let drives = Drives {
        thermal: sim.thermal,
        shot: (sim.shot_power_w > 0.0).then(|| ShotDrive {
            power: sim.shot_power_w,
            wavelength: sim.shot_wavelength_m,
            spot: sim.shot_spot_m,
            x_off: sim.shot_x_off_m,
            extra_position_psd: sim.shot_extra_position_psd,
        }),
        intensity: (sim.intensity_s_tau_im > 0.0).then(|| IntensityDrive {
            s_tau_im: sim.intensity_s_tau_im,
            x_off: sim.intensity_x_off_m,
        }),
        feedback: (sim.feedback_gamma_fb > 0.0).then(|| FeedbackDrive {
            gamma_fb: sim.feedback_gamma_fb,
            s_imp: sim.feedback_s_imp_rad2_hz,
        }),
        tone: (sim.tone_amplitude_nm > 0.0).then(|| ToneDrive {
            amplitude: sim.tone_amplitude_nm,
            omega: 2.0 * std::f64::consts::PI * sim.tone_freq_hz,
        }),
    };
    Ok(SimConfig {
        mode,
        dt: 2.0 * std::f64::consts::PI / (sim.steps_per_period * mode.omega_m),
        duration: sim.duration_s,
        seed: ctx.seed_for(sim.seed),
        drives,
        initial_angle: sim.initial_angle_rad,
        initial_velocity: 0.0,
    })
}

#[derive(Serialize)]
struct SimMeta {
    seed: u64,
    dt_s: f64,
    steps: usize,
    omega_m_rad_s: f64,
    gamma_m_rad_s: f64,
    q: f64,
    n_m_estimate: Option<f64>,
}

/// Time-domain run: series, estimated PSD, and metadata.
pub fn cmd_simulate(ctx: &Context_) -> Result<()> {
    let sim_cfg = sim_config(ctx)?;
    let n_m = if sim_cfg.drives.feedback.is_some() {
        let run = cold_damp_run(&sim_cfg).map_err(|e| anyhow!("simulation failed: {e}"))?;
        let n = run.n_m_estimate;
        write_sim_outputs(ctx, &sim_cfg, &run.series)?;
        Some(n)
    } else {
        let series = integrate(&sim_cfg).map_err(|e| anyhow!("simulation failed: {e}"))?;
        write_sim_outputs(ctx, &sim_cfg, &series)?;
        None
    };
    let meta = SimMeta {
        seed: sim_cfg.seed,
        dt_s: sim_cfg.dt,
        steps: sim_cfg.steps(),
        omega_m_rad_s: sim_cfg.mode.omega_m,
        gamma_m_rad_s: sim_cfg.mode.gamma_m,
        q: sim_cfg.mode.q,
        n_m_estimate: n_m,
    };
    ctx.write_json("sim_meta.json", &meta)?;
    if let Some(n) = n_m {
        println!("simulate: {} steps, cold-damped occupancy {:.4e}", meta.steps, n);
    } else {
        println!("simulate: {} steps recorded", meta.steps);
    }
    Ok(())
}

fn write_sim_outputs(
    ctx: &Context_,
    cfg: &SimConfig,
    series: &olev_core::timesim::RecordedSeries,
) -> Result<()> {
    // Decimate the recorded series so artifacts stay reviewable.
    let stride = (series.theta.len() / 200_000).max(1);
    let mut columns = vec!["time_s", "theta_rad", "tau_drive_nm"];
    if series.theta_measured.is_some() {
        columns.push("theta_measured_rad");
    }
    if series.drive_x.is_some() {
        columns.push("drive_x_m");
    }
    let rows: Vec<Vec<f64>> = (0..series.theta.len())
        .step_by(stride)
        .map(|i| {
            let mut row = vec![i as f64 * series.dt, series.theta[i], series.tau_drive[i]];
            if let Some(m) = &series.theta_measured {
                row.push(m[i]);
            }
            if let Some(x) = &series.drive_x {
                row.push(x[i]);
            }
            row
        })
        .collect();
    ctx.write_table("sim_series", &columns, &rows)?;

    if let Ok(est) = estimate_psd(&series.theta, series.dt) {
        let rows: Vec<Vec<f64>> = est
            .freqs_hz
            .iter()
            .zip(&est.psd)
            .map(|(&f, &p)| vec![f, p])
            .collect();
        ctx.write_table("sim_psd", &["freq_hz", "psd_rad2_hz"], &rows)?;
    }
    let _ = cfg;
    Ok(())
}

#[derive(Serialize)]
struct CoolSummary {
    gamma_eff_opt_rad_s: f64,
    n_min: f64,
    n_th: f64,
    n_imp: f64,
}

/// Analytic cooling curve with optional time-domain verification points.
pub fn cmd_cool(ctx: &Context_) -> Result<()> {
    let cfg = &ctx.config;
    let cool = cfg.cool.as_ref().context("config needs a [cool] section")?;
    if cool.n_imp <= 0.0 {
        bail!("cool.n_imp must be positive");
    }
    if !(cool.gamma_eff_max > cool.gamma_eff_min && cool.gamma_eff_min > 0.0) {
        bail!("invalid gamma_eff range");
    }
    let mode = cfg.torsion_mode()?;
    let fb = FeedbackConfig {
        gamma_fb: 0.0,
        n_imp: cool.n_imp,
        mode,
    };
    let gammas: Vec<f64> = (0..cool.points)
        .map(|i| {
            cool.gamma_eff_min
                * (cool.gamma_eff_max / cool.gamma_eff_min)
                    .powf(i as f64 / (cool.points - 1) as f64)
        })
        .collect();
    let curve = feedback::cooling_curve(&fb, &gammas);
    let rows: Vec<Vec<f64>> = curve.iter().map(|&(g, n)| vec![g, n]).collect();
    ctx.write_table("cooling_curve", &["gamma_eff", "n_m"], &rows)?;
    let opt = feedback::optimal_gain(&fb).map_err(|e| anyhow!("{e}"))?;
    let summary = CoolSummary {
        gamma_eff_opt_rad_s: opt.gamma_eff_opt,
        n_min: opt.n_min,
        n_th: mode.thermal_occupation(),
        n_imp: cool.n_imp,
    };
    ctx.write_json("cool_summary.json", &summary)?;

    if cool.sim_points > 0 {
        let sim = cfg.sim.as_ref().context("sim_points needs a [sim] section")?;
        let sim_mode = sim_mode(cfg, sim)?;
        let s_imp = 2.0 * cool.n_imp * sim_mode.zero_point_peak_psd();
        let mut rows = Vec::new();
        for i in 0..cool.sim_points {
            let gamma_eff = cool.gamma_eff_min
                * (cool.gamma_eff_max / cool.gamma_eff_min)
                    .powf(i as f64 / (cool.sim_points.max(2) - 1) as f64);
            let gamma_fb = gamma_eff - sim_mode.gamma_m;
            if gamma_fb <= 0.0 {
                continue;
            }
            let run_cfg = SimConfig {
                mode: sim_mode,
                dt: 2.0 * std::f64::consts::PI / (80.0 * sim_mode.omega_m),
                duration: (1600.0 / gamma_eff).min(sim.duration_s),
                seed: ctx.seed_for(sim.seed) + i as u64,
                drives: Drives {
                    thermal: true,
                    feedback: Some(FeedbackDrive { gamma_fb, s_imp }),
                    ..Drives::default()
                },
                initial_angle: 0.0,
                initial_velocity: 0.0,
            };
            let run = cold_damp_run(&run_cfg).map_err(|e| anyhow!("cooling sim failed: {e}"))?;
            let fb_pt = FeedbackConfig {
                gamma_fb,
                n_imp: cool.n_imp,
                mode: sim_mode,
            };
            rows.push(vec![
                gamma_eff,
                run.n_m_estimate,
                feedback::phonon_number(&fb_pt),
            ]);
        }
        if !rows.is_empty() {
            ctx.write_table("cooling_sim_points", &["gamma_eff", "n_m_sim", "n_m_model"], &rows)?;
        }
    }
    println!(
        "cool: optimum gamma_eff = {:.4e} rad/s, n_min = {:.4e}",
        opt.gamma_eff_opt, opt.n_min
    );
    Ok(())
}

fn read_two_column_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',');
        let a = parts.next().unwrap_or_default().trim();
        let b = parts.next().unwrap_or_default().trim();
        if let (Ok(x), Ok(y)) = (a.parse::<f64>(), b.parse::<f64>()) {
            xs.push(x);
            ys.push(y);
        }
    }
    if xs.len() < 8 {
        bail!("{} has fewer than 8 numeric rows", path.display());
    }
    Ok((xs, ys))
}

fn calib_grid(mode: &TorsionMode, span_linewidths: f64, points: usize) -> Vec<f64> {
    let f_m = mode.omega_m / (2.0 * std::f64::consts::PI);
    let half = span_linewidths * mode.gamma_m / (2.0 * std::f64::consts::PI);
    (0..points)
        .map(|i| f_m - half + 2.0 * half * i as f64 / (points - 1) as f64)
        .collect()
}

/// Thermal-bootstrap calibration of a raw spectrum (from file or synthetic).
pub fn cmd_calibrate(ctx: &Context_) -> Result<()> {
    let cfg = &ctx.config;
    let calib_cfg = cfg.calib.as_ref().context("config needs a [calib] section")?;
    let mode = cfg.torsion_mode()?;
    let raw = match &calib_cfg.input_csv {
        Some(path) => {
            let (freqs_hz, psd) = read_two_column_csv(Path::new(path))?;
            RawSpectrum { freqs_hz, psd }
        }
        None => {
            let freqs = calib_grid(&mode, calib_cfg.span_linewidths, calib_cfg.points);
            calib::synthesize_raw_spectrum(
                &mode,
                calib_cfg.gain_v_per_rad,
                calib_cfg.floor_v2_hz,
                &freqs,
                calib_cfg.n_avg,
                ctx.seed_for(calib_cfg.seed),
            )
        }
    };
    let fit = calib::bootstrap_calibration(&raw, &mode)
        .map_err(|e| anyhow!("calibration failed: {e}"))?;
    let lateral = (calib_cfg.dv_dx_v_per_m > 0.0).then(|| {
        calib::lateral_calibration(calib_cfg.dv_dx_v_per_m, cfg.beam.lever_arm_m)
    });
    let report = serde_json::json!({
        "bootstrap": fit,
        "lateral_gain_v_per_rad": lateral,
    });
    ctx.write_json("calibration.json", &report)?;
    println!(
        "calibrate: gain = {:.5e} ± {:.1e} V/rad, floor = {:.3e} V^2/Hz",
        fit.gain, fit.gain_sigma, fit.floor
    );
    Ok(())
}

/// Correlated intensity-backaction fit (from file or synthetic).
pub fn cmd_fit_correlations(ctx: &Context_) -> Result<()> {
    let cfg = &ctx.config;
    let corr = cfg
        .correlations
        .as_ref()
        .context("config needs a [correlations] section")?;
    let mode = cfg.torsion_mode()?;
    let s_tau_th = mode.thermal_torque_psd();
    let (freqs, psd) = match &corr.input_csv {
        Some(path) => read_two_column_csv(Path::new(path))?,
        None => {
            let freqs = calib_grid(&mode, corr.span_linewidths, corr.points);
            let c = corr.c_scale * s_tau_th * susceptibility(&mode, mode.omega_m).norm();
            let psd = calib::synthesize_correlated_spectrum(
                &mode,
                corr.s_imp_rad2_hz,
                corr.s_tau_im_ratio * s_tau_th,
                c,
                s_tau_th,
                &freqs,
                corr.n_avg,
                ctx.seed_for(corr.seed),
            );
            (freqs, psd)
        }
    };
    let fit = calib::fit_correlations(&freqs, &psd, &mode, s_tau_th)
        .map_err(|e| anyhow!("correlation fit failed: {e}"))?;
    ctx.write_json("correlation_fit.json", &fit)?;
    println!(
        "fit-correlations: S_im/S_th = {:.3}, C = {:.3e} (σ {:.1e})",
        fit.s_tau_im / s_tau_th,
        fit.c,
        fit.c_sigma
    );
    Ok(())
}

#[derive(Serialize)]
struct VerifyReport {
    passed: bool,
    checks: Vec<olev_core::acceptance::CheckResult>,
}

/// Run the built-in validation suite; nonzero exit on any failure.
pub fn cmd_verify(ctx: &Context_) -> Result<bool> {
    let checks = acceptance::run_all();
    let passed = checks.iter().all(|c| c.passed);
    for c in &checks {
        println!(
            "[{}] {:<34} {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.id,
            c.detail
        );
    }
    let report = VerifyReport { passed, checks };
    ctx.write_json("verify_report.json", &report)?;
    Ok(passed)
}
