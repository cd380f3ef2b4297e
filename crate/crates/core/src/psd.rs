//! Spectral estimation for recorded time series: averaged periodograms and
//! cross-spectral coherence.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PsdError {
    #[error("series of {len} samples is too short for {segments} segments of {segment_len}")]
    TooShort {
        len: usize,
        segments: usize,
        segment_len: usize,
    },
    #[error("series must share a common grid (lengths {0} vs {1})")]
    GridMismatch(usize, usize),
    #[error("bin width must be positive")]
    BadBinWidth,
}

pub const METHOD: &str = "averaged periodogram, Hann window, 50% overlap";

/// Single-sided PSD estimate on a uniform frequency grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatedSpectrum {
    /// Frequency grid, Hz.
    pub freqs_hz: Vec<f64>,
    /// PSD, (input units)²/Hz.
    pub psd: Vec<f64>,
    /// Number of averaged segments.
    pub segments: usize,
    /// Estimation method, fixed.
    pub method: &'static str,
}

impl EstimatedSpectrum {
    /// Total power recovered from the PSD: Σ psd·df.
    pub fn integrated_power(&self) -> f64 {
        let df = self.freqs_hz[1] - self.freqs_hz[0];
        self.psd.iter().sum::<f64>() * df
    }

    /// Relative mismatch between the integrated PSD and the series mean
    /// square; the estimate should keep this within 5%.
    pub fn parseval_mismatch(&self, series: &[f64]) -> f64 {
        let ms = series.iter().map(|x| x * x).sum::<f64>() / series.len() as f64;
        (self.integrated_power() - ms).abs() / ms
    }
}

fn hann(len: usize) -> (Vec<f64>, f64) {
    let window: Vec<f64> = (0..len)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos()))
        .collect();
    let norm = window.iter().map(|w| w * w).sum::<f64>();
    (window, norm)
}

fn auto_segment_len(len: usize) -> usize {
    // Largest power of two allowing at least 8 half-overlapped segments.
    let mut seg = 16;
    while seg * 9 <= len * 2 {
        seg *= 2;
    }
    seg / 2
}

fn segment_starts(len: usize, seg: usize) -> Vec<usize> {
    let hop = seg / 2;
    (0..)
        .map(|i| i * hop)
        .take_while(|&s| s + seg <= len)
        .collect()
}

/// Averaged-periodogram single-sided PSD with an automatic segment length
/// (at least 8 half-overlapped Hann segments).
pub fn estimate_psd(series: &[f64], dt: f64) -> Result<EstimatedSpectrum, PsdError> {
    estimate_psd_with_segment(series, dt, auto_segment_len(series.len()))
}

/// Averaged-periodogram PSD with an explicit segment length.
pub fn estimate_psd_with_segment(
    series: &[f64],
    dt: f64,
    segment_len: usize,
) -> Result<EstimatedSpectrum, PsdError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(PsdError::BadBinWidth);
    }
    let starts = segment_starts(series.len(), segment_len);
    if segment_len < 16 || starts.len() < 8 {
        return Err(PsdError::TooShort {
            len: series.len(),
            segments: starts.len(),
            segment_len,
        });
    }
    let (window, window_norm) = hann(segment_len);
    let fs = 1.0 / dt;
    let fft = FftPlanner::new().plan_fft_forward(segment_len);
    let half = segment_len / 2;
    let mut acc = vec![0.0; half + 1];
    let mut buf = vec![Complex64::new(0.0, 0.0); segment_len];
    for &start in &starts {
        for i in 0..segment_len {
            buf[i] = Complex64::new(series[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, slot) in acc.iter_mut().enumerate() {
            *slot += buf[k].norm_sqr();
        }
    }
    let k_segments = starts.len() as f64;
    let base = 1.0 / (fs * window_norm * k_segments);
    let psd: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let one_sided = if k == 0 || k == half { 1.0 } else { 2.0 };
            p * base * one_sided
        })
        .collect();
    let freqs_hz = (0..=half).map(|k| k as f64 * fs / segment_len as f64).collect();
    Ok(EstimatedSpectrum {
        freqs_hz,
        psd,
        segments: starts.len(),
        method: METHOD,
    })
}

/// Magnitude and phase of the coherence between two series sharing a grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoherenceSpectrum {
    pub freqs_hz: Vec<f64>,
    /// |S_ab|/√(S_a·S_b) per bin, in [0, 1].
    pub magnitude: Vec<f64>,
    /// arg(S_ab) per bin, rad.
    pub phase: Vec<f64>,
    pub segments: usize,
}

/// Averaged cross-periodogram coherence of `a` against `b`.
pub fn coherence(a: &[f64], b: &[f64], dt: f64) -> Result<CoherenceSpectrum, PsdError> {
    if a.len() != b.len() {
        return Err(PsdError::GridMismatch(a.len(), b.len()));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(PsdError::BadBinWidth);
    }
    let segment_len = auto_segment_len(a.len());
    let starts = segment_starts(a.len(), segment_len);
    if segment_len < 16 || starts.len() < 8 {
        return Err(PsdError::TooShort {
            len: a.len(),
            segments: starts.len(),
            segment_len,
        });
    }
    let (window, _) = hann(segment_len);
    let fft = FftPlanner::new().plan_fft_forward(segment_len);
    let half = segment_len / 2;
    let mut s_aa = vec![0.0; half + 1];
    let mut s_bb = vec![0.0; half + 1];
    let mut s_ab = vec![Complex64::new(0.0, 0.0); half + 1];
    let mut buf_a = vec![Complex64::new(0.0, 0.0); segment_len];
    let mut buf_b = vec![Complex64::new(0.0, 0.0); segment_len];
    for &start in &starts {
        for i in 0..segment_len {
            buf_a[i] = Complex64::new(a[start + i] * window[i], 0.0);
            buf_b[i] = Complex64::new(b[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf_a);
        fft.process(&mut buf_b);
        for k in 0..=half {
            s_aa[k] += buf_a[k].norm_sqr();
            s_bb[k] += buf_b[k].norm_sqr();
            s_ab[k] += buf_a[k] * buf_b[k].conj();
        }
    }
    let fs = 1.0 / dt;
    let mut magnitude = Vec::with_capacity(half + 1);
    let mut phase = Vec::with_capacity(half + 1);
    for k in 0..=half {
        let denom = (s_aa[k] * s_bb[k]).sqrt();
        let c = if denom > 0.0 {
            s_ab[k] / denom
        } else {
            Complex64::new(0.0, 0.0)
        };
        magnitude.push(c.norm());
        phase.push(c.arg());
    }
    let freqs_hz = (0..=half).map(|k| k as f64 * fs / segment_len as f64).collect();
    Ok(CoherenceSpectrum {
        freqs_hz,
        magnitude,
        phase,
        segments: starts.len(),
    })
}
