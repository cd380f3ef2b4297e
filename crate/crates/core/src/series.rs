//! Frequency series containers and their CSV form.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("frequency grid is empty")]
    EmptyGrid,
    #[error("frequency grid must be strictly increasing at index {0}")]
    NotIncreasing(usize),
    #[error("component lengths disagree with the grid")]
    LengthMismatch,
    #[error("non-finite value in component {component} at index {index}")]
    NonFinite { component: &'static str, index: usize },
    #[error("component {component} is negative at index {index}")]
    Negative { component: &'static str, index: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Single-sided angular-displacement PSD on a caller-supplied grid, broken
/// into its physical components. `total` is the per-point sum; the
/// correlation component may be negative, all others are non-negative.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumSeries {
    /// Angular frequency grid, rad/s, strictly increasing.
    pub freqs: Vec<f64>,
    /// Shot-noise plus extraneous readout noise, rad²/Hz.
    pub imprecision: Vec<f64>,
    /// Radiation-pressure backaction displacement noise, rad²/Hz.
    pub backaction: Vec<f64>,
    /// Thermal displacement noise, rad²/Hz.
    pub thermal: Vec<f64>,
    /// Zero-point displacement noise, rad²/Hz.
    pub zero_point: Vec<f64>,
    /// Imprecision-backaction correlation term, rad²/Hz (signed).
    pub correlation: Vec<f64>,
    /// Per-point sum of all components, rad²/Hz.
    pub total: Vec<f64>,
}

impl SpectrumSeries {
    /// Assemble a series from its components; the total is computed here so
    /// the sum invariant holds by construction.
    pub fn from_components(
        freqs: Vec<f64>,
        imprecision: Vec<f64>,
        backaction: Vec<f64>,
        thermal: Vec<f64>,
        zero_point: Vec<f64>,
        correlation: Vec<f64>,
    ) -> Result<Self, SeriesError> {
        let n = freqs.len();
        if n == 0 {
            return Err(SeriesError::EmptyGrid);
        }
        for i in 1..n {
            if freqs[i] <= freqs[i - 1] {
                return Err(SeriesError::NotIncreasing(i));
            }
        }
        if [&imprecision, &backaction, &thermal, &zero_point, &correlation]
            .iter()
            .any(|v| v.len() != n)
        {
            return Err(SeriesError::LengthMismatch);
        }
        let total = (0..n)
            .map(|i| imprecision[i] + backaction[i] + thermal[i] + zero_point[i] + correlation[i])
            .collect();
        let series = Self {
            freqs,
            imprecision,
            backaction,
            thermal,
            zero_point,
            correlation,
            total,
        };
        series.validate()?;
        Ok(series)
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Check finiteness, sign constraints, and the component-sum invariant.
    pub fn validate(&self) -> Result<(), SeriesError> {
        let named: [(&'static str, &Vec<f64>); 5] = [
            ("imprecision", &self.imprecision),
            ("backaction", &self.backaction),
            ("thermal", &self.thermal),
            ("zero_point", &self.zero_point),
            ("correlation", &self.correlation),
        ];
        for (component, values) in named {
            for (index, &v) in values.iter().enumerate() {
                if !v.is_finite() {
                    return Err(SeriesError::NonFinite { component, index });
                }
                if component != "correlation" && v < 0.0 {
                    return Err(SeriesError::Negative { component, index });
                }
            }
        }
        for i in 0..self.len() {
            let sum = self.imprecision[i]
                + self.backaction[i]
                + self.thermal[i]
                + self.zero_point[i]
                + self.correlation[i];
            let scale = sum.abs().max(self.total[i].abs()).max(f64::MIN_POSITIVE);
            if ((self.total[i] - sum) / scale).abs() > 1e-12 {
                return Err(SeriesError::NonFinite {
                    component: "total",
                    index: i,
                });
            }
        }
        Ok(())
    }

    /// Index of the grid point closest to `omega` (rad/s).
    pub fn nearest_index(&self, omega: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, &w) in self.freqs.iter().enumerate() {
            let d = (w - omega).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    }

    /// Write as CSV with frequencies converted to Hz. Values use 17
    /// significant digits so re-runs are byte-stable.
    pub fn write_csv<W: Write>(&self, mut out: W, header_comment: &str) -> Result<(), SeriesError> {
        if !header_comment.is_empty() {
            writeln!(out, "# {header_comment}")?;
        }
        writeln!(
            out,
            "freq_hz,total,imprecision,backaction,thermal,zero_point,correlation"
        )?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.freqs[i] / (2.0 * std::f64::consts::PI),
                self.total[i],
                self.imprecision[i],
                self.backaction[i],
                self.thermal[i],
                self.zero_point[i],
                self.correlation[i],
            )?;
        }
        Ok(())
    }
}
