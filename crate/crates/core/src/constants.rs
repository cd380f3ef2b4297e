//! Physical constants.

/// Fundamental constants carried together so every formula draws from one
/// source. All spectra in this crate are single-sided PSDs in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Reduced Planck constant, J·s.
    pub hbar: f64,
    /// Boltzmann constant, J/K.
    pub k_b: f64,
    /// Speed of light in vacuum, m/s.
    pub c: f64,
}

/// CODATA 2018 values. Library routines use these; they are not taken from
/// run configuration.
pub const CODATA: PhysicalConstants = PhysicalConstants {
    hbar: 1.054_571_817e-34,
    k_b: 1.380_649e-23,
    c: 2.997_924_58e8,
};
