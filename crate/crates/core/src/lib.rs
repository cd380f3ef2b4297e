//! Noise modeling toolkit for optical-lever readout of high-Q torsion
//! oscillators.
//!
//! The crate covers the full measurement chain at desk scale:
//!
//! * [`params`] — device geometry, derived torsion-mode quantities, probe
//!   beam, and receiver parameters.
//! * [`spectra`] — closed-form frequency-domain noise budgets: mechanical
//!   susceptibility, imprecision, radiation-pressure backaction, thermal and
//!   zero-point spectra, and the quantum-limit bookkeeping.
//! * [`diffraction`] — numerical Fraunhofer model of the split-photodetector
//!   readout off a finite-width, parabolically curved ribbon, including
//!   focus-offset phase compensation. Serves as the ground-truth oracle for
//!   imprecision beyond the ideal closed form.
//! * [`mc_photon`] — semiclassical Monte-Carlo oracle for radiation-pressure
//!   torque shot noise.
//! * [`feedback`] — cold-damping analysis: closed-loop spectra, phonon
//!   occupancy, optimal gain.
//! * [`timesim`] — stochastic time-domain digital twin of the oscillator
//!   under thermal, shot, intensity, and feedback torques.
//! * [`psd`] — averaged-periodogram spectral estimation and coherence.
//! * [`calib`] — thermal-bootstrap and lateral calibration, correlated
//!   backaction fits.
//! * [`acceptance`] — the end-to-end validation suite used by tests and the
//!   CLI `verify` command.

pub mod acceptance;
pub mod calib;
pub mod constants;
pub mod diffraction;
pub mod feedback;
pub mod fitting;
pub mod mc_photon;
pub mod params;
pub mod psd;
pub mod series;
pub mod spectra;
pub mod timesim;

pub use constants::{PhysicalConstants, CODATA};
pub use params::{Detector, ProbeBeam, RibbonGeometry, TorsionMode};
pub use series::SpectrumSeries;

/// Configure the global worker pool used by parameter sweeps; call before
/// the first sweep.
pub fn build_thread_pool(threads: usize) -> Result<(), rayon::ThreadPoolBuildError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
}
