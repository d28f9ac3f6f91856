//! Simulation and calibration of phase-controlled stimulated Raman rotations
//! of a hole orbital qubit.
//!
//! The crate integrates few-level rotating-frame Hamiltonians under a
//! Lindblad master equation, sweeps them over the experimental knobs (pulse
//! areas, detunings, delays and phases), fits the resulting signals and
//! locates the pulse parameters that realize a target qubit rotation.

pub mod algebra;
pub mod analysis;
pub mod drive;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod optimizer;
pub mod system;
pub mod units;

pub use algebra::{commutator, lindblad_apply, validate_density, ComplexMatrix, DensityMatrix, DensityReport};
pub use drive::{envelope, perturb, NoiseSpec, PulseRole, PulseSequence, PulseSpec, RamanPulse};
pub use engine::{evolve, final_population, simulate, IntegratorConfig, SimDiagnostics, SimResult};
pub use error::{Error, Result};
pub use system::{DipoleSet, Dissipation, DissipatorSpec, EffectiveTwoLevel, EnergySpec, LevelKind, SystemModel};
pub use analysis::{fft_spectrum, fit, fit_auto, fringe_amplitude, harmonic_fit, FitModel, FitResult, FringeFit, HarmonicFit, Spectrum};
pub use experiments::{
    coherence_decay_scan, delay_scan, detuning_area_map, high_orbital_map, noise_monte_carlo, phase_area_map, rabi_sweep,
    ramsey_scan, readout_signal, t1_probe, Axis, ExperimentConfig, InnerExperiment, SweepTable,
};
pub use optimizer::{
    bloch_azimuth, calibrate_rotation, find_pi_condition, synthesize_rotation, verify_rotation, CalibrationTable, RotationCheck,
};
