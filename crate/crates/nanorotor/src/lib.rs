//! Simulation and analysis of an optically driven nanomechanical rotor.
//!
//! A silicon nanorod levitated in an optical standing wave is driven by
//! periodically switching the trap polarization between circular (which
//! exerts a radiation torque) and linear (which exerts an aligning
//! potential). This crate integrates the resulting piecewise-smooth
//! equation of motion, classifies its limit cycles (threshold rotation vs.
//! frequency locking), maps the locking region in the reduced parameter
//! space, synthesizes the scattered-light detection signal with its full
//! measurement chain (mix-down, sampling, PSD, phase noise, lock-in
//! demodulation), and inverts the locked phase lag into pressure and torque
//! readings.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod limit_cycle;
pub mod params;
pub mod sensing;
pub mod signal;

pub use config::RunConfig;
pub use dynamics::{
    drive_waveform, mean_rotation_frequency, simulate, step_segment, stroboscopic_map,
    IntegratorSettings, Polarization, RotorState, Sample, Trajectory,
};
pub use error::{Error, Result};
pub use limit_cycle::{
    classify, classify_dimensionless, default_ensemble, map_region, phase_lag_analytic,
    phase_lag_analytic_dimensionless, phase_lag_measured, sweep_path, threshold_frequency,
    ClassifySettings, CycleKind, GridSpec, LimitCycleReport, ParameterPath, PathSpace, RegionMap,
    SweepSettings,
};
pub use params::{
    damping_rate, damping_rate_per_pascal, optical_potential, optical_torque, Coefficients,
    Dimensionless, DriveConfig, GasEnvironment, GeometricFactors, LaserField, Nanorod,
    SystemParams,
};
pub use sensing::{
    calibrate_pressure, external_torque_dynamics, measure_phase_full_chain,
    phase_jitter_from_power_noise, pressure_from_phase, pressure_resolution, torque_sensitivity,
    ChainMeasurement, ChainSettings, PressureCalibration, TorqueSensitivityReport,
};
pub use signal::{
    fit_lorentzian, lockin_demodulate, mix_down, phase_noise, psd, synthesize_detector,
    DetectorModel, LockInSeries, LorentzianFit, MixDown, NoiseSpec, PhaseNoiseCurve, SignalTrace,
    Spectrum, WindowKind,
};
