//! The locked rotor as an instrument: inverting the 1:2 phase lag into a
//! pressure reading, calibrating the linear phase-pressure response,
//! responding to external torques, and estimating the torque sensitivity.
//!
//! Everything here builds on the averaged phase balance of locked rotation,
//!
//!   cos φ = (π/2V)(N − 2π f_d I Γ),
//!
//! which is algebraically invertible for Γ (hence pressure, Γ being linear
//! in it) and differentiable for the sensitivity estimates.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::dynamics::RotorState;
use crate::error::{Error, Result};
use crate::limit_cycle::{
    classify_dimensionless_biased, phase_lag_analytic, ClassifySettings, LimitCycleReport,
};
use crate::params::{damping_rate_per_pascal, Coefficients, DriveConfig, SystemParams};
use crate::signal::{
    lockin_demodulate, mix_down, synthesize_detector, DetectorModel, LockInSeries, NoiseSpec,
};
use crate::{simulate, IntegratorSettings};

/// Invert a measured 1:2 phase lag into a gas pressure.
///
/// Solves the phase balance for Γ = [N − (2V/π)·cos φ]/(2π f_d I) and then
/// divides by the per-pascal damping slope. Exact algebraic inversion, no
/// iteration. The gas entry of `system` serves only as the temperature and
/// particle-mass template; its pressure is ignored.
pub fn pressure_from_phase(phi: f64, system: &SystemParams) -> Result<f64> {
    if !(phi > 0.0 && phi < PI) {
        return Err(Error::invalid("phi", "phase must lie strictly inside (0, pi)"));
    }
    system.validate()?;
    let coeffs = system.coefficients();
    let f_d = system.drive.frequency_hz;
    let damping = (coeffs.torque - 2.0 * coeffs.potential / PI * phi.cos())
        / (2.0 * PI * f_d * coeffs.inertia);
    let slope = damping_rate_per_pascal(&system.rod, &system.gas);
    let pressure = damping / slope;
    if pressure < 0.0 {
        return Err(Error::OutOfModel { pressure });
    }
    Ok(pressure)
}

/// Linear phase-pressure calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureCalibration {
    pub slope_rad_per_pa: f64,
    pub intercept_rad: f64,
    /// Fit residual per point, in radians.
    pub residuals: Vec<f64>,
    pub max_abs_residual: f64,
    /// Pressure range covered by the calibration points, Pa.
    pub pressure_range: (f64, f64),
    /// Raised when the maximum residual exceeds 1% of the phase span: the
    /// arccos response is only locally linear, and this range stretches it.
    pub nonlinearity_flagged: bool,
}

/// Least-squares linear fit of phase versus pressure.
///
/// Points must be locked measurements, i.e. phases strictly inside (0, π);
/// anything else is rejected. The underlying response is arccos-shaped, so
/// the linear model is only valid over a modest range; the residual check
/// flags ranges where it breaks down.
pub fn calibrate_pressure(points: &[(f64, f64)]) -> Result<PressureCalibration> {
    if points.len() < 3 {
        return Err(Error::invalid("points", "need at least 3 calibration points"));
    }
    for (i, &(p, phi)) in points.iter().enumerate() {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::invalid(
                format!("points[{i}].pressure"),
                "must be finite and >= 0",
            ));
        }
        if !(phi > 0.0 && phi < PI) {
            return Err(Error::invalid(
                format!("points[{i}].phase"),
                "unlocked point: phase must lie strictly inside (0, pi)",
            ));
        }
    }

    let n = points.len() as f64;
    let p_mean = points.iter().map(|(p, _)| p).sum::<f64>() / n;
    let phi_mean = points.iter().map(|(_, f)| f).sum::<f64>() / n;
    let mut spp = 0.0;
    let mut spf = 0.0;
    for &(p, phi) in points {
        spp += (p - p_mean) * (p - p_mean);
        spf += (p - p_mean) * (phi - phi_mean);
    }
    if spp == 0.0 {
        return Err(Error::invalid(
            "points",
            "all pressures identical; slope is undefined",
        ));
    }
    let slope = spf / spp;
    let intercept = phi_mean - slope * p_mean;

    let residuals: Vec<f64> = points
        .iter()
        .map(|&(p, phi)| phi - (intercept + slope * p))
        .collect();
    let max_abs_residual = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let phi_min = points.iter().map(|&(_, f)| f).fold(f64::INFINITY, f64::min);
    let phi_max = points.iter().map(|&(_, f)| f).fold(f64::NEG_INFINITY, f64::max);
    let span = phi_max - phi_min;
    let p_min = points.iter().map(|&(p, _)| p).fold(f64::INFINITY, f64::min);
    let p_max = points.iter().map(|&(p, _)| p).fold(f64::NEG_INFINITY, f64::max);

    Ok(PressureCalibration {
        slope_rad_per_pa: slope,
        intercept_rad: intercept,
        max_abs_residual,
        nonlinearity_flagged: max_abs_residual > 0.01 * span,
        residuals,
        pressure_range: (p_min, p_max),
    })
}

/// Relative pressure resolution δp/p = δφ_rms / (|slope| · p) at the
/// operating pressure.
pub fn pressure_resolution(
    calibration: &PressureCalibration,
    delta_phi_rms: f64,
    operating_pressure: f64,
) -> f64 {
    delta_phi_rms / (calibration.slope_rad_per_pa.abs() * operating_pressure)
}

/// Quasi-static phase jitter produced by relative laser-power fluctuations.
///
/// Both N and V scale with P, so fluctuating the power moves the locked
/// phase: from cos φ = (π/2V)(N − B) with B = 2π f_d I Γ,
/// δφ = πB/(2V·sin φ) · δP/P. Returns `None` outside the lockable region or
/// at its boundary (sin φ = 0), where the propagation diverges.
pub fn phase_jitter_from_power_noise(
    coeffs: &Coefficients,
    drive: &DriveConfig,
    rel_power_rms: f64,
) -> Option<f64> {
    let phi = phase_lag_analytic(coeffs, drive)?;
    let s = phi.sin();
    if s <= 0.0 {
        return None;
    }
    let b = 2.0 * PI * drive.frequency_hz * coeffs.inertia * coeffs.damping;
    Some(PI * b / (2.0 * coeffs.potential * s) * rel_power_rms)
}

/// Simulate the locked dynamics with a constant external torque added to the
/// equation of motion at all times (both polarization states) and classify
/// the outcome. Losing the lock is reported in the returned kind, not as an
/// error.
///
/// In the period-averaged balance a full-period torque N_ext acts where the
/// duty-cycled drive torque contributes N·duty, so the phase responds as if
/// N → N + N_ext/duty (factor 2 at the standard duty 1/2).
pub fn external_torque_dynamics(
    coeffs: &Coefficients,
    drive: &DriveConfig,
    external_torque: f64,
    initial: &RotorState,
    settings: &ClassifySettings,
) -> Result<LimitCycleReport> {
    let point = coeffs.dimensionless(drive);
    let f2 = drive.frequency_hz * drive.frequency_hz;
    let bias = external_torque / (coeffs.inertia * f2);
    let scaled = (initial.alpha, initial.omega / drive.frequency_hz);
    let mut report = classify_dimensionless_biased(&point, drive.duty, scaled, settings, bias)?;
    report.f_r *= drive.frequency_hz;
    Ok(report)
}

/// Torque sensitivity at a locked operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorqueSensitivityReport {
    /// Operating phase lag φ from the analytic balance.
    pub phase_rad: f64,
    /// Phase-noise-equivalent fluctuation δφ used for the estimate.
    pub delta_phi_rad: f64,
    /// Minimum detectable change of the drive-torque coefficient,
    /// δN = (2V/π)·sin φ·δφ (inverse slope of the phase balance).
    pub min_detectable_torque_nm: f64,
    /// Equivalent full-period external torque, δN scaled by the duty factor
    /// of the averaged balance.
    pub external_torque_equivalent_nm: f64,
    /// Readout bandwidth of the phase measurement, Hz.
    pub bandwidth_hz: f64,
    /// Operating coefficients, echoed for provenance.
    pub coefficients: Coefficients,
    pub drive: DriveConfig,
}

/// Estimate the minimum detectable torque from a phase resolution δφ at the
/// configured operating point. Errors when the point is not lockable or
/// sits at the region boundary (φ = 0 or π), where the sensitivity
/// diverges.
pub fn torque_sensitivity(
    coeffs: &Coefficients,
    drive: &DriveConfig,
    delta_phi: f64,
    bandwidth_hz: f64,
) -> Result<TorqueSensitivityReport> {
    let Some(phi) = phase_lag_analytic(coeffs, drive) else {
        return Err(Error::NotLockable {
            message: "phase balance has no real solution at this operating point".into(),
        });
    };
    if phi <= 0.0 || phi >= PI {
        return Err(Error::NotLockable {
            message: format!("operating phase {phi:.3} rad sits on the lock boundary"),
        });
    }
    let dn = 2.0 * coeffs.potential / PI * phi.sin() * delta_phi;
    Ok(TorqueSensitivityReport {
        phase_rad: phi,
        delta_phi_rad: delta_phi,
        min_detectable_torque_nm: dn,
        external_torque_equivalent_nm: dn * drive.duty,
        bandwidth_hz,
        coefficients: *coeffs,
        drive: *drive,
    })
}

/// Settings of the full measurement chain used by
/// [`measure_phase_full_chain`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSettings {
    /// Drive periods recorded after the transient.
    pub periods: u64,
    /// Transient periods discarded before recording.
    pub transient_periods: u64,
    pub steps_per_half_period: u32,
    /// Detector samples per drive period.
    pub samples_per_period: u32,
    /// Difference frequency the rotation tone is mixed to, Hz.
    pub mix_to_hz: f64,
    /// Recording rate after mix-down, S/s.
    pub output_rate: f64,
    /// Lock-in time constant, s.
    pub time_constant: f64,
    pub detector: DetectorModel,
    pub noise: NoiseSpec,
}

impl Default for ChainSettings {
    fn default() -> Self {
        ChainSettings {
            periods: 150_000,
            transient_periods: 30_000,
            steps_per_half_period: 100,
            samples_per_period: 8,
            mix_to_hz: 190.0,
            output_rate: 2000.0,
            time_constant: 2.0 / 190.0,
            detector: DetectorModel::default(),
            noise: NoiseSpec::quiet(),
        }
    }
}

/// Result of driving the full measurement chain on a simulated rotor.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainMeasurement {
    /// Rotor phase lag φ recovered from the lock-in reading.
    pub phase_rad: f64,
    /// RMS fluctuation of the recovered phase over the settled tail.
    pub phase_rms: f64,
    /// Local-oscillator frequency used.
    pub f_lo: f64,
    pub lockin: LockInSeries,
}

/// Simulate the rotor, synthesize the scattered-light signal, mix it down,
/// sample it and demodulate the phase with the lock-in: the full sensing
/// chain from physics to reading.
///
/// The rotor must reach 1:2 lock within the transient. The lock-in phase θ
/// of the mixed-down tone relates to the rotor phase lag by
/// φ = π − 2·α_det − θ: the detected tone sits at 2α(t) − 2α_det and the
/// locked rotation carries α(t) = α₀ + π f_d t with φ = π − 2α₀.
pub fn measure_phase_full_chain(
    system: &SystemParams,
    initial: &RotorState,
    chain: &ChainSettings,
) -> Result<ChainMeasurement> {
    system.validate()?;
    let coeffs = system.coefficients();
    let drive = system.drive;
    let f_d = drive.frequency_hz;

    let stride_settings = IntegratorSettings {
        steps_per_half_period: chain.steps_per_half_period,
        transient_periods: 0,
        output_stride: (2 * chain.steps_per_half_period) / chain.samples_per_period,
    };
    stride_settings.validate()?;

    // discard the capture transient, then restart the clock at a switch
    let mut state = *initial;
    crate::dynamics::run_periods(
        &mut state,
        &coeffs,
        &drive,
        &stride_settings,
        chain.transient_periods,
        0.0,
        false,
        &mut crate::dynamics::NullObserver,
    )?;
    state.time = 0.0;

    let traj = simulate(&state, &coeffs, &drive, &stride_settings, chain.periods)?;

    let mut trace = synthesize_detector(&traj, &chain.detector, &chain.noise)?;
    // 1:2-locked rotation puts the detected tone exactly at f_d
    trace.carrier_hint = Some(f_d);

    let f_lo = f_d - chain.mix_to_hz;
    let mixed = mix_down(&trace, f_lo, chain.output_rate)?;
    let lockin = lockin_demodulate(&mixed.trace, chain.mix_to_hz, chain.time_constant)?;

    let theta = lockin.settled_phase(0.5);
    let phase = {
        let raw = PI - 2.0 * chain.detector.angle_rad - theta;
        let r = raw.rem_euclid(2.0 * PI);
        if r > PI {
            2.0 * PI - r
        } else {
            r
        }
    };
    Ok(ChainMeasurement {
        phase_rad: phase,
        phase_rms: lockin.phase_rms(0.5),
        f_lo,
        lockin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit_cycle::phase_lag_analytic_dimensionless;
    use crate::params::Dimensionless;
    use approx::assert_relative_eq;

    /// A lockable SI operating point; the default system is tuned to the
    /// coincidence line.
    fn lockable_system() -> SystemParams {
        SystemParams::default()
    }

    #[test]
    fn inversion_round_trip_is_algebraically_exact() {
        let sys = lockable_system();
        for pressure in [2000.0, 4000.0, 5600.0, 7000.0] {
            let at_p = sys.with_pressure(pressure);
            let coeffs = at_p.coefficients();
            let Some(phi) = phase_lag_analytic(&coeffs, &at_p.drive) else {
                panic!("expected lockable point at {pressure} Pa");
            };
            let recovered = pressure_from_phase(phi, &sys).unwrap();
            assert_relative_eq!(recovered, pressure, max_relative = 1e-12);
        }
    }

    #[test]
    fn phase_of_pi_over_two_matches_balance_point() {
        // phi = pi/2 <=> N = 2 pi f_d I Gamma exactly
        let sys = lockable_system();
        let p = pressure_from_phase(PI / 2.0, &sys).unwrap();
        let coeffs = sys.with_pressure(p).coefficients();
        assert_relative_eq!(
            coeffs.torque,
            2.0 * PI * sys.drive.frequency_hz * coeffs.inertia * coeffs.damping,
            max_relative = 1e-12
        );
    }

    #[test]
    fn negative_pressure_is_out_of_model() {
        let sys = lockable_system();
        // phi near 0 makes the bracket exceed N for this configuration
        let err = pressure_from_phase(1e-6, &sys).unwrap_err();
        assert!(matches!(err, Error::OutOfModel { .. }));
    }

    #[test]
    fn calibration_slope_matches_analytic_derivative() {
        // differentiate the phase balance: cos phi = (pi/2V)(N - 2 pi f_d I Gamma)
        // => dphi/dp = (dGamma/dp)·(pi^2 f_d I)/(V sin phi)
        let sys = lockable_system();
        let p0 = 5600.0;
        let points: Vec<(f64, f64)> = (0..7)
            .map(|i| {
                let p = p0 * (0.97 + 0.01 * i as f64);
                let c = sys.with_pressure(p).coefficients();
                (p, phase_lag_analytic(&c, &sys.drive).unwrap())
            })
            .collect();
        let cal = calibrate_pressure(&points).unwrap();
        let mid = sys.with_pressure(p0).coefficients();
        let phi_mid = phase_lag_analytic(&mid, &sys.drive).unwrap();
        let slope_analytic = damping_rate_per_pascal(&sys.rod, &sys.gas)
            * (PI * PI * sys.drive.frequency_hz * mid.inertia)
            / (mid.potential * phi_mid.sin());
        assert_relative_eq!(cal.slope_rad_per_pa, slope_analytic, max_relative = 0.02);
        assert!(!cal.nonlinearity_flagged);
    }

    #[test]
    fn wide_range_trips_nonlinearity_flag() {
        let sys = lockable_system();
        // span almost the full arccos branch
        let mut points = Vec::new();
        let mut p = 100.0;
        while p < 40_000.0 {
            let c = sys.with_pressure(p).coefficients();
            if let Some(phi) = phase_lag_analytic(&c, &sys.drive) {
                if phi > 0.05 && phi < PI - 0.05 {
                    points.push((p, phi));
                }
            }
            p *= 1.35;
        }
        assert!(points.len() >= 5, "need enough branch coverage");
        let cal = calibrate_pressure(&points).unwrap();
        assert!(cal.nonlinearity_flagged);
    }

    #[test]
    fn degenerate_pressures_flag_large_residual() {
        let pts = [(100.0, 1.0), (100.0, 1.4), (200.0, 1.2)];
        let cal = calibrate_pressure(&pts).unwrap();
        assert!(cal.nonlinearity_flagged);
        let identical = [(100.0, 1.0), (100.0, 1.2), (100.0, 1.4)];
        assert!(calibrate_pressure(&identical).is_err());
    }

    #[test]
    fn unlocked_points_rejected() {
        let pts = [(100.0, 1.0), (200.0, 0.0), (300.0, 1.2)];
        assert!(calibrate_pressure(&pts).is_err());
    }

    #[test]
    fn resolution_scales_linearly_with_phase_noise() {
        let pts = [(100.0, 1.0), (200.0, 1.1), (300.0, 1.2)];
        let cal = calibrate_pressure(&pts).unwrap();
        let r1 = pressure_resolution(&cal, 1e-3, 200.0);
        let r2 = pressure_resolution(&cal, 0.5e-3, 200.0);
        assert_relative_eq!(r2, 0.5 * r1, max_relative = 1e-12);
        assert_eq!(pressure_resolution(&cal, 0.0, 200.0), 0.0);
    }

    #[test]
    fn torque_sensitivity_closed_form() {
        let sys = lockable_system();
        let coeffs = sys.coefficients();
        let dphi = 1e-5;
        let report = torque_sensitivity(&coeffs, &sys.drive, dphi, 16.0).unwrap();
        let phi = phase_lag_analytic(&coeffs, &sys.drive).unwrap();
        assert_relative_eq!(
            report.min_detectable_torque_nm,
            2.0 * coeffs.potential / PI * phi.sin() * dphi,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            report.external_torque_equivalent_nm,
            0.5 * report.min_detectable_torque_nm,
            max_relative = 1e-14
        );
        // zero phase noise, zero torque floor
        let zero = torque_sensitivity(&coeffs, &sys.drive, 0.0, 16.0).unwrap();
        assert_eq!(zero.min_detectable_torque_nm, 0.0);
    }

    #[test]
    fn sensitivity_requires_lockable_point() {
        let sys = lockable_system().with_pressure(1e6); // far outside
        let coeffs = sys.coefficients();
        assert!(torque_sensitivity(&coeffs, &sys.drive, 1e-5, 16.0).is_err());
    }

    #[test]
    fn quasistatic_power_noise_propagation_matches_finite_difference() {
        let sys = lockable_system();
        let coeffs = sys.coefficients();
        let rel = 0.003;
        let predicted = phase_jitter_from_power_noise(&coeffs, &sys.drive, rel).unwrap();

        // finite difference: scale P by (1 ± rel) and evaluate the phase
        let scale = |s: f64| {
            let mut sys2 = sys;
            sys2.laser.power_w *= s;
            phase_lag_analytic(&sys2.coefficients(), &sys.drive).unwrap()
        };
        let fd = (scale(1.0 + rel) - scale(1.0 - rel)) / 2.0;
        assert_relative_eq!(predicted, fd.abs(), max_relative = 1e-4);
    }

    #[test]
    fn dimensionless_lock_region_shape() {
        // x = (pi rho / 2)(1 - 2 pi gamma / n): lockable iff gamma/n below
        // (1 + 2/(pi rho))/(2 pi)
        let rho: f64 = 0.186;
        let n = 0.1;
        let boundary = n * (1.0 + 2.0 / (PI * rho)) / (2.0 * PI);
        let inside = Dimensionless {
            gamma: boundary * 0.95,
            torque: n,
            potential: n / rho,
        };
        let outside = Dimensionless {
            gamma: boundary * 1.05,
            torque: n,
            potential: n / rho,
        };
        assert!(phase_lag_analytic_dimensionless(&inside).is_some());
        assert!(phase_lag_analytic_dimensionless(&outside).is_none());
    }
}
