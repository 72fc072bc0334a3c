//! Sampled detector signal and the scattered-light detector model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

/// Uniformly sampled real-valued detector signal (arbitrary units). Only
/// frequencies and phases carry physical meaning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalTrace {
    pub samples: Vec<f64>,
    /// Samples per second.
    pub sample_rate: f64,
    /// Absolute time of the first sample; filters shift this by their group
    /// delay so tone phases stay referenced to the original clock.
    pub start_time: f64,
    /// Nominal carrier frequency, when known (after mix-down: the
    /// difference tone).
    pub carrier_hint: Option<f64>,
}

impl SignalTrace {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Self {
        SignalTrace {
            samples,
            sample_rate,
            start_time: 0.0,
            carrier_hint: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::invalid("trace.sample_rate", "must be finite and > 0"));
        }
        if let Some(c) = self.carrier_hint {
            if self.sample_rate <= 2.0 * c {
                return Err(Error::invalid(
                    "trace.carrier_hint",
                    "sample rate must exceed twice the carrier (Nyquist)",
                ));
            }
        }
        if self.samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("trace.samples", "must be finite"));
        }
        Ok(())
    }

    /// Time of sample `i`.
    pub fn time_at(&self, i: usize) -> f64 {
        self.start_time + i as f64 / self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Mean square of the samples (total power).
    pub fn mean_square(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }
}

/// Detector geometry and gain. The scattering signal is maximal when the rod
/// is orthogonal to the detector and has period π in the orientation (the
/// rod is head-tail symmetric), so a rotation at f_r produces spectral
/// content at 2·f_r.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorModel {
    /// Detector orientation α_det in radians.
    pub angle_rad: f64,
    /// Signal amplitude A (arbitrary units).
    pub amplitude: f64,
    /// Constant offset s₀.
    pub offset: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            angle_rad: 0.0,
            amplitude: 1.0,
            offset: 0.0,
        }
    }
}

/// Measurement noise: multiplicative laser-power fluctuations (relative RMS,
/// white by default, optionally 1/f-shaped) and additive detector noise.
/// Generation is seeded; the seed is echoed into output headers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// Relative RMS of the multiplicative power noise (experiment: 0.3%).
    pub power_rel_rms: f64,
    /// Approximate 1/f shaping of the power noise instead of white.
    pub power_pink: bool,
    /// RMS of additive white detector noise, same units as the signal.
    pub additive_rms: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            power_rel_rms: 0.003,
            power_pink: false,
            additive_rms: 0.0,
            seed: 1,
        }
    }
}

impl NoiseSpec {
    pub fn quiet() -> Self {
        NoiseSpec {
            power_rel_rms: 0.0,
            power_pink: false,
            additive_rms: 0.0,
            seed: 1,
        }
    }

    pub fn is_quiet(&self) -> bool {
        self.power_rel_rms == 0.0 && self.additive_rms == 0.0
    }
}

/// Paul Kellet's economy 3-pole pinking filter; approximate 1/f over the
/// audio decades, unit-variance input preserved approximately.
struct PinkFilter {
    b0: f64,
    b1: f64,
    b2: f64,
}

impl PinkFilter {
    fn new() -> Self {
        PinkFilter {
            b0: 0.0,
            b1: 0.0,
            b2: 0.0,
        }
    }

    fn step(&mut self, white: f64) -> f64 {
        self.b0 = 0.99765 * self.b0 + white * 0.0990460;
        self.b1 = 0.96300 * self.b1 + white * 0.2965164;
        self.b2 = 0.57000 * self.b2 + white * 1.0526913;
        (self.b0 + self.b1 + self.b2 + white * 0.1848) / 3.2
    }
}

/// Synthesize the scattered-light detector signal from a trajectory:
///
///   s(t) = s₀ + A·[1 + ε_P(t)]·cos²(α(t) − α_det) + ε_add(t)
///
/// The trajectory must be recorded on a uniform sample grid (duty 1/2 with
/// the default stride satisfies this). The resulting trace keeps the
/// trajectory's sample rate and carries no carrier hint; callers that know
/// the locked rotation rate may set one.
pub fn synthesize_detector(
    traj: &Trajectory,
    detector: &DetectorModel,
    noise: &NoiseSpec,
) -> Result<SignalTrace> {
    if traj.samples.len() < 2 {
        return Err(Error::invalid("trajectory", "needs at least 2 samples"));
    }
    let dt0 = traj.samples[1].time - traj.samples[0].time;
    for pair in traj.samples.windows(2) {
        let dt = pair[1].time - pair[0].time;
        if ((dt - dt0) / dt0).abs() > 1e-6 {
            return Err(Error::invalid(
                "trajectory",
                "detector synthesis requires a uniform sample grid",
            ));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::invalid("noise", e.to_string()))?;
    let mut pink = PinkFilter::new();

    let samples = traj
        .samples
        .iter()
        .map(|s| {
            let c = (s.alpha - detector.angle_rad).cos();
            let mut value = detector.offset + detector.amplitude * c * c;
            if noise.power_rel_rms > 0.0 {
                let white: f64 = normal.sample(&mut rng);
                let eps = if noise.power_pink {
                    pink.step(white)
                } else {
                    white
                };
                value += detector.amplitude * c * c * noise.power_rel_rms * eps;
            }
            if noise.additive_rms > 0.0 {
                value += noise.additive_rms * normal.sample(&mut rng);
            }
            value
        })
        .collect();

    Ok(SignalTrace {
        samples,
        sample_rate: 1.0 / dt0,
        start_time: traj.samples[0].time,
        carrier_hint: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, IntegratorSettings, RotorState};
    use crate::params::{Coefficients, DriveConfig};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn free_rotation_trajectory(f_rot: f64, periods: u64) -> Trajectory {
        let c = Coefficients {
            damping: 0.0,
            torque: 0.0,
            potential: 0.0,
            inertia: 1e-30,
        };
        let drive = DriveConfig {
            frequency_hz: 1.0e6,
            duty: 0.5,
        };
        let settings = IntegratorSettings {
            steps_per_half_period: 32,
            transient_periods: 0,
            output_stride: 4,
        };
        simulate(
            &RotorState::new(0.0, 2.0 * PI * f_rot),
            &c,
            &drive,
            &settings,
            periods,
        )
        .unwrap()
    }

    #[test]
    fn uniform_rotation_gives_tone_at_twice_f_r() {
        // cos^2 halves the period: rotation at f_r appears at 2 f_r
        let traj = free_rotation_trajectory(0.25e6, 64);
        let trace =
            synthesize_detector(&traj, &DetectorModel::default(), &NoiseSpec::quiet()).unwrap();
        // s(t) = 0.5 + 0.5 cos(2*2pi*f_r t): check against the closed form
        for (i, &v) in trace.samples.iter().enumerate() {
            let t = trace.time_at(i);
            let expected = 0.5 + 0.5 * (2.0 * 2.0 * PI * 0.25e6 * t).cos();
            assert_relative_eq!(v, expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn static_rod_gives_dc() {
        let traj = free_rotation_trajectory(0.0, 16);
        let trace =
            synthesize_detector(&traj, &DetectorModel::default(), &NoiseSpec::quiet()).unwrap();
        for &v in &trace.samples {
            assert_relative_eq!(v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn detector_angle_shifts_phase() {
        let traj = free_rotation_trajectory(0.25e6, 8);
        let det = DetectorModel {
            angle_rad: 0.3,
            ..DetectorModel::default()
        };
        let trace = synthesize_detector(&traj, &det, &NoiseSpec::quiet()).unwrap();
        for (i, &v) in trace.samples.iter().enumerate() {
            let t = trace.time_at(i);
            let expected = 0.5 + 0.5 * (2.0 * (2.0 * PI * 0.25e6 * t - 0.3)).cos();
            assert_relative_eq!(v, expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn noise_is_seeded_and_reproducible() {
        let traj = free_rotation_trajectory(0.25e6, 8);
        let noise = NoiseSpec {
            power_rel_rms: 0.003,
            additive_rms: 0.01,
            ..NoiseSpec::default()
        };
        let a = synthesize_detector(&traj, &DetectorModel::default(), &noise).unwrap();
        let b = synthesize_detector(&traj, &DetectorModel::default(), &noise).unwrap();
        assert_eq!(a.samples, b.samples);
        let other = NoiseSpec { seed: 2, ..noise };
        let c = synthesize_detector(&traj, &DetectorModel::default(), &other).unwrap();
        assert_ne!(a.samples, c.samples);
    }
}
