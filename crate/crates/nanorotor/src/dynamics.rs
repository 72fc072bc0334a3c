//! Integration of the rotor equation of motion
//!
//!   α̈ = −Γ α̇ + (N/I) h(t) − (V/I) sin(2α) [1 − h(t)]
//!
//! where h(t) is the square-wave polarization schedule. The forcing is
//! discontinuous at the polarization switches, so the integrator advances
//! each constant-polarization segment with a fixed-step classical
//! Runge-Kutta method and splits exactly at every switch time; no step ever
//! crosses a discontinuity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Coefficients, DriveConfig};

/// Instantaneous rotor state. The orientation α is stored unwrapped
/// (unbounded); wrap only at analysis boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotorState {
    /// Orientation α in radians, unwrapped.
    pub alpha: f64,
    /// Angular velocity α̇ in rad/s.
    pub omega: f64,
    /// Time in seconds.
    pub time: f64,
}

impl RotorState {
    pub fn new(alpha: f64, omega: f64) -> Self {
        RotorState {
            alpha,
            omega,
            time: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.omega.is_finite() && self.time.is_finite()
    }
}

impl Default for RotorState {
    fn default() -> Self {
        RotorState::new(0.0, 0.0)
    }
}

/// Polarization state of the trapping light within one drive segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarization {
    Circular,
    Linear,
}

/// Fixed-step integrator configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSettings {
    /// Runge-Kutta steps per half-period (per polarization segment at duty
    /// 1/2). Floor of 16 enforced as an accuracy guard.
    pub steps_per_half_period: u32,
    /// Drive periods discarded before any analysis window.
    pub transient_periods: u32,
    /// A trajectory sample is recorded every `output_stride` integrator
    /// steps; must divide the step count of every segment.
    pub output_stride: u32,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            steps_per_half_period: 200,
            transient_periods: 2000,
            output_stride: 25,
        }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_half_period < 16 {
            return Err(Error::invalid(
                "integrator.steps_per_half_period",
                "accuracy floor is 16",
            ));
        }
        if self.output_stride == 0 {
            return Err(Error::invalid("integrator.output_stride", "must be >= 1"));
        }
        Ok(())
    }

    /// Step counts for the circular and linear segments of one period. Both
    /// are multiples of `output_stride` so samples align with switches.
    pub(crate) fn segment_steps(&self, duty: f64) -> (u32, u32) {
        let stride = self.output_stride;
        let total = 2 * self.steps_per_half_period;
        let round_to_stride = |x: f64| -> u32 {
            let n = (x / stride as f64).round() as u32;
            n.max(1) * stride
        };
        let circ = round_to_stride(total as f64 * duty);
        let lin = round_to_stride(total as f64 * (1.0 - duty));
        (circ, lin)
    }
}

/// One recorded trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time: f64,
    pub alpha: f64,
    pub omega: f64,
}

/// Simulated trajectory: states at a fixed output stride plus the full
/// parameter echo needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub coefficients: Coefficients,
    pub drive: DriveConfig,
    pub settings: IntegratorSettings,
    pub periods: u64,
    /// Recorded samples per drive period.
    pub samples_per_period: u32,
}

impl Trajectory {
    /// Sample rate of the recorded samples in Hz.
    pub fn sample_rate(&self) -> f64 {
        self.samples_per_period as f64 * self.drive.frequency_hz
    }

    pub fn duration(&self) -> f64 {
        self.periods as f64 * self.drive.period()
    }
}

/// Square-wave polarization schedule h(t): 1 (circular) for
/// t mod 1/f_d ∈ [0, duty/f_d), 0 (linear) otherwise.
pub fn drive_waveform(t: f64, drive: &DriveConfig) -> f64 {
    let phase = (t * drive.frequency_hz).rem_euclid(1.0);
    if phase < drive.duty {
        1.0
    } else {
        0.0
    }
}

/// Acceleration terms entering the smooth segment ODE. `bias` is an extra
/// constant angular acceleration (external torque / I) applied in both
/// polarization states.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SegmentOde {
    pub damping: f64,
    pub drive_accel: f64,
    pub potential_accel: f64,
    pub bias_accel: f64,
    pub polarization: Polarization,
}

impl SegmentOde {
    #[inline]
    fn accel(&self, alpha: f64, omega: f64) -> f64 {
        let forcing = match self.polarization {
            Polarization::Circular => self.drive_accel,
            Polarization::Linear => -self.potential_accel * (2.0 * alpha).sin(),
        };
        -self.damping * omega + forcing + self.bias_accel
    }

    pub(crate) fn from_coefficients(
        coeffs: &Coefficients,
        polarization: Polarization,
        bias_torque: f64,
    ) -> Self {
        SegmentOde {
            damping: coeffs.damping,
            drive_accel: coeffs.torque / coeffs.inertia,
            potential_accel: coeffs.potential / coeffs.inertia,
            bias_accel: bias_torque / coeffs.inertia,
            polarization,
        }
    }

    /// Advance (α, ω) by one classical RK4 step of size h.
    #[inline]
    pub(crate) fn rk4_step(&self, alpha: f64, omega: f64, h: f64) -> (f64, f64) {
        let k1a = omega;
        let k1w = self.accel(alpha, omega);

        let k2a = omega + 0.5 * h * k1w;
        let k2w = self.accel(alpha + 0.5 * h * k1a, omega + 0.5 * h * k1w);

        let k3a = omega + 0.5 * h * k2w;
        let k3w = self.accel(alpha + 0.5 * h * k2a, omega + 0.5 * h * k2w);

        let k4a = omega + h * k3w;
        let k4w = self.accel(alpha + h * k3a, omega + h * k3w);

        (
            alpha + h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a),
            omega + h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w),
        )
    }
}

/// Advance the smooth ODE of a single constant-polarization interval by `dt`
/// using `substeps` fixed RK4 steps.
///
/// The interval must not cross a polarization switch; [`simulate`] owns the
/// schedule and splits segments exactly at every switch, callers of this
/// low-level entry point must do the same.
pub fn step_segment(
    state: &RotorState,
    coeffs: &Coefficients,
    polarization: Polarization,
    dt: f64,
    substeps: u32,
) -> Result<RotorState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", "must be finite and > 0"));
    }
    if substeps == 0 {
        return Err(Error::invalid("substeps", "must be >= 1"));
    }
    let ode = SegmentOde::from_coefficients(coeffs, polarization, 0.0);
    let h = dt / substeps as f64;
    let mut alpha = state.alpha;
    let mut omega = state.omega;
    for _ in 0..substeps {
        (alpha, omega) = ode.rk4_step(alpha, omega, h);
    }
    let next = RotorState {
        alpha,
        omega,
        time: state.time + dt,
    };
    if !next.is_finite() {
        return Err(Error::Diverged { last: *state });
    }
    Ok(next)
}

/// Per-period hook used by the streaming driver. Receives the period index
/// just completed and the state at its end.
pub(crate) trait PeriodObserver {
    /// Called for every recorded intra-period sample.
    fn on_sample(&mut self, _sample: Sample) {}
    /// Called at each period boundary with the end-of-period state.
    fn on_period_end(&mut self, _period: u64, _state: &RotorState) {}
    /// Coefficients override for the next period (parameter ramps). Return
    /// `None` to keep the current ones.
    fn coefficients_for_period(&mut self, _period: u64) -> Option<(Coefficients, DriveConfig)> {
        None
    }
}

pub(crate) struct NullObserver;
impl PeriodObserver for NullObserver {}

/// Streaming fixed-step driver: integrates `n_periods` drive periods,
/// splitting at every polarization switch. Time stamps are derived from
/// integer period indices, not accumulated, so switch times are exact.
pub(crate) fn run_periods<O: PeriodObserver>(
    state: &mut RotorState,
    coeffs: &Coefficients,
    drive: &DriveConfig,
    settings: &IntegratorSettings,
    n_periods: u64,
    bias_torque: f64,
    record: bool,
    observer: &mut O,
) -> Result<()> {
    let mut coeffs = *coeffs;
    let mut drive = *drive;
    // period starts accumulate so parameter ramps (varying f_d) keep a
    // consistent clock; switch times within a period stay exact
    let mut t0 = state.time;

    for period in 0..n_periods {
        if let Some((c, d)) = observer.coefficients_for_period(period) {
            coeffs = c;
            drive = d;
        }
        let period_len = drive.period();
        let (n_circ, n_lin) = settings.segment_steps(drive.duty);
        let duty_time = drive.duty * period_len;

        let segments = [
            (Polarization::Circular, 0.0, duty_time, n_circ),
            (Polarization::Linear, duty_time, period_len, n_lin),
        ];

        for (pol, seg_start, seg_end, steps) in segments {
            let ode = SegmentOde::from_coefficients(&coeffs, pol, bias_torque);
            let h = (seg_end - seg_start) / steps as f64;
            let mut alpha = state.alpha;
            let mut omega = state.omega;
            for i in 0..steps {
                (alpha, omega) = ode.rk4_step(alpha, omega, h);
                if record && (i + 1) % settings.output_stride == 0 {
                    let t = t0 + seg_start + (i + 1) as f64 * h;
                    observer.on_sample(Sample {
                        time: t,
                        alpha,
                        omega,
                    });
                }
            }
            if !(alpha.is_finite() && omega.is_finite()) {
                return Err(Error::Diverged { last: *state });
            }
            state.alpha = alpha;
            state.omega = omega;
            state.time = t0 + seg_end;
        }
        t0 += period_len;
        observer.on_period_end(period, state);
    }
    Ok(())
}

struct RecordingObserver {
    samples: Vec<Sample>,
}

impl PeriodObserver for RecordingObserver {
    fn on_sample(&mut self, sample: Sample) {
        self.samples.push(sample);
    }
}

/// Integrate `n_periods` drive periods from `initial`, recording samples at
/// the output stride. The polarization switch times are hit exactly; states
/// are never interpolated across a discontinuity.
pub fn simulate(
    initial: &RotorState,
    coeffs: &Coefficients,
    drive: &DriveConfig,
    settings: &IntegratorSettings,
    n_periods: u64,
) -> Result<Trajectory> {
    if n_periods == 0 {
        return Err(Error::invalid("n_periods", "must be >= 1"));
    }
    settings.validate()?;
    drive.validate()?;
    coeffs.validate()?;

    let (n_circ, n_lin) = settings.segment_steps(drive.duty);
    let samples_per_period = (n_circ + n_lin) / settings.output_stride;

    let mut observer = RecordingObserver {
        samples: Vec::with_capacity((n_periods as usize + 1) * samples_per_period as usize + 1),
    };
    observer.samples.push(Sample {
        time: initial.time,
        alpha: initial.alpha,
        omega: initial.omega,
    });

    let mut state = *initial;
    run_periods(
        &mut state,
        coeffs,
        drive,
        settings,
        n_periods,
        0.0,
        true,
        &mut observer,
    )?;

    Ok(Trajectory {
        samples: observer.samples,
        coefficients: *coeffs,
        drive: *drive,
        settings: *settings,
        periods: n_periods,
        samples_per_period,
    })
}

/// Mean rotation frequency f_r = ⟨α̇⟩/2π over the trailing window of
/// `window_periods` drive periods, computed from the net orientation advance.
pub fn mean_rotation_frequency(traj: &Trajectory, window_periods: u64) -> Result<f64> {
    if window_periods == 0 || window_periods > traj.periods {
        return Err(Error::WindowTooLong {
            requested: window_periods,
            available: traj.periods,
        });
    }
    let n = traj.samples.len();
    let per = traj.samples_per_period as usize;
    let last = &traj.samples[n - 1];
    let first = &traj.samples[n - 1 - window_periods as usize * per];
    let dt = last.time - first.time;
    Ok((last.alpha - first.alpha) / (2.0 * std::f64::consts::PI * dt))
}

/// Poincaré samples (α mod π, α̇) taken every `m` drive periods. A p:q lock
/// appears as convergence of the samples (strided appropriately) to a fixed
/// point; threshold rotation fills a closed curve instead.
pub fn stroboscopic_map(traj: &Trajectory, m: u64) -> Vec<(f64, f64)> {
    if m == 0 {
        return Vec::new();
    }
    let per = traj.samples_per_period as usize;
    let stride = per * m as usize;
    traj.samples
        .iter()
        .step_by(stride)
        .map(|s| (s.alpha.rem_euclid(std::f64::consts::PI), s.omega))
        .collect()
}
