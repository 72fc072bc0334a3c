//! Dual-phase (homodyne) lock-in demodulation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SignalTrace;

/// Demodulated magnitude/phase series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockInSeries {
    pub time: Vec<f64>,
    /// RMS magnitude (A/√2 for an input tone of amplitude A).
    pub magnitude: Vec<f64>,
    /// Four-quadrant phase in radians, wrapped to (−π, π].
    pub phase: Vec<f64>,
    pub reference_hz: f64,
    pub time_constant: f64,
    /// Readout bandwidth 1/(2π·time_constant).
    pub bandwidth_hz: f64,
    pub output_rate: f64,
}

impl LockInSeries {
    /// Mean phase over the trailing `fraction` of the series (settled part).
    pub fn settled_phase(&self, fraction: f64) -> f64 {
        let n = self.phase.len();
        let start = ((1.0 - fraction) * n as f64) as usize;
        let tail = &self.phase[start.min(n.saturating_sub(1))..];
        // circular mean, robust against wrapping
        let (s, c) = tail
            .iter()
            .fold((0.0, 0.0), |(s, c), &p| (s + p.sin(), c + p.cos()));
        s.atan2(c)
    }

    /// RMS fluctuation of the phase about its circular mean over the
    /// trailing `fraction` of the series.
    pub fn phase_rms(&self, fraction: f64) -> f64 {
        let mean = self.settled_phase(fraction);
        let n = self.phase.len();
        let start = ((1.0 - fraction) * n as f64) as usize;
        let tail = &self.phase[start.min(n.saturating_sub(1))..];
        let var = tail
            .iter()
            .map(|&p| {
                let d = (p - mean + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)
                    - std::f64::consts::PI;
                d * d
            })
            .sum::<f64>()
            / tail.len() as f64;
        var.sqrt()
    }
}

/// Dual-phase demodulation at `reference_hz`: multiply by quadrature
/// references (phase defined against absolute trace time), low-pass each
/// quadrature with a single-pole filter of the given time constant, then
/// decimate to roughly 10 output samples per time constant.
///
/// For an input A·cos(2π f_ref t + φ₀) the settled output is magnitude
/// A/√2 and phase φ₀; a phase step settles within ~5 time constants
/// (first-order response).
pub fn lockin_demodulate(
    trace: &SignalTrace,
    reference_hz: f64,
    time_constant: f64,
) -> Result<LockInSeries> {
    trace.validate()?;
    if !(reference_hz.is_finite() && reference_hz > 0.0) {
        return Err(Error::invalid("reference_hz", "must be finite and > 0"));
    }
    if reference_hz >= 0.5 * trace.sample_rate {
        return Err(Error::invalid(
            "reference_hz",
            "reference must lie below the trace Nyquist frequency",
        ));
    }
    if !(time_constant.is_finite() && time_constant >= 2.0 / reference_hz) {
        return Err(Error::invalid(
            "time_constant",
            "must be at least 2/reference for usable ripple rejection",
        ));
    }

    let dt = 1.0 / trace.sample_rate;
    let alpha = 1.0 - (-dt / time_constant).exp();
    let decim = ((trace.sample_rate * time_constant / 10.0).round() as usize).max(1);

    let mut x = 0.0;
    let mut y = 0.0;
    let n_out = trace.samples.len() / decim;
    let mut out = LockInSeries {
        time: Vec::with_capacity(n_out),
        magnitude: Vec::with_capacity(n_out),
        phase: Vec::with_capacity(n_out),
        reference_hz,
        time_constant,
        bandwidth_hz: 1.0 / (2.0 * std::f64::consts::PI * time_constant),
        output_rate: trace.sample_rate / decim as f64,
    };

    for (i, &s) in trace.samples.iter().enumerate() {
        let t = trace.time_at(i);
        let w = 2.0 * std::f64::consts::PI * reference_hz * t;
        let xi = 2.0 * s * w.cos();
        let yi = -2.0 * s * w.sin();
        x += alpha * (xi - x);
        y += alpha * (yi - y);
        if (i + 1) % decim == 0 {
            out.time.push(t);
            out.magnitude.push((x * x + y * y).sqrt() / std::f64::consts::SQRT_2);
            out.phase.push(y.atan2(x));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn tone_trace(n: usize, rate: f64, f: f64, amp: f64, phase: f64) -> SignalTrace {
        SignalTrace::new(
            (0..n)
                .map(|i| amp * (2.0 * PI * f * i as f64 / rate + phase).cos())
                .collect(),
            rate,
        )
    }

    #[test]
    fn recovers_magnitude_and_phase() {
        let rate = 2000.0;
        let trace = tone_trace(40_000, rate, 190.0, 0.8, 1.1);
        let out = lockin_demodulate(&trace, 190.0, 0.05).unwrap();
        // per-sample values carry the residual 2f ripple of the single-pole
        // filter, ~1/(4 pi f tau) relative
        let ripple = 1.0 / (4.0 * PI * 190.0 * 0.05);
        let settled = out.magnitude.len() / 2;
        for (&m, &p) in out.magnitude[settled..].iter().zip(&out.phase[settled..]) {
            assert_relative_eq!(m, 0.8 / std::f64::consts::SQRT_2, max_relative = 3.0 * ripple);
            assert_relative_eq!(p, 1.1, epsilon = 3.0 * ripple);
        }
        // the settled mean phase averages the ripple out
        assert_relative_eq!(out.settled_phase(0.25), 1.1, epsilon = 1e-4);
        assert_relative_eq!(
            out.bandwidth_hz,
            1.0 / (2.0 * PI * 0.05),
            max_relative = 1e-12
        );
    }

    #[test]
    fn phase_step_settles_within_five_time_constants() {
        let rate = 2000.0;
        let f = 190.0;
        let tau = 0.05;
        let n = 40_000;
        let step_at = n / 2;
        let samples: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                let phi = if i < step_at { 0.4 } else { 0.5 };
                (2.0 * PI * f * t + phi).cos()
            })
            .collect();
        let trace = SignalTrace::new(samples, rate);
        let out = lockin_demodulate(&trace, f, tau).unwrap();
        let t_step = step_at as f64 / rate;
        for (&t, &p) in out.time.iter().zip(&out.phase) {
            if t > t_step + 5.0 * tau {
                assert!(
                    (p - 0.5).abs() < 0.1 * 0.1,
                    "phase {p:.4} at t = {t:.3} not settled"
                );
            }
        }
        // fully settled tail reaches the new phase
        assert_relative_eq!(out.settled_phase(0.1), 0.5, epsilon = 2e-3);
    }

    #[test]
    fn rejects_too_short_time_constant() {
        let trace = tone_trace(1000, 2000.0, 190.0, 1.0, 0.0);
        assert!(lockin_demodulate(&trace, 190.0, 0.005).is_err());
    }

    #[test]
    fn phase_rms_of_clean_tone_is_ripple_limited() {
        // residual fluctuation shrinks with the time constant (2f ripple)
        let trace = tone_trace(120_000, 2000.0, 190.0, 1.0, -2.0);
        let short = lockin_demodulate(&trace, 190.0, 0.05).unwrap();
        let long = lockin_demodulate(&trace, 190.0, 0.5).unwrap();
        assert!(short.phase_rms(0.25) < 1e-2);
        assert!(long.phase_rms(0.25) < 1e-3);
        assert_relative_eq!(long.settled_phase(0.25), -2.0, epsilon = 1e-4);
    }
}
