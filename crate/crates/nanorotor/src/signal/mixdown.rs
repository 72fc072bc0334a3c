//! Mix-down of the detector signal with a local oscillator and cascaded
//! FIR decimation to the recording rate.
//!
//! All low-pass stages are linear-phase FIR filters; each stage shifts the
//! trace's `start_time` by exactly its group delay, so tone phases measured
//! against absolute time are preserved through the whole chain.

use crate::error::{Error, Result};
use crate::signal::SignalTrace;

/// Result of a mix-down: the decimated trace plus the accumulated filter
/// group delay (already folded into the trace's `start_time`).
#[derive(Debug, Clone, PartialEq)]
pub struct MixDown {
    pub trace: SignalTrace,
    /// Total group delay of the decimation chain in seconds.
    pub group_delay: f64,
    /// Decimation factors of the individual stages.
    pub stage_factors: Vec<usize>,
}

/// Blackman-windowed sinc low-pass, unity DC gain, odd length.
fn lowpass_taps(cutoff_norm: f64, len: usize) -> Vec<f64> {
    let m = (len - 1) as f64 / 2.0;
    let mut taps: Vec<f64> = (0..len)
        .map(|i| {
            let x = i as f64 - m;
            let sinc = if x == 0.0 {
                2.0 * cutoff_norm
            } else {
                (2.0 * std::f64::consts::PI * cutoff_norm * x).sin() / (std::f64::consts::PI * x)
            };
            let w = 0.42
                - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos()
                + 0.08 * (4.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Split a decimation ratio into stage factors ≤ 32 (primes above 32 get
/// their own stage).
fn stage_plan(mut ratio: usize) -> Vec<usize> {
    let mut primes = Vec::new();
    let mut d = 2;
    while d * d <= ratio {
        while ratio % d == 0 {
            primes.push(d);
            ratio /= d;
        }
        d += 1;
    }
    if ratio > 1 {
        primes.push(ratio);
    }
    primes.sort_unstable_by(|a, b| b.cmp(a));
    let mut stages: Vec<usize> = Vec::new();
    for p in primes {
        if let Some(last) = stages.last_mut() {
            if *last * p <= 32 {
                *last *= p;
                continue;
            }
        }
        stages.push(p);
    }
    stages
}

/// Decimate by `factor` with an anti-alias FIR (valid region only); returns
/// the filtered trace with its `start_time` advanced by the group delay.
fn decimate_stage(trace: &SignalTrace, factor: usize) -> Result<(SignalTrace, f64)> {
    let mut len = 55 * factor;
    if len % 2 == 0 {
        len += 1;
    }
    if trace.samples.len() < len + factor {
        return Err(Error::invalid(
            "trace",
            format!(
                "too short for decimation by {factor}: need > {} samples, have {}",
                len + factor,
                trace.samples.len()
            ),
        ));
    }
    let taps = lowpass_taps(0.4 / factor as f64, len);
    let n_out = (trace.samples.len() - len) / factor + 1;
    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out {
        let base = n * factor;
        let mut acc = 0.0;
        for (k, &h) in taps.iter().enumerate() {
            acc += h * trace.samples[base + k];
        }
        out.push(acc);
    }
    let group_delay = (len - 1) as f64 / (2.0 * trace.sample_rate);
    Ok((
        SignalTrace {
            samples: out,
            sample_rate: trace.sample_rate / factor as f64,
            start_time: trace.start_time + group_delay,
            carrier_hint: trace.carrier_hint,
        },
        group_delay,
    ))
}

/// Multiply by a local oscillator at `f_lo` and decimate to `output_rate`.
///
/// The difference tone |carrier − f_lo| must land below half the output
/// rate; with a carrier hint present this is checked up front. Choose the
/// local oscillator below the carrier, otherwise the recovered tone phase is
/// mirrored. The input rate must be an integer multiple of the output rate.
pub fn mix_down(trace: &SignalTrace, f_lo: f64, output_rate: f64) -> Result<MixDown> {
    trace.validate()?;
    if !(f_lo.is_finite() && f_lo >= 0.0) {
        return Err(Error::invalid("f_lo", "must be finite and >= 0"));
    }
    if !(output_rate.is_finite() && output_rate > 0.0) {
        return Err(Error::invalid("output_rate", "must be finite and > 0"));
    }
    let ratio_f = trace.sample_rate / output_rate;
    let ratio = ratio_f.round() as usize;
    if ratio < 1 || (ratio_f - ratio as f64).abs() > 1e-9 * ratio_f {
        return Err(Error::invalid(
            "output_rate",
            "input sample rate must be an integer multiple of the output rate",
        ));
    }
    if let Some(carrier) = trace.carrier_hint {
        let diff = (carrier - f_lo).abs();
        if diff >= 0.5 * output_rate {
            return Err(Error::invalid(
                "f_lo",
                format!(
                    "difference tone {diff:.3} Hz is above the output Nyquist {:.3} Hz",
                    0.5 * output_rate
                ),
            ));
        }
    }

    // real mixing: 2·cos keeps the difference tone at unit gain
    let mixed: Vec<f64> = trace
        .samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let t = trace.time_at(i);
            x * 2.0 * (2.0 * std::f64::consts::PI * f_lo * t).cos()
        })
        .collect();
    let mut current = SignalTrace {
        samples: mixed,
        sample_rate: trace.sample_rate,
        start_time: trace.start_time,
        carrier_hint: trace.carrier_hint.map(|c| (c - f_lo).abs()),
    };

    let stages = stage_plan(ratio);
    let mut total_delay = 0.0;
    for &factor in &stages {
        let (next, delay) = decimate_stage(&current, factor)?;
        total_delay += delay;
        current = next;
    }
    Ok(MixDown {
        trace: current,
        group_delay: total_delay,
        stage_factors: stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn tone(n: usize, rate: f64, f: f64, phase: f64) -> SignalTrace {
        let samples = (0..n)
            .map(|i| (2.0 * PI * f * i as f64 / rate + phase).cos())
            .collect();
        let mut t = SignalTrace::new(samples, rate);
        t.carrier_hint = Some(f);
        t
    }

    /// Fit amplitude and phase of a known-frequency tone by quadrature
    /// projection over an integer number of cycles.
    fn tone_phase(trace: &SignalTrace, f: f64) -> (f64, f64) {
        let cycles = (trace.duration() * f).floor();
        let n_used = ((cycles / f) * trace.sample_rate).round() as usize;
        let n_used = n_used.min(trace.samples.len());
        let mut x = 0.0;
        let mut y = 0.0;
        for i in 0..n_used {
            let t = trace.time_at(i);
            x += trace.samples[i] * (2.0 * PI * f * t).cos();
            y -= trace.samples[i] * (2.0 * PI * f * t).sin();
        }
        let amp = 2.0 * (x * x + y * y).sqrt() / n_used as f64;
        (amp, y.atan2(x))
    }

    #[test]
    fn difference_tone_lands_at_190_hz_and_keeps_phase() {
        // two-tone trigonometry oracle: cos(a)·2cos(b) = cos(a−b) + cos(a+b)
        let rate = 400_000.0;
        let phase0 = 0.7;
        let trace = tone(1 << 21, rate, 50_000.0, phase0);
        let out = mix_down(&trace, 49_810.0, 2000.0).unwrap();
        assert_relative_eq!(out.trace.sample_rate, 2000.0, max_relative = 1e-12);
        let (amp, phase) = tone_phase(&out.trace, 190.0);
        assert_relative_eq!(amp, 1.0, max_relative = 2e-3);
        let dphi = (phase - phase0 + PI).rem_euclid(2.0 * PI) - PI;
        assert!(dphi.abs() < 1e-3, "phase error {dphi:.2e} rad");
        assert!(out.group_delay > 0.0);
    }

    #[test]
    fn homodyne_limit_gives_dc() {
        let rate = 100_000.0;
        let trace = tone(1 << 19, rate, 5000.0, 0.25);
        let out = mix_down(&trace, 5000.0, 1000.0).unwrap();
        let mean: f64 =
            out.trace.samples.iter().sum::<f64>() / out.trace.samples.len() as f64;
        // 2cos(wt+p)cos(wt) -> cos(p) at DC
        assert_relative_eq!(mean, 0.25f64.cos(), max_relative = 1e-3);
    }

    #[test]
    fn aliasing_guard_rejects_wide_difference() {
        let trace = tone(1 << 16, 100_000.0, 5000.0, 0.0);
        let err = mix_down(&trace, 1000.0, 2000.0);
        assert!(err.is_err());
    }

    #[test]
    fn non_integer_ratio_rejected() {
        let trace = tone(1 << 12, 44_100.0, 1000.0, 0.0);
        assert!(mix_down(&trace, 900.0, 2000.0).is_err());
    }

    #[test]
    fn stage_plan_covers_awkward_ratios() {
        assert_eq!(stage_plan(8000).iter().product::<usize>(), 8000);
        assert_eq!(stage_plan(222_000).iter().product::<usize>(), 222_000);
        assert_eq!(stage_plan(37).iter().product::<usize>(), 37);
        assert!(stage_plan(1).is_empty());
        for s in stage_plan(1_000_000) {
            assert!(s <= 37);
        }
    }
}
