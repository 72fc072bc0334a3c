//! Welch-averaged one-sided power spectral density and the phase-noise
//! curve S_φ(f) = 10·log10[PSD(f)/PSD(carrier)].

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SignalTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Rectangular,
    Hann,
}

impl WindowKind {
    fn coefficients(&self, n: usize) -> Vec<f64> {
        match self {
            WindowKind::Rectangular => vec![1.0; n],
            WindowKind::Hann => (0..n)
                .map(|i| {
                    let x = std::f64::consts::PI * i as f64 / n as f64;
                    let s = x.sin();
                    2.0 * s * s // periodic Hann, scaled to unit mean square
                })
                .collect(),
        }
    }
}

/// One-sided power spectral density.
///
/// Normalized so that the integrated spectrum equals the mean-square power
/// of the analyzed samples exactly (Parseval), for every window choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Bin center frequencies in Hz, DC first.
    pub frequencies: Vec<f64>,
    /// Power per hertz.
    pub psd: Vec<f64>,
    /// Resolution bandwidth = sample_rate / segment length.
    pub resolution_bandwidth: f64,
    pub sample_rate: f64,
    pub segments: usize,
    pub window: WindowKind,
}

impl Spectrum {
    /// Integrated power, Σ PSD·Δf.
    pub fn total_power(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.resolution_bandwidth
    }

    /// Index of the bin nearest to `f`.
    pub fn bin_of(&self, f: f64) -> usize {
        let idx = (f / self.resolution_bandwidth).round() as isize;
        idx.clamp(0, self.frequencies.len() as isize - 1) as usize
    }

    /// Power integrated over bins within ±`half_width` of `f`.
    pub fn band_power(&self, f: f64, half_width: f64) -> f64 {
        self.frequencies
            .iter()
            .zip(&self.psd)
            .filter(|(freq, _)| (*freq - f).abs() <= half_width)
            .map(|(_, p)| p)
            .sum::<f64>()
            * self.resolution_bandwidth
    }
}

/// Welch-averaged one-sided periodogram over `segments` non-overlapping
/// segments.
pub fn psd(trace: &SignalTrace, window: WindowKind, segments: usize) -> Result<Spectrum> {
    if segments == 0 {
        return Err(Error::invalid("segments", "must be >= 1"));
    }
    if trace.samples.len() < segments * 2 {
        return Err(Error::invalid(
            "trace",
            format!(
                "need at least {} samples for {} segments",
                segments * 2,
                segments
            ),
        ));
    }
    let seg_len = trace.samples.len() / segments;
    let n_bins = seg_len / 2 + 1;
    let rate = trace.sample_rate;
    let rbw = rate / seg_len as f64;

    let w = window.coefficients(seg_len);
    let w_sum_sq: f64 = w.iter().map(|x| x * x).sum();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(seg_len);

    let mut acc = vec![0.0; n_bins];
    let mut buf: Vec<Complex<f64>> = vec![Complex::default(); seg_len];
    let mut analyzed_ms = 0.0;

    for s in 0..segments {
        let chunk = &trace.samples[s * seg_len..(s + 1) * seg_len];
        analyzed_ms += chunk.iter().map(|x| x * x).sum::<f64>();
        for (b, (&x, &wk)) in buf.iter_mut().zip(chunk.iter().zip(&w)) {
            *b = Complex::new(x * wk, 0.0);
        }
        fft.process(&mut buf);
        // one-sided: double everything except DC and (for even lengths) Nyquist
        for (k, slot) in acc.iter_mut().enumerate() {
            let mag2 = buf[k].norm_sqr();
            let one_sided = if k == 0 || (seg_len % 2 == 0 && k == seg_len / 2) {
                mag2
            } else {
                2.0 * mag2
            };
            *slot += one_sided / (rate * w_sum_sq);
        }
    }
    analyzed_ms /= (segments * seg_len) as f64;

    let mut psd: Vec<f64> = acc.iter().map(|p| p / segments as f64).collect();

    // pin the Parseval identity exactly: windowing introduces a
    // data-dependent power bias of order (window bandwidth / signal
    // bandwidth) which this global factor removes
    let raw_total = psd.iter().sum::<f64>() * rbw;
    if raw_total > 0.0 && analyzed_ms > 0.0 {
        let fix = analyzed_ms / raw_total;
        for p in &mut psd {
            *p *= fix;
        }
    }

    Ok(Spectrum {
        frequencies: (0..n_bins).map(|k| k as f64 * rbw).collect(),
        psd,
        resolution_bandwidth: rbw,
        sample_rate: rate,
        segments,
        window,
    })
}

/// Phase noise relative to the carrier bin, in dBc/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseNoiseCurve {
    /// Offset from the carrier bin in Hz (signed).
    pub offsets: Vec<f64>,
    /// S_φ = 10·log10[PSD(f)/PSD(carrier)].
    pub dbc_per_hz: Vec<f64>,
    /// Frequency of the carrier bin actually used.
    pub carrier_hz: f64,
}

impl PhaseNoiseCurve {
    /// S_φ at the offset bin nearest to `offset`.
    pub fn at_offset(&self, offset: f64) -> f64 {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, &o) in self.offsets.iter().enumerate() {
            let d = (o - offset).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        self.dbc_per_hz[best]
    }
}

/// S_φ(f) against the carrier bin; zero offset is 0 dBc/Hz by construction.
pub fn phase_noise(spec: &Spectrum, carrier: f64) -> Result<PhaseNoiseCurve> {
    if carrier < 0.0 || carrier > *spec.frequencies.last().unwrap_or(&0.0) {
        return Err(Error::invalid("carrier", "outside the spectrum"));
    }
    let bin = spec.bin_of(carrier);
    let carrier_power = spec.psd[bin];
    if !(carrier_power > 0.0) {
        return Err(Error::invalid("carrier", "carrier bin power is zero"));
    }
    let carrier_hz = spec.frequencies[bin];
    Ok(PhaseNoiseCurve {
        offsets: spec.frequencies.iter().map(|f| f - carrier_hz).collect(),
        dbc_per_hz: spec
            .psd
            .iter()
            .map(|p| 10.0 * (p / carrier_power).log10())
            .collect(),
        carrier_hz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    fn tone(n: usize, rate: f64, f: f64, amp: f64, phase: f64) -> SignalTrace {
        let samples = (0..n)
            .map(|i| amp * (2.0 * PI * f * i as f64 / rate + phase).cos())
            .collect();
        SignalTrace::new(samples, rate)
    }

    #[test]
    fn unit_sine_has_half_power() {
        // bin-centered tone, rectangular window: all power in one bin
        let trace = tone(4096, 1024.0, 64.0, 1.0, 0.3);
        let spec = psd(&trace, WindowKind::Rectangular, 4).unwrap();
        assert_relative_eq!(spec.total_power(), 0.5, max_relative = 1e-9);
        let peak = spec.bin_of(64.0);
        assert_relative_eq!(spec.band_power(spec.frequencies[peak], 2.0 * spec.resolution_bandwidth), 0.5, max_relative = 1e-9);
    }

    #[test]
    fn parseval_holds_for_both_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 8192;
        let mut samples: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * 37.0 * i as f64 / 2000.0).cos())
            .collect();
        for s in &mut samples {
            *s += 0.3 * normal.sample(&mut rng);
        }
        let trace = SignalTrace::new(samples, 2000.0);
        let ms_all = trace.mean_square();
        for window in [WindowKind::Rectangular, WindowKind::Hann] {
            for segments in [1, 4, 8] {
                let spec = psd(&trace, window, segments).unwrap();
                // analyzed region = whole trace when segments divide evenly
                assert_relative_eq!(spec.total_power(), ms_all, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn white_noise_floor_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sigma = 0.5;
        let normal = Normal::new(0.0, sigma).unwrap();
        let rate = 2000.0;
        let n = 1 << 18;
        let samples: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let trace = SignalTrace::new(samples, rate);
        let spec = psd(&trace, WindowKind::Rectangular, 64).unwrap();
        let expected = sigma * sigma / (rate / 2.0);
        // median-of-bins estimate of the floor
        let mut vals = spec.psd.clone();
        vals.sort_by(f64::total_cmp);
        let median = vals[vals.len() / 2];
        assert_relative_eq!(median, expected, max_relative = 0.05);
    }

    #[test]
    fn phase_noise_is_zero_at_carrier() {
        let trace = tone(1 << 14, 2000.0, 190.0, 1.0, 0.0);
        let spec = psd(&trace, WindowKind::Hann, 4).unwrap();
        let curve = phase_noise(&spec, 190.0).unwrap();
        assert_eq!(curve.at_offset(0.0), 0.0);
        assert!(curve.carrier_hz > 0.0);
    }

    #[test]
    fn phase_noise_rejects_empty_carrier() {
        let trace = SignalTrace::new(vec![0.0; 256], 1000.0);
        let spec = psd(&trace, WindowKind::Rectangular, 1).unwrap();
        assert!(phase_noise(&spec, 100.0).is_err());
    }

    #[test]
    fn segment_count_precondition() {
        let trace = SignalTrace::new(vec![1.0; 10], 100.0);
        assert!(psd(&trace, WindowKind::Rectangular, 6).is_err());
        assert!(psd(&trace, WindowKind::Rectangular, 0).is_err());
    }
}
