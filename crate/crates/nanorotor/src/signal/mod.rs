//! Detection-signal synthesis and the measurement chain: scattered-light
//! detector model, mix-down to an audio-band carrier, Welch power spectral
//! density, Lorentzian line fitting, phase noise, and dual-phase lock-in
//! demodulation.

mod fit;
mod lockin;
mod mixdown;
mod psd;
mod trace;

pub use fit::{fit_lorentzian, LorentzianFit};
pub use lockin::{lockin_demodulate, LockInSeries};
pub use mixdown::{mix_down, MixDown};
pub use psd::{phase_noise, psd, PhaseNoiseCurve, Spectrum, WindowKind};
pub use trace::{synthesize_detector, DetectorModel, NoiseSpec, SignalTrace};
