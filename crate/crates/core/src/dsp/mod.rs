//! Short-time spectral analysis: Hamming framing, log-power spectrograms,
//! PCA whitening of spectral frames, and MFCCs.

mod framing;
mod mfcc;
mod spectrum;
mod whitening;

pub use framing::{frame_signal, hamming, FramingConfig};
pub use mfcc::{hz_to_mel, mel_to_hz, mfcc, Mfcc, MfccConfig};
pub use spectrum::{log_power, power_spectrum, spectrogram, POWER_FLOOR};
pub use whitening::{fit_whitener, PcaWhitener};
