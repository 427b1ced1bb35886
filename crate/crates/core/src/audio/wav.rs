use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioSignal;
use crate::error::{Error, Result};

/// Reads a PCM WAV file, downmixing to mono and scaling to `[-1, 1]`.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioSignal> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_wav_from(BufReader::new(file))
}

/// Same as [`read_wav`] for an in-memory or streamed source.
pub fn read_wav_from<R: Read>(reader: R) -> Result<AudioSignal> {
    let reader = WavReader::new(reader).map_err(map_hound)?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    if channels == 0 {
        return Err(Error::Format("zero channels".into()));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let full_scale = f64::from(1u32 << (bits - 1));
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) / full_scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(map_hound)?
        }
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_hound)?,
        (format, bits) => {
            return Err(Error::UnsupportedCodec(format!(
                "{bits}-bit {format:?} samples"
            )))
        }
    };

    if interleaved.is_empty() {
        return Err(Error::EmptyAudio);
    }
    if !interleaved.len().is_multiple_of(channels) {
        return Err(Error::Format("data chunk ends mid-frame".into()));
    }

    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    AudioSignal::new(samples, spec.sample_rate)
}

/// Writes a mono 16-bit PCM file. Samples are clamped to the representable range.
pub fn write_wav(path: impl AsRef<Path>, signal: &AudioSignal) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate_hz(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(map_hound)?;
    for &s in signal.samples() {
        writer.write_sample(quantize_i16(s)).map_err(map_hound)?;
    }
    writer.finalize().map_err(map_hound)
}

pub(crate) fn quantize_i16(sample: f64) -> i16 {
    (sample * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

fn map_hound(err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::Format("unexpected end of file".into())
        }
        hound::Error::IoError(e) => Error::Format(e.to_string()),
        hound::Error::FormatError(msg) => Error::Format(msg.into()),
        hound::Error::Unsupported => Error::UnsupportedCodec("non-PCM encoding".into()),
        hound::Error::TooWide => Error::UnsupportedCodec("sample width too large".into()),
        hound::Error::UnfinishedSample => Error::Format("truncated sample".into()),
        hound::Error::InvalidSampleFormat => Error::UnsupportedCodec("invalid sample format".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Canonical 44-byte header followed by 16-bit mono samples.
    fn pcm16(samples: &[i16], sample_rate: u32) -> Vec<u8> {
        let data_len = (samples.len() * 2) as u32;
        let mut out = Vec::with_capacity(44 + data_len as usize);
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data_len).to_le_bytes());
        out.extend_from_slice(b"WAVEfmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes()); // PCM
        out.extend_from_slice(&1u16.to_le_bytes()); // mono
        out.extend_from_slice(&sample_rate.to_le_bytes());
        out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
        out.extend_from_slice(&2u16.to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&data_len.to_le_bytes());
        for s in samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    #[test]
    fn half_scale_sample() {
        let sig = read_wav_from(&pcm16(&[16384], 8000)[..]).unwrap();
        assert_eq!(sig.samples(), &[0.5]);
        assert_eq!(sig.sample_rate_hz(), 8000);
    }

    #[test]
    fn zero_payload() {
        let sig = read_wav_from(&pcm16(&[0; 100], 16000)[..]).unwrap();
        assert_eq!(sig.len(), 100);
        assert!(sig.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn hand_written_header() {
        let bytes = pcm16(&[32767, -32768, 0, 1], 16000);
        assert_eq!(bytes.len(), 44 + 8);
        let sig = read_wav_from(&bytes[..]).unwrap();
        // 32767/32768, -32768/32768, 0, 1/32768
        let expected = [0.999_969_482_421_875, -1.0, 0.0, 0.000_030_517_578_125];
        assert_eq!(sig.samples(), &expected);
    }

    #[test]
    fn stereo_is_mean_downmixed() {
        let mut bytes = pcm16(&[16384, 0, -16384, -16384], 16000);
        bytes[22] = 2; // channels
        bytes[28..32].copy_from_slice(&(16000u32 * 4).to_le_bytes());
        bytes[32] = 4; // block align
        let sig = read_wav_from(&bytes[..]).unwrap();
        assert_eq!(sig.samples(), &[0.25, -0.5]);
    }

    #[test]
    fn empty_data_chunk() {
        let err = read_wav_from(&pcm16(&[], 16000)[..]).unwrap_err();
        assert!(matches!(err, Error::EmptyAudio), "{err}");
    }

    #[test]
    fn compressed_encoding_is_rejected() {
        let mut bytes = pcm16(&[1, 2], 16000);
        bytes[20] = 0x55; // MPEG Layer 3 format tag
        let err = read_wav_from(&bytes[..]).unwrap_err();
        assert!(matches!(err, Error::UnsupportedCodec(_)), "{err}");
    }

    #[test]
    fn garbage_header() {
        let err = read_wav_from(&b"RIFX\0\0\0\0WAVEjunk"[..]).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let sig = AudioSignal::new(vec![0.25, -0.5, 0.0, 0.999], 16000).unwrap();
        write_wav(&path, &sig).unwrap();
        let back = read_wav(&path).unwrap();
        let requantized: Vec<i16> = back.samples().iter().map(|&s| quantize_i16(s)).collect();
        let original: Vec<i16> = sig.samples().iter().map(|&s| quantize_i16(s)).collect();
        assert_eq!(requantized, original);
    }

    proptest! {
        #[test]
        fn pcm16_payload_round_trips(payload in proptest::collection::vec(any::<i16>(), 1..256)) {
            let sig = read_wav_from(&pcm16(&payload, 16000)[..]).unwrap();
            let back: Vec<i16> = sig.samples().iter().map(|&s| quantize_i16(s)).collect();
            prop_assert_eq!(back, payload);
        }
    }
}
