//! Audio input: PCM WAV files, labeled multi-speaker corpora, and a seeded
//! synthetic corpus generator for running the pipeline without external data.

mod corpus;
mod synth;
mod wav;

use std::collections::BTreeSet;
use std::sync::Arc;

pub use corpus::{load_corpus, CorpusLayout, LoadWarning, LoadedCorpus};
pub use synth::{generate_synthetic_corpus, synthetic_speakers, SyntheticSpeaker, SYNTH_SAMPLE_RATE};
pub use wav::{read_wav, read_wav_from, write_wav};

use crate::error::{Error, Result};

/// Mono PCM signal with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    samples: Arc<[f64]>,
    sample_rate_hz: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyAudio);
        }
        if sample_rate_hz == 0 {
            return Err(Error::InvalidSignal("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidSignal(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples: samples.into(),
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / f64::from(self.sample_rate_hz)
    }

    /// Multiplies every sample by `gain`. The result may leave `[-1, 1]`.
    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(
            self.samples.iter().map(|s| s * gain).collect(),
            self.sample_rate_hz,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub signal: AudioSignal,
    pub speaker_id: String,
    pub utterance_id: String,
}

impl Utterance {
    pub fn new(
        signal: AudioSignal,
        speaker_id: impl Into<String>,
        utterance_id: impl Into<String>,
    ) -> Result<Self> {
        let speaker_id = speaker_id.into();
        if speaker_id.is_empty() {
            return Err(Error::InvalidSignal("empty speaker id".into()));
        }
        Ok(Self {
            signal,
            speaker_id,
            utterance_id: utterance_id.into(),
        })
    }
}

/// A labeled collection of utterances sharing one sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    utterances: Vec<Utterance>,
    speakers: BTreeSet<String>,
}

impl Corpus {
    /// Builds a corpus, rejecting mixed sample rates.
    pub fn new(utterances: Vec<Utterance>) -> Result<Self> {
        if let Some(first) = utterances.first() {
            let expected = first.signal.sample_rate_hz();
            for u in &utterances {
                let found = u.signal.sample_rate_hz();
                if found != expected {
                    return Err(Error::SampleRateMismatch {
                        expected,
                        found,
                        utterance: u.utterance_id.clone(),
                    });
                }
            }
        }
        let speakers = utterances.iter().map(|u| u.speaker_id.clone()).collect();
        Ok(Self {
            utterances,
            speakers,
        })
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn speakers(&self) -> &BTreeSet<String> {
        &self.speakers
    }

    pub fn sample_rate_hz(&self) -> Option<u32> {
        self.utterances.first().map(|u| u.signal.sample_rate_hz())
    }

    pub fn utterances_of<'a>(&'a self, speaker: &'a str) -> impl Iterator<Item = &'a Utterance> {
        self.utterances.iter().filter(move |u| u.speaker_id == speaker)
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    /// Subset of utterances, in the given order.
    pub fn select<'a>(&self, utterances: impl IntoIterator<Item = &'a Utterance>) -> Corpus {
        let utterances: Vec<Utterance> = utterances.into_iter().cloned().collect();
        let speakers = utterances.iter().map(|u| u.speaker_id.clone()).collect();
        Corpus {
            utterances,
            speakers,
        }
    }
}
