use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{AudioSignal, Corpus, Utterance};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_for};

pub const SYNTH_SAMPLE_RATE: u32 = 16_000;

const FORMANT_LOW_HZ: f64 = 250.0;
const FORMANT_HIGH_HZ: f64 = 3_750.0;
/// Minimum spacing between formants of one speaker.
const MIN_FORMANT_GAP_HZ: f64 = 200.0;
/// Two same-size formant sets closer than this in every entry count as a collision.
const COLLISION_HZ: f64 = 120.0;
const FREQ_JITTER: f64 = 0.015;
const MOD_DEPTH: f64 = 0.6;
const NOISE_STD: f64 = 0.005;
const PEAK_LEVEL: f64 = 0.7;

/// Resonances that define one synthetic speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpeaker {
    pub id: String,
    pub formants_hz: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

/// The seeded formant table used by [`generate_synthetic_corpus`].
pub fn synthetic_speakers(n_speakers: usize, seed: u64) -> Vec<SyntheticSpeaker> {
    let mut rng = rng_for(seed, 0);
    let mut table: Vec<SyntheticSpeaker> = Vec::with_capacity(n_speakers);
    while table.len() < n_speakers {
        let n_formants = rng.random_range(3..=5);
        let mut formants: Vec<f64> = Vec::with_capacity(n_formants);
        while formants.len() < n_formants {
            let f = rng.random_range(FORMANT_LOW_HZ..FORMANT_HIGH_HZ);
            if formants.iter().all(|g| (f - g).abs() >= MIN_FORMANT_GAP_HZ) {
                formants.push(f);
            }
        }
        formants.sort_by(f64::total_cmp);
        let collides = table.iter().any(|other| {
            other.formants_hz.len() == formants.len()
                && other
                    .formants_hz
                    .iter()
                    .zip(&formants)
                    .all(|(a, b)| (a - b).abs() < COLLISION_HZ)
        });
        if collides {
            continue;
        }
        let amplitudes = (0..n_formants).map(|_| rng.random_range(0.3..1.0)).collect();
        table.push(SyntheticSpeaker {
            id: format!("spk{:02}", table.len() + 1),
            formants_hz: formants,
            amplitudes,
        });
    }
    table
}

/// Generates `n_speakers × n_utterances` utterances of `duration_s` seconds at 16 kHz.
///
/// Each utterance sums amplitude-modulated sinusoids at the speaker's formants
/// (with small per-utterance frequency jitter) and adds low-level white noise.
/// Output depends only on `(seed, speaker index, utterance index)`.
pub fn generate_synthetic_corpus(
    n_speakers: usize,
    n_utterances: usize,
    duration_s: f64,
    seed: u64,
) -> Result<Corpus> {
    if n_speakers < 2 {
        return Err(Error::Config("synthetic corpus needs at least 2 speakers".into()));
    }
    if n_utterances == 0 {
        return Err(Error::Config("synthetic corpus needs at least 1 utterance".into()));
    }
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::Config(format!("invalid duration {duration_s}")));
    }
    let n_samples = (duration_s * f64::from(SYNTH_SAMPLE_RATE)).round() as usize;
    if n_samples == 0 {
        return Err(Error::Config(format!("duration {duration_s} s yields no samples")));
    }

    let mut utterances = Vec::with_capacity(n_speakers * n_utterances);
    for (s, speaker) in synthetic_speakers(n_speakers, seed).iter().enumerate() {
        let speaker_seed = derive_seed(seed, 1 + s as u64);
        for u in 0..n_utterances {
            let samples = render(speaker, n_samples, speaker_seed, u as u64);
            let signal = AudioSignal::new(samples, SYNTH_SAMPLE_RATE)?;
            let utterance_id = format!("{}/u{:02}", speaker.id, u + 1);
            utterances.push(Utterance::new(signal, speaker.id.clone(), utterance_id)?);
        }
    }
    Corpus::new(utterances)
}

fn render(speaker: &SyntheticSpeaker, n_samples: usize, speaker_seed: u64, utterance: u64) -> Vec<f64> {
    let mut rng = rng_for(speaker_seed, utterance);
    let fs = f64::from(SYNTH_SAMPLE_RATE);

    struct Partial {
        freq: f64,
        amp: f64,
        phase: f64,
        mod_rate: f64,
        mod_phase: f64,
    }
    let partials: Vec<Partial> = speaker
        .formants_hz
        .iter()
        .zip(&speaker.amplitudes)
        .map(|(&f, &a)| Partial {
            freq: f * (1.0 + rng.random_range(-FREQ_JITTER..FREQ_JITTER)),
            amp: a * rng.random_range(0.8..1.2),
            phase: rng.random_range(0.0..TAU),
            mod_rate: rng.random_range(2.0..7.0),
            mod_phase: rng.random_range(0.0..TAU),
        })
        .collect();

    let envelope_peak: f64 = partials.iter().map(|p| p.amp * (1.0 + MOD_DEPTH)).sum();
    let gain = PEAK_LEVEL / envelope_peak * rng.random_range(0.5..1.0);
    let noise = Normal::new(0.0, NOISE_STD).expect("positive std");

    (0..n_samples)
        .map(|n| {
            let t = n as f64 / fs;
            let tone: f64 = partials
                .iter()
                .map(|p| {
                    let env = 1.0 + MOD_DEPTH * (TAU * p.mod_rate * t + p.mod_phase).sin();
                    p.amp * env * (TAU * p.freq * t + p.phase).sin()
                })
                .sum();
            (gain * tone + noise.sample(&mut rng)).clamp(-1.0, 1.0)
        })
        .collect()
}
