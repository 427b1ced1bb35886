use std::collections::BTreeMap;

use ndarray::{Array1, ArrayView2};

use super::GmmModel;
use crate::error::{Error, Result};

/// Standard-score normalization of LLRs, mapped into (0, 1) by the logistic function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreNormalization {
    pub mean: f64,
    pub std: f64,
}

impl Default for ScoreNormalization {
    fn default() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }
}

impl ScoreNormalization {
    /// Mean and population std of `scores`; a zero spread falls back to 1.
    pub fn fit(scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::InsufficientData("no scores to normalize".into()));
        }
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let std = (scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n).sqrt();
        if !(mean.is_finite() && std.is_finite()) {
            return Err(Error::DegenerateData("non-finite enrollment scores".into()));
        }
        Ok(Self {
            mean,
            std: if std > 0.0 { std } else { 1.0 },
        })
    }

    pub fn confidence(&self, llr: f64) -> f64 {
        let z = (llr - self.mean) / self.std;
        1.0 / (1.0 + (-z).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerificationDecision {
    pub llr: f64,
    pub confidence: f64,
    pub threshold: f64,
    pub accept: bool,
}

/// Enrolled speaker GMMs, the background model and the verification settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerModelSet {
    speakers: BTreeMap<String, GmmModel>,
    ubm: GmmModel,
    normalization: ScoreNormalization,
    threshold: f64,
}

impl SpeakerModelSet {
    /// Every model must share the background model's dimension and size.
    pub fn new(speakers: BTreeMap<String, GmmModel>, ubm: GmmModel) -> Result<Self> {
        if speakers.is_empty() {
            return Err(Error::InsufficientData("no enrolled speakers".into()));
        }
        for (id, model) in &speakers {
            if model.dim() != ubm.dim() {
                return Err(Error::DimensionMismatch {
                    expected: ubm.dim(),
                    found: model.dim(),
                });
            }
            if model.n_components() != ubm.n_components() {
                return Err(Error::Config(format!(
                    "speaker {id} has {} components, background model {}",
                    model.n_components(),
                    ubm.n_components()
                )));
            }
        }
        Ok(Self {
            speakers,
            ubm,
            normalization: ScoreNormalization::default(),
            threshold: 0.0,
        })
    }

    pub fn with_normalization(mut self, normalization: ScoreNormalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn speakers(&self) -> impl Iterator<Item = (&str, &GmmModel)> {
        self.speakers.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn speaker_ids(&self) -> impl Iterator<Item = &str> {
        self.speakers.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.speakers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speakers.is_empty()
    }

    pub fn ubm(&self) -> &GmmModel {
        &self.ubm
    }

    pub fn feature_dim(&self) -> usize {
        self.ubm.dim()
    }

    pub fn normalization(&self) -> ScoreNormalization {
        self.normalization
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    fn model(&self, speaker: &str) -> Result<&GmmModel> {
        self.speakers
            .get(speaker)
            .ok_or_else(|| Error::UnknownSpeaker(speaker.to_owned()))
    }

    fn background(&self, frames: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if frames.nrows() == 0 {
            return Err(Error::EmptyFrames);
        }
        self.ubm.log_likelihoods(frames)
    }

    fn llr_against(model: &GmmModel, frames: ArrayView2<'_, f64>, background: &Array1<f64>) -> Result<f64> {
        let own = model.log_likelihoods(frames)?;
        let total: f64 = own.iter().zip(background).map(|(s, u)| s - u).sum();
        Ok(total / frames.nrows() as f64)
    }

    /// Frame-averaged `log p(x | speaker) - log p(x | UBM)`.
    pub fn llr(&self, speaker: &str, frames: ArrayView2<'_, f64>) -> Result<f64> {
        let model = self.model(speaker)?;
        let background = self.background(frames)?;
        Self::llr_against(model, frames, &background)
    }

    /// LLR of `frames` against every enrolled speaker, in speaker-id order.
    pub fn llr_all(&self, frames: ArrayView2<'_, f64>) -> Result<Vec<(String, f64)>> {
        let background = self.background(frames)?;
        self.speakers
            .iter()
            .map(|(id, model)| Ok((id.clone(), Self::llr_against(model, frames, &background)?)))
            .collect()
    }

    pub fn score_utterance(&self, claimed: &str, frames: ArrayView2<'_, f64>) -> Result<VerificationDecision> {
        let llr = self.llr(claimed, frames)?;
        Ok(VerificationDecision {
            llr,
            confidence: self.normalization.confidence(llr),
            threshold: self.threshold,
            accept: llr > self.threshold,
        })
    }

    /// Enrolled speakers ranked by LLR, best first.
    pub fn identify(&self, frames: ArrayView2<'_, f64>) -> Result<Vec<(String, f64)>> {
        Ok(rank_scores(self.llr_all(frames)?))
    }
}

/// Sorts by score descending, breaking ties by ascending speaker id.
pub fn rank_scores(mut scores: Vec<(String, f64)>) -> Vec<(String, f64)> {
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scores
}
