use std::collections::BTreeMap;

use ndarray::{concatenate, Array2, Axis};
use rayon::prelude::*;

use super::config::{FeatureMode, FeatureSource, PipelineConfig};
use super::features::{corpus_power, power_frames, FeatureExtractor, Frontend, Standardizer, UtteranceFeatures};
use crate::audio::{AudioSignal, Corpus, Utterance};
use crate::dbn::{finetune, pretrain};
use crate::dsp::{fit_whitener, log_power};
use crate::error::{Error, Result, Stage, StageExt};
use crate::gmm::{em_fit, train_ubm, EmConfig, ScoreNormalization, SpeakerModelSet, VerificationDecision};
use crate::seed::{derive_seed, stream};

/// Everything needed to score new audio: configuration, front end,
/// standardization and the enrolled models.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: PipelineConfig,
    pub sample_rate_hz: u32,
    pub frontend: Option<Frontend>,
    pub standardizer: Standardizer,
    pub models: SpeakerModelSet,
}

fn stack(parts: &[Array2<f64>]) -> Array2<f64> {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    concatenate(Axis(0), &views).expect("equal widths")
}

/// Whitener, pretraining and (unless disabled) fine-tuning on the given
/// power spectra. `labels` holds one speaker index per utterance.
pub(crate) fn fit_frontend(power: &[Array2<f64>], labels: &[usize], cfg: &PipelineConfig) -> Result<Frontend> {
    let spectra = stack(&power.iter().map(|p| log_power(p.view())).collect::<Vec<_>>());
    let whitener = fit_whitener(spectra.view(), cfg.pca_components, cfg.whiten_epsilon).stage(Stage::Whitener)?;
    let whitened = whitener.whiten_batch(spectra.view()).stage(Stage::Whitener)?;

    let mut pre_cfg = cfg.pretrain;
    pre_cfg.rbm1.seed = derive_seed(cfg.seed, stream::RBM1);
    pre_cfg.rbm2.seed = derive_seed(cfg.seed, stream::RBM2);
    let pre = pretrain(whitened.view(), &pre_cfg).stage(Stage::Pretrain)?;
    log::info!(
        "pretrained on {} frames; layer-1 reconstruction error {:.4} -> {:.4}",
        whitened.nrows(),
        pre.layer1_errors.first().copied().unwrap_or(f64::NAN),
        pre.layer1_errors.last().copied().unwrap_or(f64::NAN),
    );

    let dbn = match cfg.feature_source {
        FeatureSource::Pretrained => pre.model,
        FeatureSource::Finetuned => {
            let frame_labels: Vec<usize> = power
                .iter()
                .zip(labels)
                .flat_map(|(p, &l)| std::iter::repeat_n(l, p.nrows()))
                .collect();
            let ft_cfg = crate::dbn::FineTuneConfig {
                seed: derive_seed(cfg.seed, stream::FINETUNE),
                ..cfg.finetune
            };
            let out = finetune(&pre.model, whitened.view(), &frame_labels, &ft_cfg).stage(Stage::Finetune)?;
            log::info!(
                "fine-tuned: cross-entropy {:.4} -> {:.4}, kept epoch {}",
                out.losses[0],
                out.losses.last().copied().unwrap_or(f64::NAN),
                out.best_epoch
            );
            out.model
        }
    };
    Ok(Frontend { whitener, dbn })
}

/// Components every model can support: at least ten frames per component
/// for the smallest speaker.
fn shared_components(requested: usize, per_speaker_frames: impl Iterator<Item = usize>) -> usize {
    let fewest = per_speaker_frames.min().unwrap_or(0);
    let m = requested.min(fewest / 10).max(1);
    if m < requested {
        log::warn!("reducing mixtures from {requested} to {m} components ({fewest} frames for the smallest speaker)");
    }
    m
}

/// Fits the standardizer, one GMM per speaker, the background model and the
/// score normalization from training features.
pub(crate) fn enroll(
    train: &[UtteranceFeatures],
    mode: FeatureMode,
    cfg: &PipelineConfig,
) -> Result<(Standardizer, SpeakerModelSet)> {
    let assembled: Vec<Array2<f64>> = train.iter().map(|u| u.assemble(mode)).collect::<Result<_>>().stage(Stage::Features)?;
    let pooled_raw = stack(&assembled);
    let standardizer = Standardizer::fit(pooled_raw.view()).stage(Stage::Features)?;
    let standardized: Vec<Array2<f64>> = assembled
        .iter()
        .map(|a| standardizer.apply(a.view()))
        .collect::<Result<_>>()
        .stage(Stage::Features)?;
    let pooled = stack(&standardized);

    let mut by_speaker: BTreeMap<&str, Vec<Array2<f64>>> = BTreeMap::new();
    for (u, x) in train.iter().zip(&standardized) {
        by_speaker.entry(u.speaker_id.as_str()).or_default().push(x.clone());
    }
    if by_speaker.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least two enrolled speakers, found {}",
            by_speaker.len()
        ))
        .at(Stage::Enrollment));
    }
    let speaker_data: Vec<(&str, Array2<f64>)> = by_speaker.into_iter().map(|(id, parts)| (id, stack(&parts))).collect();

    let m = shared_components(cfg.gmm_components, speaker_data.iter().map(|(_, x)| x.nrows()));
    let em = EmConfig {
        n_components: m,
        max_iters: cfg.em_max_iters,
        tol: cfg.em_tol,
        reference_variance: Some(pooled.var_axis(Axis(0), 0.0)),
        ..EmConfig::default()
    };

    let speakers: BTreeMap<String, crate::gmm::GmmModel> = speaker_data
        .par_iter()
        .enumerate()
        .map(|(idx, (id, x))| {
            let seeded = EmConfig {
                seed: derive_seed(cfg.seed, stream::SPEAKER_BASE + idx as u64),
                ..em.clone()
            };
            let fit = em_fit(x.view(), &seeded)?;
            Ok((id.to_string(), fit.model))
        })
        .collect::<Result<_>>()
        .stage(Stage::Enrollment)?;

    let ubm_cfg = EmConfig {
        seed: derive_seed(cfg.seed, stream::UBM),
        ..em
    };
    let ubm = train_ubm(pooled.view(), &ubm_cfg).stage(Stage::Background)?.model;
    let models = SpeakerModelSet::new(speakers, ubm).stage(Stage::Enrollment)?;

    let mut scores = Vec::with_capacity(standardized.len() * models.len());
    for x in &standardized {
        scores.extend(models.llr_all(x.view()).stage(Stage::Normalization)?.into_iter().map(|(_, s)| s));
    }
    let normalization = ScoreNormalization::fit(&scores).stage(Stage::Normalization)?;
    Ok((standardizer, models.with_normalization(normalization).with_threshold(cfg.threshold)))
}

/// Speaker index (position in sorted id order) of every utterance.
pub(crate) fn speaker_labels(utterances: &[&Utterance]) -> Vec<usize> {
    let mut ids: Vec<&str> = utterances.iter().map(|u| u.speaker_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    utterances
        .iter()
        .map(|u| ids.binary_search(&u.speaker_id.as_str()).expect("id collected above"))
        .collect()
}

/// Trains every stage on `corpus` for `cfg.feature_mode`.
///
/// The whitener and network are trained only when the mode uses L1 or L2.
/// Failures carry the stage they came from.
pub fn train_pipeline(corpus: &Corpus, cfg: &PipelineConfig) -> Result<ModelBundle> {
    cfg.validate()?;
    if corpus.speakers().len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least two speakers, corpus has {}",
            corpus.speakers().len()
        ))
        .at(Stage::Enrollment));
    }
    let sample_rate_hz = corpus.sample_rate_hz().expect("non-empty corpus");
    let utterances: Vec<&Utterance> = corpus.utterances().iter().collect();
    let power = corpus_power(&utterances, cfg).stage(Stage::Framing)?;

    let frontend = if cfg.feature_mode.uses_dbn() {
        Some(fit_frontend(&power, &speaker_labels(&utterances), cfg)?)
    } else {
        None
    };
    let extractor = FeatureExtractor::new(cfg, sample_rate_hz, frontend.as_ref()).stage(Stage::Features)?;
    let feats: Vec<UtteranceFeatures> = utterances
        .par_iter()
        .zip(power.par_iter())
        .map(|(u, p)| extractor.utterance(u, p.view()))
        .collect::<Result<_>>()
        .stage(Stage::Features)?;
    let (standardizer, models) = enroll(&feats, cfg.feature_mode, cfg)?;

    Ok(ModelBundle {
        config: cfg.clone(),
        sample_rate_hz,
        frontend,
        standardizer,
        models,
    })
}

impl ModelBundle {
    /// Standardized feature matrix of `signal` in the bundle's feature mode.
    pub fn features(&self, signal: &AudioSignal) -> Result<Array2<f64>> {
        if signal.sample_rate_hz() != self.sample_rate_hz {
            return Err(Error::SampleRateMismatch {
                expected: self.sample_rate_hz,
                found: signal.sample_rate_hz(),
                utterance: "query".into(),
            });
        }
        let power = power_frames(signal, &self.config)?;
        let extractor = FeatureExtractor::new(&self.config, self.sample_rate_hz, self.frontend.as_ref())?;
        let feats = extractor.compute("", "", power.view())?;
        self.standardizer.apply(feats.assemble(self.config.feature_mode)?.view())
    }

    /// Enrolled speakers ranked by LLR, best first.
    pub fn identify(&self, signal: &AudioSignal) -> Result<Vec<(String, f64)>> {
        self.models.identify(self.features(signal)?.view())
    }

    pub fn verify(&self, signal: &AudioSignal, claimed: &str) -> Result<VerificationDecision> {
        self.models.score_utterance(claimed, self.features(signal)?.view())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::generate_synthetic_corpus;
    use crate::pipeline::quick_config;

    #[test]
    fn two_speakers_are_separated() {
        let corpus = generate_synthetic_corpus(2, 4, 1.0, 5).unwrap();
        let (train, test): (Vec<&Utterance>, Vec<&Utterance>) =
            corpus.utterances().iter().partition(|u| !u.utterance_id.ends_with("u04"));
        let bundle = train_pipeline(&corpus.select(train), &quick_config(FeatureMode::MfccL1L2)).unwrap();
        let correct = test
            .iter()
            .filter(|u| bundle.identify(&u.signal).unwrap()[0].0 == u.speaker_id)
            .count();
        assert!(correct as f64 / test.len() as f64 > 0.5);
        assert_eq!(bundle.models.feature_dim(), 13 + 16 + 12);
    }

    #[test]
    fn one_speaker_fails_at_enrollment() {
        let corpus = generate_synthetic_corpus(2, 2, 0.5, 1).unwrap();
        let one = corpus.select(corpus.utterances_of("spk01"));
        let err = train_pipeline(&one, &quick_config(FeatureMode::Mfcc)).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: Stage::Enrollment, .. }), "{err}");
        assert!(err.to_string().contains("enrollment"));
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = generate_synthetic_corpus(2, 2, 0.6, 8).unwrap();
        let cfg = quick_config(FeatureMode::MfccL1);
        assert_eq!(train_pipeline(&corpus, &cfg).unwrap(), train_pipeline(&corpus, &cfg).unwrap());
    }

    #[test]
    fn divergence_keeps_its_stage() {
        let corpus = generate_synthetic_corpus(2, 2, 0.6, 8).unwrap();
        let mut cfg = quick_config(FeatureMode::MfccL2);
        cfg.pretrain.rbm1.learning_rate = 1e6;
        cfg.pretrain.rbm1.momentum = 0.0;
        let err = train_pipeline(&corpus, &cfg).unwrap_err();
        assert!(err.is_divergence(), "{err}");
        assert!(matches!(err, Error::Stage { stage: Stage::Pretrain, .. }));
    }

    #[test]
    fn labels_follow_sorted_ids() {
        let corpus = generate_synthetic_corpus(3, 1, 0.1, 2).unwrap();
        let mut utts: Vec<&Utterance> = corpus.utterances().iter().collect();
        utts.reverse();
        assert_eq!(speaker_labels(&utts), [2, 1, 0]);
    }

    #[test]
    fn shared_component_count() {
        assert_eq!(shared_components(64, [5000, 700].into_iter()), 64);
        assert_eq!(shared_components(64, [5000, 198].into_iter()), 19);
        assert_eq!(shared_components(64, [3].into_iter()), 1);
    }
}
