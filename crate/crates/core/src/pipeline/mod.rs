//! End-to-end training, inference and evaluation on a corpus.

mod bundle;
mod config;
mod eval;
mod features;
mod train;

pub use config::{FeatureMode, FeatureSource, PipelineConfig};
pub use eval::{evaluate_speakers, evaluate_utterances, EvalKind, EvalReport, EvalRow};
pub use features::{build_features, Frontend, Standardizer, UtteranceFeatures};
pub use train::{train_pipeline, ModelBundle};

/// Small, fast configuration for unit tests.
#[cfg(test)]
pub(crate) fn quick_config(mode: FeatureMode) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        feature_mode: mode,
        pca_components: 24,
        gmm_components: 8,
        em_max_iters: 30,
        seed: 21,
        ..PipelineConfig::default()
    };
    cfg.pretrain.hidden = [16, 12];
    cfg.pretrain.rbm1.epochs = 3;
    cfg.pretrain.rbm2.epochs = 3;
    cfg.finetune.epochs = 3;
    cfg
}
