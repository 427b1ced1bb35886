//! Speaker recognition from MFCCs and DBN-learned spectral features, scored
//! with Gaussian mixture models against a universal background model.
//!
//! The pipeline runs framing, PCA whitening, a two-layer network pretrained as
//! RBMs and fine-tuned on speaker labels, feature assembly, per-speaker EM and
//! log-likelihood-ratio scoring. [`pipeline::train_pipeline`] runs every stage;
//! the modules expose each stage on its own.
//!
//! ```
//! use spkrec::audio::generate_synthetic_corpus;
//! use spkrec::pipeline::{train_pipeline, FeatureMode, PipelineConfig};
//!
//! let corpus = generate_synthetic_corpus(2, 2, 0.5, 0)?;
//! let cfg = PipelineConfig { feature_mode: FeatureMode::Mfcc, gmm_components: 4, ..Default::default() };
//! let bundle = train_pipeline(&corpus, &cfg)?;
//! let ranked = bundle.identify(&corpus.utterances()[0].signal)?;
//! assert_eq!(ranked.len(), 2);
//! # Ok::<(), spkrec::Error>(())
//! ```

pub mod audio;
pub mod dbn;
pub mod dsp;
pub mod error;
pub mod gmm;
pub mod pipeline;
pub mod rbm;
mod seed;

pub use error::{Error, Result, Stage};

/// Runs the guide's code blocks as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/library.md")]
    mod library {}
    #[doc = include_str!("../../../book/src/components.md")]
    mod components {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/bundle.md")]
    mod bundle {}
}
