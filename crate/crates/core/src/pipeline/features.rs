use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::config::{FeatureMode, PipelineConfig};
use crate::audio::{AudioSignal, Corpus, Utterance};
use crate::dbn::DbnModel;
use crate::dsp::{frame_signal, log_power, power_spectrum, Mfcc, PcaWhitener};
use crate::error::{Error, Result};

/// The learned front end: whitening followed by the two-layer network.
#[derive(Debug, Clone, PartialEq)]
pub struct Frontend {
    pub whitener: PcaWhitener,
    pub dbn: DbnModel,
}

/// Per-frame feature matrices of one utterance, one row per frame.
///
/// `whitened`, `l1` and `l2` are present only when a front end was supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceFeatures {
    pub speaker_id: String,
    pub utterance_id: String,
    pub mfcc: Array2<f64>,
    pub whitened: Option<Array2<f64>>,
    pub l1: Option<Array2<f64>>,
    pub l2: Option<Array2<f64>>,
}

impl UtteranceFeatures {
    pub fn n_frames(&self) -> usize {
        self.mfcc.nrows()
    }

    /// Concatenates `[MFCC | L1 | L2]` as selected by `mode`.
    pub fn assemble(&self, mode: FeatureMode) -> Result<Array2<f64>> {
        let missing = || Error::Config(format!("feature mode {mode} needs network activations"));
        let mut parts = vec![self.mfcc.view()];
        if mode.uses_l1() {
            parts.push(self.l1.as_ref().ok_or_else(missing)?.view());
        }
        if mode.uses_l2() {
            parts.push(self.l2.as_ref().ok_or_else(missing)?.view());
        }
        Ok(concatenate(Axis(1), &parts).expect("equal frame counts"))
    }
}

/// Linear power spectra of a signal, one row per frame.
pub(crate) fn power_frames(signal: &AudioSignal, cfg: &PipelineConfig) -> Result<Array2<f64>> {
    let frames = frame_signal(signal, &cfg.framing)?;
    power_spectrum(frames.view(), cfg.framing.fft_size)
}

/// Power spectra of every utterance, computed in parallel and returned in order.
pub(crate) fn corpus_power(utterances: &[&Utterance], cfg: &PipelineConfig) -> Result<Vec<Array2<f64>>> {
    utterances
        .par_iter()
        .map(|u| power_frames(&u.signal, cfg))
        .collect()
}

/// Turns power spectra into feature matrices with an optional front end.
pub(crate) struct FeatureExtractor<'a> {
    pub mfcc: Mfcc,
    pub frontend: Option<&'a Frontend>,
}

impl<'a> FeatureExtractor<'a> {
    pub fn new(cfg: &PipelineConfig, sample_rate_hz: u32, frontend: Option<&'a Frontend>) -> Result<Self> {
        let mfcc = Mfcc::new(cfg.mfcc, sample_rate_hz, cfg.framing.fft_size)?;
        if let Some(fe) = frontend {
            if fe.whitener.input_dim() != cfg.framing.n_bins() {
                return Err(Error::DimensionMismatch {
                    expected: cfg.framing.n_bins(),
                    found: fe.whitener.input_dim(),
                });
            }
            if fe.dbn.input_dim() != fe.whitener.output_dim() {
                return Err(Error::DimensionMismatch {
                    expected: fe.whitener.output_dim(),
                    found: fe.dbn.input_dim(),
                });
            }
        }
        Ok(Self { mfcc, frontend })
    }

    /// Features of one utterance from its power spectra.
    pub fn compute(&self, speaker_id: &str, utterance_id: &str, power: ArrayView2<'_, f64>) -> Result<UtteranceFeatures> {
        let mfcc = self.mfcc.compute_batch(power)?;
        let (whitened, l1, l2) = match self.frontend {
            Some(fe) => {
                let whitened = fe.whitener.whiten_batch(log_power(power).view())?;
                let (l1, l2) = fe.dbn.extract_features(whitened.view())?;
                (Some(whitened), Some(l1), Some(l2))
            }
            None => (None, None, None),
        };
        Ok(UtteranceFeatures {
            speaker_id: speaker_id.to_owned(),
            utterance_id: utterance_id.to_owned(),
            mfcc,
            whitened,
            l1,
            l2,
        })
    }

    pub fn utterance(&self, u: &Utterance, power: ArrayView2<'_, f64>) -> Result<UtteranceFeatures> {
        self.compute(&u.speaker_id, &u.utterance_id, power)
    }
}

/// Feature matrices for every utterance of `corpus`, in corpus order.
///
/// Without a front end only the MFCC part is filled in.
pub fn build_features(
    corpus: &Corpus,
    cfg: &PipelineConfig,
    frontend: Option<&Frontend>,
) -> Result<Vec<UtteranceFeatures>> {
    let Some(sr) = corpus.sample_rate_hz() else {
        return Ok(Vec::new());
    };
    let extractor = FeatureExtractor::new(cfg, sr, frontend)?;
    let utterances: Vec<&Utterance> = corpus.utterances().iter().collect();
    let power = corpus_power(&utterances, cfg)?;
    utterances
        .par_iter()
        .zip(power.par_iter())
        .map(|(u, p)| extractor.utterance(u, p.view()))
        .collect()
}

/// Per-dimension affine map to zero mean and unit variance on its fitting set.
/// Constant dimensions are only centred.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<'_, f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::InsufficientData("no frames to standardize".into()));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let std = x.var_axis(Axis(0), 0.0).mapv(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.ncols(),
            });
        }
        Ok((&x - &self.mean) / &self.std)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dbn::{DenseLayer, Provenance};
    use crate::dsp::fit_whitener;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn one_second_corpus() -> Corpus {
        let samples: Vec<f64> = (0..16000).map(|n| (n as f64 * 0.07).sin() * 0.4).collect();
        let signal = AudioSignal::new(samples, 16000).unwrap();
        Corpus::new(vec![Utterance::new(signal, "a", "a/1").unwrap()]).unwrap()
    }

    fn zero_frontend(cfg: &PipelineConfig) -> Frontend {
        let bins = cfg.framing.n_bins();
        let frames = Array2::from_shape_fn((300, bins), |(i, j)| ((i * 31 + j * 17) % 23) as f64 + (j as f64).sin());
        Frontend {
            whitener: fit_whitener(frames.view(), cfg.pca_components, cfg.whiten_epsilon).unwrap(),
            dbn: DbnModel::new(
                DenseLayer::zeros(cfg.pca_components, cfg.pretrain.hidden[0]),
                DenseLayer::zeros(cfg.pretrain.hidden[0], cfg.pretrain.hidden[1]),
                Provenance::Pretrained,
            )
            .unwrap(),
        }
    }

    #[test]
    fn one_second_gives_98_frames_with_mode_dimensions() {
        let cfg = PipelineConfig::default();
        let fe = zero_frontend(&cfg);
        let feats = build_features(&one_second_corpus(), &cfg, Some(&fe)).unwrap();
        assert_eq!(feats.len(), 1);
        let f = &feats[0];
        assert_eq!(f.n_frames(), 98);
        assert_eq!(f.whitened.as_ref().unwrap().ncols(), 128);
        let dims: Vec<usize> = FeatureMode::ALL.iter().map(|&m| f.assemble(m).unwrap().ncols()).collect();
        assert_eq!(dims, [13, 213, 213, 413]);
        let full = f.assemble(FeatureMode::MfccL1L2).unwrap();
        assert_eq!(full.slice(ndarray::s![.., ..13]), f.mfcc);
    }

    #[test]
    fn mfcc_only_without_frontend() {
        let cfg = PipelineConfig::default();
        let feats = build_features(&one_second_corpus(), &cfg, None).unwrap();
        assert_eq!(feats[0].assemble(FeatureMode::Mfcc).unwrap().ncols(), 13);
        assert!(feats[0].assemble(FeatureMode::MfccL1).is_err());
    }

    #[test]
    fn standardizer_moments() {
        let x = array![[1.0, 5.0], [3.0, 5.0], [5.0, 5.0]];
        let s = Standardizer::fit(x.view()).unwrap();
        let z = s.apply(x.view()).unwrap();
        assert_abs_diff_eq!(z.column(0).mean().unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z.column(0).var(0.0), 1.0, epsilon = 1e-12);
        assert!(z.column(1).iter().all(|&v| v == 0.0));
        assert!(s.apply(array![[1.0]].view()).is_err());
    }
}
