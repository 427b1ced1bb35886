use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::config::{FeatureMode, PipelineConfig};
use super::features::{corpus_power, FeatureExtractor, Frontend, UtteranceFeatures};
use super::train::{enroll, fit_frontend, speaker_labels};
use crate::audio::{Corpus, Utterance};
use crate::error::{Error, Result, Stage, StageExt};
use crate::seed::{derive_seed, rng_for, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalKind {
    /// Rows vary the number of enrolled speakers.
    Speakers,
    /// Rows vary the number of training utterances per speaker.
    Utterances,
}

impl EvalKind {
    fn condition_name(self) -> &'static str {
        match self {
            Self::Speakers => "speakers",
            Self::Utterances => "utterances",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    /// Speaker count or training utterances per speaker, depending on the report kind.
    pub condition: usize,
    pub mode: FeatureMode,
    pub mean_acc: f64,
    /// Sample standard deviation across trials, 0 for a single trial.
    pub std_acc: f64,
    pub trials: usize,
    pub accuracies: Vec<f64>,
}

impl EvalRow {
    fn new(condition: usize, mode: FeatureMode, accuracies: Vec<f64>) -> Self {
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let std = if accuracies.len() > 1 {
            (accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            condition,
            mode,
            mean_acc: mean,
            std_acc: std,
            trials: accuracies.len(),
            accuracies,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub kind: EvalKind,
    pub rows: Vec<EvalRow>,
    pub runtime_s: f64,
    /// Configuration as `key = value` text.
    pub config: String,
}

impl EvalReport {
    /// Machine-readable records, one per row, behind `#` comment lines
    /// holding the configuration. Runtime is left out so that identical runs
    /// give identical files.
    pub fn data_string(&self) -> String {
        let mut out = String::from("# spkrec evaluation report\n");
        let _ = writeln!(out, "# kind = {}", self.kind.condition_name());
        for line in self.config.lines() {
            let _ = writeln!(out, "# {line}");
        }
        for row in &self.rows {
            let _ = writeln!(
                out,
                "condition={}:{} mode={} mean_acc={:.6} std_acc={:.6} trials={}",
                self.kind.condition_name(),
                row.condition,
                row.mode,
                row.mean_acc,
                row.std_acc,
                row.trials
            );
        }
        out
    }

    pub fn write_data(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.data_string()).map_err(|e| Error::io(path, e))
    }

    /// Aligned table for terminals.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>10}  {:<12} {:>9} {:>9} {:>6}",
            self.kind.condition_name(),
            "mode",
            "mean_acc",
            "std_acc",
            "trials"
        );
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{:>10}  {:<12} {:>9.4} {:>9.4} {:>6}",
                row.condition, row.mode.name(), row.mean_acc, row.std_acc, row.trials
            );
        }
        let _ = writeln!(out, "runtime {:.1} s", self.runtime_s);
        out
    }

    pub fn row(&self, condition: usize, mode: FeatureMode) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.condition == condition && r.mode == mode)
    }
}

/// Train/test utterances of one trial.
struct Split<'a> {
    train: Vec<&'a Utterance>,
    test: Vec<&'a Utterance>,
}

fn utterances_by_speaker(corpus: &Corpus) -> Vec<(&str, Vec<&Utterance>)> {
    corpus
        .speakers()
        .iter()
        .map(|s| (s.as_str(), corpus.utterances_of(s).collect()))
        .collect()
}

fn trial_seed(cfg: &PipelineConfig, condition_index: usize, trial: usize) -> u64 {
    derive_seed(derive_seed(cfg.seed, stream::TRIAL_BASE + condition_index as u64), trial as u64)
}

/// Accuracy of closed-set identification on `test`, one entry per mode.
fn run_trial(
    split: &Split<'_>,
    modes: &[FeatureMode],
    cfg: &PipelineConfig,
    shared: Option<&Frontend>,
) -> Result<Vec<f64>> {
    let sample_rate = split.train[0].signal.sample_rate_hz();
    let train_power = corpus_power(&split.train, cfg).stage(Stage::Framing)?;
    let test_power = corpus_power(&split.test, cfg).stage(Stage::Framing)?;

    let needs_frontend = modes.iter().any(|m| m.uses_dbn());
    let owned;
    let frontend = match (needs_frontend, shared) {
        (false, _) => None,
        (true, Some(fe)) => Some(fe),
        (true, None) => {
            owned = fit_frontend(&train_power, &speaker_labels(&split.train), cfg)?;
            Some(&owned)
        }
    };

    let extractor = FeatureExtractor::new(cfg, sample_rate, frontend).stage(Stage::Features)?;
    let features = |utts: &[&Utterance], power: &[Array2<f64>]| -> Result<Vec<UtteranceFeatures>> {
        utts.iter()
            .zip(power)
            .map(|(u, p)| extractor.utterance(u, p.view()))
            .collect::<Result<_>>()
            .stage(Stage::Features)
    };
    let train_feats = features(&split.train, &train_power)?;
    let test_feats = features(&split.test, &test_power)?;

    modes
        .iter()
        .map(|&mode| {
            let (standardizer, models) = enroll(&train_feats, mode, cfg)?;
            let mut correct = 0usize;
            for u in &test_feats {
                let x = standardizer.apply(u.assemble(mode)?.view())?;
                let ranked = models.identify(x.view())?;
                if ranked[0].0 == u.speaker_id {
                    correct += 1;
                } else {
                    log::debug!("{mode}: {} identified as {}; scores {ranked:?}", u.utterance_id, ranked[0].0);
                }
            }
            Ok(correct as f64 / test_feats.len() as f64)
        })
        .collect()
}

fn check_modes(modes: &[FeatureMode]) -> Result<()> {
    if modes.is_empty() {
        return Err(Error::Config("no feature modes requested".into()));
    }
    Ok(())
}

/// Trains the whitener and network once on `corpus` when the shared protocol is requested.
fn shared_frontend(corpus: &Corpus, modes: &[FeatureMode], cfg: &PipelineConfig) -> Result<Option<Frontend>> {
    if !cfg.shared_frontend || !modes.iter().any(|m| m.uses_dbn()) {
        return Ok(None);
    }
    let utts: Vec<&Utterance> = corpus.utterances().iter().collect();
    let power = corpus_power(&utts, cfg).stage(Stage::Framing)?;
    fit_frontend(&power, &speaker_labels(&utts), cfg).map(Some)
}

fn run_conditions<'a>(
    kind: EvalKind,
    counts: &[usize],
    modes: &[FeatureMode],
    cfg: &PipelineConfig,
    shared: Option<&Frontend>,
    split_for: impl Fn(usize, u64) -> Split<'a> + Sync,
    started: Instant,
) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(counts.len() * modes.len());
    for (ci, &count) in counts.iter().enumerate() {
        let per_trial: Vec<Vec<f64>> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let seed = trial_seed(cfg, ci, t);
                let split = split_for(count, seed);
                let trial_cfg = PipelineConfig { seed, ..cfg.clone() };
                run_trial(&split, modes, &trial_cfg, shared)
            })
            .collect::<Result<_>>()?;
        for (mi, &mode) in modes.iter().enumerate() {
            let accs: Vec<f64> = per_trial.iter().map(|t| t[mi]).collect();
            rows.push(EvalRow::new(count, mode, accs));
        }
        log::info!("{} = {count} done after {:.1} s", kind.condition_name(), started.elapsed().as_secs_f64());
    }
    Ok(EvalReport {
        kind,
        rows,
        runtime_s: started.elapsed().as_secs_f64(),
        config: cfg.to_kv_string(),
    })
}

/// Identification accuracy as the number of enrolled speakers varies.
///
/// Each trial samples `n` speakers and splits each one's utterances into a
/// `train_fraction` training share (rounded, at least one utterance on each
/// side) and a test share.
pub fn evaluate_speakers(
    corpus: &Corpus,
    cfg: &PipelineConfig,
    speaker_counts: &[usize],
    modes: &[FeatureMode],
) -> Result<EvalReport> {
    let started = Instant::now();
    cfg.validate()?;
    check_modes(modes)?;
    let by_speaker = utterances_by_speaker(corpus);
    for &n in speaker_counts {
        if n < 2 {
            return Err(Error::Config(format!("speaker count {n} is below 2")));
        }
        if n > by_speaker.len() {
            return Err(Error::InsufficientData(format!(
                "{n} speakers requested, corpus has {}",
                by_speaker.len()
            )));
        }
    }
    if let Some((id, _)) = by_speaker.iter().find(|(_, u)| u.len() < 2) {
        return Err(Error::InsufficientData(format!("speaker {id} needs at least two utterances")));
    }
    let shared = shared_frontend(corpus, modes, cfg)?;

    let split_for = |n: usize, seed: u64| {
        let mut rng = rng_for(seed, 0);
        let mut chosen: Vec<&(&str, Vec<&Utterance>)> = by_speaker.iter().collect();
        chosen.shuffle(&mut rng);
        chosen.truncate(n);
        chosen.sort_by_key(|(id, _)| *id);
        let mut split = Split { train: Vec::new(), test: Vec::new() };
        for (_, utts) in chosen {
            let mut utts = utts.clone();
            utts.shuffle(&mut rng);
            let n_train = ((cfg.train_fraction * utts.len() as f64).round() as usize).clamp(1, utts.len() - 1);
            split.train.extend_from_slice(&utts[..n_train]);
            split.test.extend_from_slice(&utts[n_train..]);
        }
        split
    };
    run_conditions(EvalKind::Speakers, speaker_counts, modes, cfg, shared.as_ref(), split_for, started)
}

/// Identification accuracy as the number of training utterances per speaker
/// varies. Each trial trains on exactly `k` utterances per speaker and tests
/// on the rest. `n_speakers` defaults to every speaker in the corpus.
pub fn evaluate_utterances(
    corpus: &Corpus,
    cfg: &PipelineConfig,
    utterance_counts: &[usize],
    modes: &[FeatureMode],
    n_speakers: Option<usize>,
) -> Result<EvalReport> {
    let started = Instant::now();
    cfg.validate()?;
    check_modes(modes)?;
    let by_speaker = utterances_by_speaker(corpus);
    let n_speakers = n_speakers.unwrap_or(by_speaker.len());
    if n_speakers < 2 || n_speakers > by_speaker.len() {
        return Err(Error::InsufficientData(format!(
            "{n_speakers} speakers requested, corpus has {}",
            by_speaker.len()
        )));
    }
    let max_k = utterance_counts.iter().copied().max().unwrap_or(0);
    if utterance_counts.contains(&0) {
        return Err(Error::Config("utterance counts must be positive".into()));
    }
    if let Some((id, u)) = by_speaker.iter().find(|(_, u)| u.len() <= max_k) {
        return Err(Error::InsufficientData(format!(
            "speaker {id} has {} utterances; {max_k} for training plus one for testing are needed",
            u.len()
        )));
    }
    let shared = shared_frontend(corpus, modes, cfg)?;

    let split_for = |k: usize, seed: u64| {
        let mut rng = rng_for(seed, 0);
        let mut chosen: Vec<&(&str, Vec<&Utterance>)> = by_speaker.iter().collect();
        chosen.shuffle(&mut rng);
        chosen.truncate(n_speakers);
        chosen.sort_by_key(|(id, _)| *id);
        let mut split = Split { train: Vec::new(), test: Vec::new() };
        for (_, utts) in chosen {
            let mut utts = utts.clone();
            utts.shuffle(&mut rng);
            split.train.extend_from_slice(&utts[..k]);
            split.test.extend_from_slice(&utts[k..]);
        }
        split
    };
    run_conditions(EvalKind::Utterances, utterance_counts, modes, cfg, shared.as_ref(), split_for, started)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::generate_synthetic_corpus;
    use crate::pipeline::quick_config;

    #[test]
    fn row_statistics() {
        let r = EvalRow::new(2, FeatureMode::Mfcc, vec![0.5, 1.0]);
        assert_eq!(r.mean_acc, 0.75);
        assert!((r.std_acc - 0.125f64.sqrt()).abs() < 1e-12);
        assert_eq!(EvalRow::new(2, FeatureMode::Mfcc, vec![0.3]).std_acc, 0.0);
    }

    #[test]
    fn report_layout_and_determinism() {
        let corpus = generate_synthetic_corpus(3, 3, 0.5, 6).unwrap();
        let cfg = PipelineConfig { trials: 2, ..quick_config(FeatureMode::Mfcc) };
        let modes = [FeatureMode::Mfcc, FeatureMode::MfccL1];
        let a = evaluate_speakers(&corpus, &cfg, &[2, 3], &modes).unwrap();
        assert_eq!(a.rows.len(), 4);
        assert!(a.rows.iter().all(|r| r.trials == 2 && r.std_acc >= 0.0 && (0.0..=1.0).contains(&r.mean_acc)));
        let b = evaluate_speakers(&corpus, &cfg, &[2, 3], &modes).unwrap();
        assert_eq!(a.data_string(), b.data_string());
        let data = a.data_string();
        let records: Vec<&str> = data.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(records.len(), 4);
        assert!(records[0].starts_with("condition=speakers:2 mode=mfcc mean_acc="));
    }

    #[test]
    fn splits_never_share_utterances() {
        let corpus = generate_synthetic_corpus(4, 5, 0.1, 2).unwrap();
        let by_speaker = utterances_by_speaker(&corpus);
        assert_eq!(by_speaker.len(), 4);
        let cfg = PipelineConfig::default();
        for t in 0..5 {
            let seed = trial_seed(&cfg, 0, t);
            let mut rng = rng_for(seed, 0);
            let mut utts = by_speaker[0].1.clone();
            utts.shuffle(&mut rng);
            let (train, test) = utts.split_at(4);
            assert!(train.iter().all(|a| test.iter().all(|b| a.utterance_id != b.utterance_id)));
        }
    }

    #[test]
    fn utterance_counts_are_checked() {
        let corpus = generate_synthetic_corpus(2, 3, 0.3, 1).unwrap();
        let cfg = quick_config(FeatureMode::Mfcc);
        assert!(evaluate_utterances(&corpus, &cfg, &[3], &[FeatureMode::Mfcc], None).is_err());
        assert!(evaluate_speakers(&corpus, &cfg, &[1], &[FeatureMode::Mfcc]).is_err());
        assert!(evaluate_speakers(&corpus, &cfg, &[3], &[FeatureMode::Mfcc]).is_err());
        let r = evaluate_utterances(&corpus, &PipelineConfig { trials: 1, ..cfg }, &[1, 2], &[FeatureMode::Mfcc], None)
            .unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.rows[0].trials, 1);
    }
}
