use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::dbn::{FineTuneConfig, PretrainConfig};
use crate::dsp::{FramingConfig, MfccConfig};
use crate::error::{Error, Result};
use crate::gmm::UBM_COMPONENTS;
use crate::rbm::CdConfig;

/// Which per-frame vectors are concatenated, always in `[MFCC | L1 | L2]` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureMode {
    Mfcc,
    MfccL1,
    MfccL2,
    MfccL1L2,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 4] = [Self::Mfcc, Self::MfccL1, Self::MfccL2, Self::MfccL1L2];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mfcc => "mfcc",
            Self::MfccL1 => "mfcc_l1",
            Self::MfccL2 => "mfcc_l2",
            Self::MfccL1L2 => "mfcc_l1_l2",
        }
    }

    pub fn uses_l1(self) -> bool {
        matches!(self, Self::MfccL1 | Self::MfccL1L2)
    }

    pub fn uses_l2(self) -> bool {
        matches!(self, Self::MfccL2 | Self::MfccL1L2)
    }

    pub fn uses_dbn(self) -> bool {
        self != Self::Mfcc
    }

    /// Concatenated dimension for the given component sizes.
    pub fn dim(self, mfcc: usize, l1: usize, l2: usize) -> usize {
        mfcc + if self.uses_l1() { l1 } else { 0 } + if self.uses_l2() { l2 } else { 0 }
    }

    /// Parses a comma-separated list such as `mfcc,mfcc_l1_l2`.
    pub fn parse_list(list: &str) -> Result<Vec<FeatureMode>> {
        list.split(',').map(|s| s.trim().parse()).collect()
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature mode {s:?}")))
    }
}

/// Whether L1/L2 come from the fine-tuned network or straight from pretraining.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSource {
    Finetuned,
    Pretrained,
}

impl FromStr for FeatureSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "finetuned" => Ok(Self::Finetuned),
            "pretrained" => Ok(Self::Pretrained),
            other => Err(Error::Config(format!("unknown feature source {other:?}"))),
        }
    }
}

impl fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Finetuned => "finetuned",
            Self::Pretrained => "pretrained",
        })
    }
}

/// Everything that controls training and evaluation.
///
/// The per-stage seeds inside `pretrain` and `finetune` are ignored; every
/// stage draws its seed from `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub framing: FramingConfig,
    pub mfcc: MfccConfig,
    pub pca_components: usize,
    pub whiten_epsilon: f64,
    pub pretrain: PretrainConfig,
    pub finetune: FineTuneConfig,
    pub feature_source: FeatureSource,
    pub gmm_components: usize,
    pub em_max_iters: usize,
    pub em_tol: f64,
    pub feature_mode: FeatureMode,
    pub trials: usize,
    pub seed: u64,
    pub threshold: f64,
    /// Train the whitener and network once on the whole corpus instead of per trial.
    pub shared_frontend: bool,
    /// Share of each speaker's utterances used for training in speaker-count runs.
    pub train_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            framing: FramingConfig::default(),
            mfcc: MfccConfig::default(),
            pca_components: 128,
            whiten_epsilon: 1e-5,
            pretrain: PretrainConfig::default(),
            finetune: FineTuneConfig::default(),
            feature_source: FeatureSource::Finetuned,
            gmm_components: UBM_COMPONENTS,
            em_max_iters: 100,
            em_tol: 1e-3,
            feature_mode: FeatureMode::MfccL1L2,
            trials: 15,
            seed: 0,
            threshold: 0.0,
            shared_frontend: false,
            train_fraction: 0.7,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {key} = {value:?}")))
}

fn set_cd(cd: &mut CdConfig, field: &str, key: &str, value: &str) -> Result<()> {
    match field {
        "k" => cd.k = parse(key, value)?,
        "learning_rate" => cd.learning_rate = parse(key, value)?,
        "epochs" => cd.epochs = parse(key, value)?,
        "batch_size" => cd.batch_size = parse(key, value)?,
        "momentum" => cd.momentum = parse(key, value)?,
        "final_momentum" => cd.final_momentum = parse(key, value)?,
        "momentum_switch_epoch" => cd.momentum_switch_epoch = parse(key, value)?,
        "weight_decay" => cd.weight_decay = parse(key, value)?,
        _ => return Err(Error::Config(format!("unknown key {key:?}"))),
    }
    Ok(())
}

fn cd_lines(prefix: &str, cd: &CdConfig) -> Vec<String> {
    vec![
        format!("{prefix}.k = {}", cd.k),
        format!("{prefix}.learning_rate = {}", cd.learning_rate),
        format!("{prefix}.epochs = {}", cd.epochs),
        format!("{prefix}.batch_size = {}", cd.batch_size),
        format!("{prefix}.momentum = {}", cd.momentum),
        format!("{prefix}.final_momentum = {}", cd.final_momentum),
        format!("{prefix}.momentum_switch_epoch = {}", cd.momentum_switch_epoch),
        format!("{prefix}.weight_decay = {}", cd.weight_decay),
    ]
}

impl PipelineConfig {
    /// Sets one field from its flat key, e.g. `rbm1.learning_rate` or `dbn_hidden`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        if let Some((section, field)) = key.split_once('.') {
            return match section {
                "rbm1" => set_cd(&mut self.pretrain.rbm1, field, key, value),
                "rbm2" => set_cd(&mut self.pretrain.rbm2, field, key, value),
                "finetune" => {
                    let ft = &mut self.finetune;
                    match field {
                        "learning_rate" => ft.learning_rate = parse(key, value)?,
                        "epochs" => ft.epochs = parse(key, value)?,
                        "batch_size" => ft.batch_size = parse(key, value)?,
                        "patience" => ft.patience = parse(key, value)?,
                        "validation_fraction" => ft.validation_fraction = parse(key, value)?,
                        _ => return Err(Error::Config(format!("unknown key {key:?}"))),
                    }
                    Ok(())
                }
                _ => Err(Error::Config(format!("unknown key {key:?}"))),
            };
        }
        match key {
            "window_ms" => self.framing.window_ms = parse(key, value)?,
            "step_ms" => self.framing.step_ms = parse(key, value)?,
            "fft_size" => self.framing.fft_size = parse(key, value)?,
            "n_mel_filters" => self.mfcc.n_mel_filters = parse(key, value)?,
            "n_cepstra" => self.mfcc.n_coeffs_total = parse(key, value)?,
            "keep_first" => self.mfcc.keep_first = parse(key, value)?,
            "keep_last" => self.mfcc.keep_last = parse(key, value)?,
            "mel_low_hz" => self.mfcc.mel_low_hz = parse(key, value)?,
            "mel_high_hz" => self.mfcc.mel_high_hz = parse(key, value)?,
            "pca_components" => self.pca_components = parse(key, value)?,
            "whiten_epsilon" => self.whiten_epsilon = parse(key, value)?,
            "dbn_hidden" => {
                let sizes: Vec<usize> = value
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_>>()?;
                self.pretrain.hidden = sizes
                    .try_into()
                    .map_err(|_| Error::Config(format!("dbn_hidden needs two sizes, got {value:?}")))?;
            }
            "weight_std" => self.pretrain.weight_std = parse(key, value)?,
            "feature_source" => self.feature_source = value.parse()?,
            "gmm_components" => self.gmm_components = parse(key, value)?,
            "em_max_iters" => self.em_max_iters = parse(key, value)?,
            "em_tol" => self.em_tol = parse(key, value)?,
            "feature_mode" => self.feature_mode = value.parse()?,
            "trials" => self.trials = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "threshold" => self.threshold = parse(key, value)?,
            "shared_frontend" => self.shared_frontend = parse(key, value)?,
            "train_fraction" => self.train_fraction = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(key.trim(), value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv_str(&text)
    }

    /// Every field as `key = value` lines; [`Self::from_kv_str`] reads it back exactly.
    pub fn to_kv_string(&self) -> String {
        let mut lines = vec![
            format!("seed = {}", self.seed),
            format!("trials = {}", self.trials),
            format!("feature_mode = {}", self.feature_mode),
            format!("feature_source = {}", self.feature_source),
            format!("window_ms = {}", self.framing.window_ms),
            format!("step_ms = {}", self.framing.step_ms),
            format!("fft_size = {}", self.framing.fft_size),
            format!("n_mel_filters = {}", self.mfcc.n_mel_filters),
            format!("n_cepstra = {}", self.mfcc.n_coeffs_total),
            format!("keep_first = {}", self.mfcc.keep_first),
            format!("keep_last = {}", self.mfcc.keep_last),
            format!("mel_low_hz = {}", self.mfcc.mel_low_hz),
            format!("mel_high_hz = {}", self.mfcc.mel_high_hz),
            format!("pca_components = {}", self.pca_components),
            format!("whiten_epsilon = {}", self.whiten_epsilon),
            format!("dbn_hidden = {},{}", self.pretrain.hidden[0], self.pretrain.hidden[1]),
            format!("weight_std = {}", self.pretrain.weight_std),
        ];
        lines.extend(cd_lines("rbm1", &self.pretrain.rbm1));
        lines.extend(cd_lines("rbm2", &self.pretrain.rbm2));
        let ft = &self.finetune;
        lines.extend([
            format!("finetune.learning_rate = {}", ft.learning_rate),
            format!("finetune.epochs = {}", ft.epochs),
            format!("finetune.batch_size = {}", ft.batch_size),
            format!("finetune.patience = {}", ft.patience),
            format!("finetune.validation_fraction = {}", ft.validation_fraction),
            format!("gmm_components = {}", self.gmm_components),
            format!("em_max_iters = {}", self.em_max_iters),
            format!("em_tol = {}", self.em_tol),
            format!("threshold = {}", self.threshold),
            format!("shared_frontend = {}", self.shared_frontend),
            format!("train_fraction = {}", self.train_fraction),
        ]);
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.mfcc.validate()?;
        self.pretrain.rbm1.validate()?;
        self.pretrain.rbm2.validate()?;
        self.finetune.validate()?;
        if self.pca_components == 0 {
            return Err(Error::Config("pca_components must be positive".into()));
        }
        if self.gmm_components == 0 || self.em_max_iters == 0 {
            return Err(Error::Config("gmm_components and em_max_iters must be positive".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if self.threshold.is_nan() {
            return Err(Error::Config("threshold is NaN".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction {} outside (0, 1)", self.train_fraction)));
        }
        Ok(())
    }

    /// Feature dimension of the configured mode.
    pub fn feature_dim(&self) -> usize {
        self.feature_mode
            .dim(self.mfcc.n_kept(), self.pretrain.hidden[0], self.pretrain.hidden[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_dimensions() {
        let cfg = PipelineConfig::default();
        let dims: Vec<usize> = FeatureMode::ALL
            .iter()
            .map(|m| PipelineConfig { feature_mode: *m, ..cfg.clone() }.feature_dim())
            .collect();
        assert_eq!(dims, [13, 213, 213, 413]);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in FeatureMode::ALL {
            assert_eq!(m.name().parse::<FeatureMode>().unwrap(), m);
        }
        assert_eq!(
            FeatureMode::parse_list("mfcc, mfcc_l1_l2").unwrap(),
            [FeatureMode::Mfcc, FeatureMode::MfccL1L2]
        );
        assert!("l1".parse::<FeatureMode>().is_err());
    }

    #[test]
    fn kv_round_trip() {
        let mut cfg = PipelineConfig {
            seed: 99,
            ..PipelineConfig::default()
        };
        cfg.pretrain.rbm1.learning_rate = 0.0025;
        cfg.pretrain.hidden = [50, 40];
        cfg.finetune.validation_fraction = 0.0;
        cfg.threshold = -0.125;
        cfg.feature_source = FeatureSource::Pretrained;
        cfg.shared_frontend = true;
        let back = PipelineConfig::from_kv_str(&cfg.to_kv_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn comments_and_defaults() {
        let cfg = PipelineConfig::from_kv_str("# desk run\n\ntrials = 5\nfeature_mode=mfcc\n").unwrap();
        assert_eq!(cfg.trials, 5);
        assert_eq!(cfg.feature_mode, FeatureMode::Mfcc);
        assert_eq!(cfg.gmm_components, 64);
    }

    #[test]
    fn bad_lines_are_rejected() {
        assert!(PipelineConfig::from_kv_str("trials 5").is_err());
        assert!(PipelineConfig::from_kv_str("colour = blue").is_err());
        assert!(PipelineConfig::from_kv_str("trials = many").is_err());
        assert!(PipelineConfig::from_kv_str("trials = 0").is_err());
        assert!(PipelineConfig::from_kv_str("dbn_hidden = 1,2,3").is_err());
    }
}
