use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use walkdir::WalkDir;

use super::{read_wav, Corpus, Utterance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusLayout {
    /// Files named `<SpeakerID>_<utterance>.wav`, optionally under `train/` and `test/`.
    Elsdsr,
    /// One subdirectory per speaker.
    #[default]
    Generic,
}

impl FromStr for CorpusLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elsdsr" => Ok(Self::Elsdsr),
            "generic" => Ok(Self::Generic),
            other => Err(Error::Config(format!("unknown corpus layout {other:?}"))),
        }
    }
}

/// A file that was skipped while loading.
#[derive(Debug)]
pub struct LoadWarning {
    pub path: PathBuf,
    pub error: Error,
}

#[derive(Debug)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub warnings: Vec<LoadWarning>,
}

/// Loads every `.wav` under `root`, labeling speakers according to `layout`.
///
/// Unreadable files are skipped and reported in [`LoadedCorpus::warnings`];
/// loading fails only when a speaker is left with no utterances at all.
pub fn load_corpus(root: impl AsRef<Path>, layout: CorpusLayout) -> Result<LoadedCorpus> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        ));
    }

    let mut entries = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(path, e.into())
        })?;
        let path = entry.path();
        if !entry.file_type().is_file() || !is_wav(path) {
            continue;
        }
        let rel = path.strip_prefix(root).unwrap_or(path);
        if let Some(labels) = label(rel, layout) {
            entries.push((path.to_path_buf(), labels));
        }
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    if entries.is_empty() {
        return Err(Error::EmptyCorpus(root.to_path_buf()));
    }

    let results: Vec<_> = entries
        .par_iter()
        .map(|(path, _)| read_wav(path))
        .collect();

    let mut utterances = Vec::new();
    let mut warnings = Vec::new();
    let mut per_speaker: BTreeMap<&str, usize> = BTreeMap::new();
    for ((path, (speaker, utt)), result) in entries.iter().zip(results) {
        let count = per_speaker.entry(speaker.as_str()).or_default();
        match result {
            Ok(signal) => {
                *count += 1;
                utterances.push(Utterance::new(signal, speaker.clone(), utt.clone())?);
            }
            Err(error) => {
                log::warn!("skipping {}: {error}", path.display());
                warnings.push(LoadWarning {
                    path: path.clone(),
                    error,
                });
            }
        }
    }
    if let Some((speaker, _)) = per_speaker.iter().find(|(_, &n)| n == 0) {
        return Err(Error::SpeakerWithoutUtterances(speaker.to_string()));
    }

    Ok(LoadedCorpus {
        corpus: Corpus::new(utterances)?,
        warnings,
    })
}

fn is_wav(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

/// (speaker_id, utterance_id) for a path relative to the corpus root.
fn label(rel: &Path, layout: CorpusLayout) -> Option<(String, String)> {
    let utterance_id = rel.with_extension("").to_string_lossy().replace('\\', "/");
    let speaker = match layout {
        CorpusLayout::Elsdsr => {
            let stem = rel.file_stem()?.to_str()?;
            stem.split('_').next()?.to_string()
        }
        CorpusLayout::Generic => {
            let mut components = rel.components();
            let dir = components.next()?.as_os_str().to_str()?.to_string();
            // files directly under the root carry no speaker label
            components.next()?;
            dir
        }
    };
    (!speaker.is_empty()).then_some((speaker, utterance_id))
}
