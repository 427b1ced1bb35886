use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spkrec::audio::{generate_synthetic_corpus, load_corpus, read_wav, write_wav, Corpus, CorpusLayout};
use spkrec::pipeline::{
    evaluate_speakers, evaluate_utterances, train_pipeline, EvalReport, FeatureMode, ModelBundle, PipelineConfig,
};
use spkrec::Error;

/// Speaker recognition with MFCC and DBN-learned features scored by GMM-UBM.
#[derive(Debug, Parser)]
#[command(name = "spkrec", version)]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic corpus, one subdirectory per speaker.
    Synth {
        #[arg(long, default_value_t = 5)]
        speakers: usize,
        #[arg(long, default_value_t = 8)]
        utterances: usize,
        /// Utterance length in seconds.
        #[arg(long, default_value_t = 2.0)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model bundle on a corpus.
    Train {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        config: ConfigArgs,
        /// Feature mode of the trained models.
        #[arg(long)]
        mode: Option<FeatureMode>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank enrolled speakers for a recording.
    Identify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        wav: PathBuf,
        /// Print only the best N speakers.
        #[arg(long)]
        top: Option<usize>,
    },
    /// Accept or reject a claimed identity for a recording.
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        claim: String,
    },
    /// Identification accuracy against the number of enrolled speakers.
    EvalSpeakers {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated speaker counts.
        #[arg(long, value_delimiter = ',', required = true)]
        counts: Vec<usize>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Identification accuracy against the number of training utterances per speaker.
    EvalUtterances {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated training utterance counts.
        #[arg(long, value_delimiter = ',', required = true)]
        counts: Vec<usize>,
        /// Number of speakers per trial (default: all).
        #[arg(long)]
        speakers: Option<usize>,
        #[command(flatten)]
        report: ReportArgs,
    },
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// Corpus root directory.
    #[arg(long)]
    corpus: PathBuf,
    /// `generic` (one directory per speaker) or `elsdsr` (speaker id in the file name).
    #[arg(long, default_value = "generic")]
    layout: CorpusLayout,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set gmm_components=32`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Comma-separated feature modes (default: all four).
    #[arg(long, value_delimiter = ',')]
    modes: Vec<FeatureMode>,
    /// Report data file.
    #[arg(long, default_value = "report.txt")]
    report: PathBuf,
}

impl ConfigArgs {
    fn resolve(&self) -> spkrec::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        for item in &self.overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {item:?} is not KEY=VALUE")))?;
            cfg.set(key.trim(), value.trim())?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ReportArgs {
    fn modes(&self) -> Vec<FeatureMode> {
        if self.modes.is_empty() {
            FeatureMode::ALL.to_vec()
        } else {
            self.modes.clone()
        }
    }
}

fn load(args: &CorpusArgs) -> spkrec::Result<Corpus> {
    let loaded = load_corpus(&args.corpus, args.layout)?;
    for w in &loaded.warnings {
        log::warn!("skipped {}: {}", w.path.display(), w.error);
    }
    Ok(loaded.corpus)
}

fn emit(report: &EvalReport, path: &Path) -> spkrec::Result<()> {
    report.write_data(path)?;
    print!("{}", report.table());
    log::info!("report written to {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> spkrec::Result<()> {
    match cli.command {
        Command::Synth {
            speakers,
            utterances,
            duration,
            seed,
            out,
        } => {
            let corpus = generate_synthetic_corpus(speakers, utterances, duration, seed)?;
            for u in corpus.utterances() {
                let path = out.join(format!("{}.wav", u.utterance_id));
                if let Some(dir) = path.parent() {
                    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                        path: dir.to_owned(),
                        source: e,
                    })?;
                }
                write_wav(&path, &u.signal)?;
            }
            println!("wrote {} utterances of {} speakers to {}", corpus.len(), speakers, out.display());
        }
        Command::Train {
            corpus,
            config,
            mode,
            out,
        } => {
            let mut cfg = config.resolve()?;
            if let Some(mode) = mode {
                cfg.feature_mode = mode;
            }
            let corpus = load(&corpus)?;
            let bundle = train_pipeline(&corpus, &cfg)?;
            bundle.save(&out)?;
            println!(
                "trained {} speakers in mode {}, bundle written to {}",
                bundle.models.len(),
                cfg.feature_mode,
                out.display()
            );
        }
        Command::Identify { model, wav, top } => {
            let bundle = ModelBundle::load(&model)?;
            let signal = read_wav(&wav)?;
            let ranked = bundle.identify(&signal)?;
            let norm = bundle.models.normalization();
            println!("{:>4}  {:<16} {:>12} {:>10}", "rank", "speaker", "llr", "confidence");
            for (i, (id, llr)) in ranked.iter().take(top.unwrap_or(usize::MAX)).enumerate() {
                println!("{:>4}  {:<16} {:>12.5} {:>10.4}", i + 1, id, llr, norm.confidence(*llr));
            }
        }
        Command::Verify { model, wav, claim } => {
            let bundle = ModelBundle::load(&model)?;
            let signal = read_wav(&wav)?;
            let d = bundle.verify(&signal, &claim)?;
            println!(
                "claim={} decision={} llr={:.5} confidence={:.4} threshold={}",
                claim,
                if d.accept { "accept" } else { "reject" },
                d.llr,
                d.confidence,
                d.threshold
            );
        }
        Command::EvalSpeakers {
            corpus,
            config,
            counts,
            report,
        } => {
            let cfg = config.resolve()?;
            let corpus = load(&corpus)?;
            let r = evaluate_speakers(&corpus, &cfg, &counts, &report.modes())?;
            emit(&r, &report.report)?;
        }
        Command::EvalUtterances {
            corpus,
            config,
            counts,
            speakers,
            report,
        } => {
            let cfg = config.resolve()?;
            let corpus = load(&corpus)?;
            let r = evaluate_utterances(&corpus, &cfg, &counts, &report.modes(), speakers)?;
            emit(&r, &report.report)?;
        }
    }
    Ok(())
}

/// 1 for bad arguments or configuration, 3 for numerical divergence, 2 for any other data error.
fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Config(_) => 1,
        Error::Divergence(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
