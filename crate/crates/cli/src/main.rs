use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use wordbag::pipeline::{
    best_alpha, files, heuristic_alpha, pl_wer, sweep_alpha, sweep_vocab, Dataset, PipelineConfig,
    Workspace,
};
use wordbag::synthdata::SyntheticSample;
use wordbag::unkfill::FillStrategy;
use wordbag::worddecode::parse_pseudo_labels;

#[derive(Parser)]
#[command(
    name = "wordbag",
    version,
    about = "Weakly supervised recognition from bag-of-words labels"
)]
struct Cli {
    /// Flat TOML config; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic train/dev/LM corpus into the dataset directory.
    GenData,
    /// Stage 1: train the word model on bags of words.
    TrainWord,
    /// Stage 2: greedy pseudo-labels for the train split.
    Decode,
    /// Train the n-gram LM on the text corpus.
    TrainLm,
    /// Stage 3: replace or remove <unk> tokens in the pseudo-labels.
    FillUnk {
        #[arg(long)]
        strategy: Option<FillStrategy>,
        #[arg(long)]
        beam: Option<usize>,
    },
    /// Stage 4: train the letter model with CTC.
    TrainCtc,
    /// Score a model or a pseudo-label file against references.
    EvalWer {
        #[arg(long, value_enum, default_value = "word")]
        model: ModelKind,
        #[arg(long, value_enum, default_value = "dev")]
        split: Split,
        /// Pseudo-label file (relative to the run directory unless absolute).
        #[arg(long)]
        pl: Option<PathBuf>,
    },
    /// All stages end to end.
    RunAll,
    /// Stage-1 dev WER over a list of blank priors.
    SweepAlpha {
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])]
        alphas: Vec<f64>,
    },
    /// Stage-1 dev WER and oracle WER over nested vocabulary sizes.
    SweepVocab {
        #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 20, 30, 35])]
        sizes: Vec<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Word,
    Letter,
    Pl,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Dev,
}

/// One flag per config key.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long, global = true)]
    dataset_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    top_k: Option<usize>,
    #[arg(long, global = true)]
    hidden: Option<usize>,
    #[arg(long, global = true)]
    kernel: Option<usize>,
    #[arg(long, global = true)]
    stride: Option<usize>,
    #[arg(long, global = true)]
    depth: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    word_epochs: Option<usize>,
    #[arg(long, global = true)]
    letter_hidden: Option<usize>,
    #[arg(long, global = true)]
    letter_kernel: Option<usize>,
    #[arg(long, global = true)]
    letter_depth: Option<usize>,
    #[arg(long, global = true)]
    letter_upsample: Option<usize>,
    #[arg(long, global = true)]
    letter_learning_rate: Option<f64>,
    #[arg(long, global = true)]
    ctc_epochs: Option<usize>,
    #[arg(long, global = true)]
    gold_ctc: Option<bool>,
    #[arg(long, global = true)]
    bag_length_filter: Option<bool>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    grad_clip: Option<f64>,
    #[arg(long, global = true)]
    cosine_decay: Option<bool>,
    #[arg(long, global = true)]
    lm_order: Option<usize>,
    #[arg(long, global = true)]
    lm_smoothing: Option<f64>,
    #[arg(long, global = true)]
    fill_strategy: Option<FillStrategy>,
    #[arg(long, global = true)]
    beam_width: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    resume: Option<bool>,
    #[arg(long, global = true)]
    data_seed: Option<u64>,
    #[arg(long, global = true)]
    vocab_words: Option<usize>,
    #[arg(long, global = true)]
    oov_words: Option<usize>,
    #[arg(long, global = true)]
    features: Option<usize>,
    #[arg(long, global = true)]
    min_word_frames: Option<usize>,
    #[arg(long, global = true)]
    max_word_frames: Option<usize>,
    #[arg(long, global = true)]
    min_silence_frames: Option<usize>,
    #[arg(long, global = true)]
    max_silence_frames: Option<usize>,
    #[arg(long, global = true)]
    noise: Option<f64>,
    #[arg(long, global = true)]
    min_sentence_words: Option<usize>,
    #[arg(long, global = true)]
    max_sentence_words: Option<usize>,
    #[arg(long, global = true)]
    train_size: Option<usize>,
    #[arg(long, global = true)]
    dev_size: Option<usize>,
    #[arg(long, global = true)]
    lm_sentences: Option<usize>,
}

macro_rules! apply {
    ($src:expr, $dst:expr, $($field:ident),* $(,)?) => {
        $(if let Some(v) = $src.$field.take() { $dst.$field = v; })*
    };
}

impl Overrides {
    fn apply(mut self, cfg: &mut PipelineConfig) {
        if let Some(a) = self.alpha.take() {
            cfg.alpha = Some(a);
        }
        apply!(
            self,
            cfg,
            dataset_dir,
            out_dir,
            top_k,
            hidden,
            kernel,
            stride,
            depth,
            learning_rate,
            word_epochs,
            letter_hidden,
            letter_kernel,
            letter_depth,
            letter_upsample,
            letter_learning_rate,
            ctc_epochs,
            gold_ctc,
            bag_length_filter,
            batch_size,
            grad_clip,
            cosine_decay,
            lm_order,
            lm_smoothing,
            fill_strategy,
            beam_width,
            seed,
            resume,
            data_seed,
            vocab_words,
            oov_words,
            features,
            min_word_frames,
            max_word_frames,
            min_silence_frames,
            max_silence_frames,
            noise,
            min_sentence_words,
            max_sentence_words,
            train_size,
            dev_size,
            lm_sentences,
        );
    }
}

fn load_config(path: Option<&PathBuf>, overrides: Overrides) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn split(ws: &Workspace, split: Split) -> &[SyntheticSample] {
    match split {
        Split::Train => &ws.dataset.train,
        Split::Dev => &ws.dataset.dev,
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_ref(), cli.overrides)?;
    if let Command::FillUnk { strategy, beam } = &cli.command {
        if let Some(s) = strategy {
            cfg.fill_strategy = *s;
        }
        if let Some(b) = beam {
            cfg.beam_width = *b;
        }
        cfg.validate()?;
    }
    if let Command::GenData = cli.command {
        let dataset = Dataset::generate(&cfg)?;
        dataset.save(&cfg.dataset_dir)?;
        println!(
            "wrote {} train, {} dev, {} LM sentences to {}",
            dataset.train.len(),
            dataset.dev.len(),
            dataset.lm_corpus.len(),
            cfg.dataset_dir.display()
        );
        return Ok(());
    }

    let ws = Workspace::open(cfg)?;
    match cli.command {
        Command::GenData => unreachable!(),
        Command::TrainWord => {
            let (_, record) = ws.train_word()?;
            print_json(&record)?;
        }
        Command::Decode => {
            let pls = ws.decode(&ws.load_word_model()?)?;
            println!("pl_train_wer {:.6}", pl_wer(&pls, &ws.dataset.train)?);
        }
        Command::TrainLm => {
            let lm = ws.train_lm()?;
            println!(
                "trained {}-gram LM over {} words",
                lm.order(),
                lm.vocabulary().len()
            );
        }
        Command::FillUnk { .. } => {
            let pls = ws.load_pls(files::PL_GREEDY)?;
            let lm = ws.load_lm()?;
            let (_, report) = ws.fill(&pls, &lm, ws.config.fill_strategy, ws.config.beam_width)?;
            print_json(&report)?;
        }
        Command::TrainCtc => {
            let filled = if ws.config.gold_ctc {
                Vec::new()
            } else {
                ws.load_pls(&files::pl_filled(ws.config.fill_strategy))?
            };
            let (targets, filtered) = ws.ctc_targets(&filled)?;
            let mut words = ws.load_word_model()?.vocab.words().to_vec();
            if let Ok(lm) = ws.load_lm() {
                words.extend(lm.vocabulary().iter().cloned());
            }
            let (_, report) = ws.train_ctc(&targets, &words)?;
            log::info!("{filtered} pseudo-labels filtered by bag length");
            print_json(&report)?;
        }
        Command::EvalWer {
            model,
            split: which,
            pl,
        } => {
            let samples = split(&ws, which);
            let wer = match model {
                ModelKind::Word => ws.load_word_model()?.dev_wer(samples)?,
                ModelKind::Letter => ws.load_letter_model()?.wer(samples)?,
                ModelKind::Pl => {
                    let path =
                        pl.map_or_else(|| ws.dir().join(files::PL_GREEDY), |p| ws.dir().join(p));
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    pl_wer(&parse_pseudo_labels(&text)?, samples)?
                }
            };
            println!("wer {wer:.6}");
            return Ok(());
        }
        Command::RunAll => {
            let report = ws.run_all()?;
            print_json(&report)?;
            return Ok(());
        }
        Command::SweepAlpha { alphas } => {
            let points = sweep_alpha(&ws.config, &ws.dataset, &alphas)?;
            let best = best_alpha(&points).context("no alpha values")?;
            let out = serde_json::json!({
                "heuristic_alpha": heuristic_alpha(&ws.config, &ws.dataset.train)?,
                "best_alpha": best.alpha,
                "points": points,
            });
            std::fs::write(
                ws.dir().join("sweep_alpha.json"),
                serde_json::to_string_pretty(&out)?,
            )?;
            print_json(&out)?;
        }
        Command::SweepVocab { sizes } => {
            if sizes.is_empty() {
                bail!("no vocabulary sizes");
            }
            let points = sweep_vocab(&ws.config, &ws.dataset, &sizes)?;
            std::fs::write(
                ws.dir().join("sweep_vocab.json"),
                serde_json::to_string_pretty(&points)?,
            )?;
            print_json(&points)?;
        }
    }
    ws.write_manifest()?;
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
