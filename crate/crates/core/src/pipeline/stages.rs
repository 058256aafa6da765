use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggloss::log_softmax;
use crate::ctc::LetterAlphabet;
use crate::encoder::{decode_checkpoint, encode_checkpoint, forward, prepare_input, EncoderParams};
use crate::error::{Error, Result};
use crate::ngramlm::{parse_corpus, NGramModel};
use crate::synthdata::{generate_corpus, parse_dataset, write_dataset, SyntheticSample, WerTally};
use crate::unkfill::{fill_unk, FillStrategy};
use crate::vocab::{build_vocabulary, default_alpha, Bag, Vocabulary, UNK};
use crate::worddecode::{greedy_decode, localize, Localization, PseudoLabel, PseudoLabelRecord};

use super::config::PipelineConfig;
use super::report::{Manifest, StageReport};
use super::train::{
    letter_model_wer, letter_model_words, train_letter_model, train_word_model, word_model_wer,
    CtcExample, WeakExample,
};

/// File names inside the dataset and run directories.
pub mod files {
    pub const TRAIN: &str = "train.jsonl";
    pub const DEV: &str = "dev.jsonl";
    pub const LM_TEXT: &str = "lm.txt";

    pub const CONFIG: &str = "config.toml";
    pub const VOCAB: &str = "vocab.txt";
    pub const WORD_MODEL: &str = "word_model.ckpt";
    pub const STAGE1: &str = "stage1.json";
    pub const PL_GREEDY: &str = "pl_greedy.jsonl";
    pub const LM: &str = "lm.arpa";
    pub const ALPHABET: &str = "alphabet.txt";
    pub const LETTER_MODEL: &str = "letter_model.ckpt";
    pub const REPORT: &str = "report.json";

    pub fn pl_filled(strategy: crate::unkfill::FillStrategy) -> String {
        format!("pl_filled_{}.jsonl", strategy.name())
    }
}

pub(crate) fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<SyntheticSample>,
    pub dev: Vec<SyntheticSample>,
    pub lm_corpus: Vec<Vec<String>>,
}

impl Dataset {
    pub fn generate(config: &PipelineConfig) -> Result<Self> {
        let c = generate_corpus(&config.synth_config())?;
        Ok(Dataset {
            train: c.train,
            dev: c.dev,
            lm_corpus: c.lm_corpus,
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Dataset {
            train: parse_dataset(&read(&dir.join(files::TRAIN))?)?,
            dev: parse_dataset(&read(&dir.join(files::DEV))?)?,
            lm_corpus: parse_corpus(&read(&dir.join(files::LM_TEXT))?),
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        write(&dir.join(files::TRAIN), write_dataset(&self.train))?;
        write(&dir.join(files::DEV), write_dataset(&self.dev))?;
        let lm: String = self
            .lm_corpus
            .iter()
            .map(|s| format!("{}\n", s.join(" ")))
            .collect();
        write(&dir.join(files::LM_TEXT), lm)?;
        Manifest::write(dir)?;
        Ok(())
    }

    /// Unique train bags by id, for the transcript fill strategy.
    pub fn train_bags(&self) -> BTreeMap<&str, &Bag> {
        self.train.iter().map(|s| (s.id.as_str(), &s.bag)).collect()
    }
}

/// Frame-budget heuristic: one minus train words per encoder output frame.
pub fn heuristic_alpha(config: &PipelineConfig, train: &[SyntheticSample]) -> Result<f64> {
    let dims = config.word_dims(1)?;
    let mut words = 0usize;
    let mut frames = 0usize;
    for s in train {
        words += s.bag.total();
        let padded = s.features.rows() + config.kernel - 1;
        frames += dims.output_frames(padded).unwrap_or(0);
    }
    if frames == 0 {
        return Err(Error::EmptyCorpus);
    }
    default_alpha(words as f64, frames as f64)
}

pub fn resolve_alpha(config: &PipelineConfig, train: &[SyntheticSample]) -> Result<f64> {
    match config.alpha {
        Some(a) => Ok(a),
        None => heuristic_alpha(config, train),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WordModel {
    pub vocab: Vocabulary,
    pub params: EncoderParams,
}

impl WordModel {
    pub fn decode(&self, sample: &SyntheticSample) -> Result<PseudoLabel> {
        let x = prepare_input(&sample.features, 1, self.params.dims().kernel);
        greedy_decode(&log_softmax(&forward(&self.params, &x)?)?, &self.vocab)
    }

    /// Decoded words with onsets; with the centered padding, output frame
    /// `j` is centered on input frame `j * stride`.
    pub fn localize(&self, sample: &SyntheticSample) -> Result<Localization> {
        let x = prepare_input(&sample.features, 1, self.params.dims().kernel);
        localize(&log_softmax(&forward(&self.params, &x)?)?, &self.vocab)
    }

    pub fn dev_wer(&self, samples: &[SyntheticSample]) -> Result<f64> {
        word_model_wer(&self.params, &self.vocab, samples)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.vocab.save(dir.join(files::VOCAB))?;
        write(
            &dir.join(files::WORD_MODEL),
            encode_checkpoint(&self.params),
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let vocab = Vocabulary::load(dir.join(files::VOCAB))?;
        let path = dir.join(files::WORD_MODEL);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let params = decode_checkpoint(&bytes)?;
        if params.dims().classes != vocab.num_classes() {
            return Err(Error::DimensionMismatch {
                expected: vocab.num_classes(),
                actual: params.dims().classes,
            });
        }
        Ok(WordModel { vocab, params })
    }
}

/// Builds the vocabulary from train bags and trains the word model with the
/// bag-of-words loss. Only features and bags of `train` are read.
pub fn stage1_train_word_model(
    config: &PipelineConfig,
    train: &[SyntheticSample],
    dev: &[SyntheticSample],
    alpha: f64,
) -> Result<(WordModel, StageReport)> {
    let vocab = build_vocabulary(train.iter().map(|s| &s.bag), config.top_k)?;
    let examples = train
        .iter()
        .map(|s| WeakExample::from_sample(s, &vocab, alpha, config.kernel))
        .collect::<Result<Vec<_>>>()?;
    let dims = config.word_dims(vocab.num_classes())?;
    let outcome = train_word_model(dims, &examples, &vocab, dev, &config.word_settings())?;
    let model = WordModel {
        vocab,
        params: outcome.params.clone(),
    };
    Ok((model, StageReport::new(&outcome, None)))
}

/// Greedy pseudo-labels for every sample.
pub fn stage2_generate_pls(
    model: &WordModel,
    samples: &[SyntheticSample],
) -> Result<Vec<PseudoLabelRecord>> {
    samples
        .iter()
        .map(|s| Ok(PseudoLabelRecord::new(s.id.clone(), &model.decode(s)?)))
        .collect()
}

/// Fills the unks of every pseudo-label; records carry the fill metadata.
pub fn stage3_fill_unks(
    pls: &[PseudoLabelRecord],
    lm: &NGramModel,
    strategy: FillStrategy,
    beam_width: usize,
    bags: &BTreeMap<&str, &Bag>,
) -> Result<Vec<PseudoLabelRecord>> {
    pls.iter()
        .map(|rec| {
            let bag = bags.get(rec.id.as_str()).copied();
            let out = fill_unk(&rec.label(), lm, strategy, bag, beam_width)?;
            let mut filled = PseudoLabelRecord::new(rec.id.clone(), &out.label);
            filled.strategy = Some(strategy.name().to_string());
            filled.beam_width = Some(beam_width);
            filled.fallback_positions = Some(out.fallback_positions);
            Ok(filled)
        })
        .collect()
}

/// Corpus WER of pseudo-labels against the references of matching samples.
pub fn pl_wer(pls: &[PseudoLabelRecord], samples: &[SyntheticSample]) -> Result<f64> {
    let refs: BTreeMap<&str, &SyntheticSample> =
        samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut tally = WerTally::default();
    for rec in pls {
        let s = refs
            .get(rec.id.as_str())
            .ok_or_else(|| Error::invalid(format!("no sample with id {:?}", rec.id)))?;
        tally.add(&s.ref_transcript, &rec.words);
    }
    Ok(tally.wer())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LetterModel {
    pub alphabet: LetterAlphabet,
    pub params: EncoderParams,
    pub upsample: usize,
}

impl LetterModel {
    pub fn transcribe(&self, sample: &SyntheticSample) -> Result<Vec<String>> {
        letter_model_words(
            &self.params,
            &self.alphabet,
            &sample.features,
            self.upsample,
        )
    }

    pub fn wer(&self, samples: &[SyntheticSample]) -> Result<f64> {
        letter_model_wer(&self.params, &self.alphabet, samples, self.upsample)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.alphabet.save(dir.join(files::ALPHABET))?;
        write(
            &dir.join(files::LETTER_MODEL),
            encode_checkpoint(&self.params),
        )
    }

    pub fn load(dir: &Path, upsample: usize) -> Result<Self> {
        let alphabet = LetterAlphabet::load(dir.join(files::ALPHABET))?;
        let path = dir.join(files::LETTER_MODEL);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let params = decode_checkpoint(&bytes)?;
        if params.dims().classes != alphabet.num_classes() {
            return Err(Error::DimensionMismatch {
                expected: alphabet.num_classes(),
                actual: params.dims().classes,
            });
        }
        Ok(LetterModel {
            alphabet,
            params,
            upsample,
        })
    }
}

/// Trains a fresh letter model with CTC on `(sample, words)` pairs. The
/// alphabet covers the target words plus `extra_words`.
pub fn stage4_train_ctc<S: AsRef<str>>(
    config: &PipelineConfig,
    targets: &[(&SyntheticSample, Vec<String>)],
    extra_words: &[S],
    dev: &[SyntheticSample],
) -> Result<(LetterModel, StageReport)> {
    let alphabet = LetterAlphabet::from_words(
        targets
            .iter()
            .flat_map(|(_, w)| w.iter().map(String::as_str))
            .chain(extra_words.iter().map(AsRef::as_ref)),
    )?;
    let examples = targets
        .iter()
        .map(|(s, words)| {
            Ok(CtcExample {
                features: prepare_input(&s.features, config.letter_upsample, config.letter_kernel),
                target: alphabet.encode(words)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dims = config.letter_dims(alphabet.num_classes())?;
    let outcome = train_letter_model(
        dims,
        &examples,
        &alphabet,
        dev,
        config.letter_upsample,
        &config.letter_settings(),
    )?;
    let model = LetterModel {
        alphabet,
        params: outcome.params.clone(),
        upsample: config.letter_upsample,
    };
    Ok((model, StageReport::new(&outcome, None)))
}

pub(crate) fn oov_rate(train: &[SyntheticSample], vocab: &Vocabulary) -> f64 {
    let (mut oov, mut total) = (0usize, 0usize);
    for s in train {
        for (w, c) in s.bag.iter() {
            total += c;
            if !vocab.contains(w) || w == UNK {
                oov += c;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        oov as f64 / total as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaPoint {
    pub alpha: f64,
    pub dev_wer: f64,
    pub best_epoch: usize,
}

/// Stage-1 dev WER for each blank prior.
pub fn sweep_alpha(
    config: &PipelineConfig,
    dataset: &Dataset,
    alphas: &[f64],
) -> Result<Vec<AlphaPoint>> {
    alphas
        .iter()
        .map(|&alpha| {
            let mut c = config.clone();
            c.alpha = Some(alpha);
            c.validate()?;
            let (_, r) = stage1_train_word_model(&c, &dataset.train, &dataset.dev, alpha)?;
            log::info!("alpha {alpha}: dev WER {:.4}", r.dev_wer);
            Ok(AlphaPoint {
                alpha,
                dev_wer: r.dev_wer,
                best_epoch: r.best_epoch,
            })
        })
        .collect()
}

pub fn best_alpha(points: &[AlphaPoint]) -> Option<&AlphaPoint> {
    points.iter().min_by(|a, b| a.dev_wer.total_cmp(&b.dev_wer))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabPoint {
    pub size: usize,
    pub dev_wer: f64,
    pub oracle_wer: f64,
}

/// Corpus WER of the vocabulary-restricted oracle over `samples`.
pub fn oracle_wer(samples: &[SyntheticSample], vocab: &Vocabulary) -> f64 {
    let mut tally = WerTally::default();
    for s in samples {
        let restricted: Vec<&str> = s
            .ref_transcript
            .iter()
            .map(|w| if vocab.contains(w) { w.as_str() } else { UNK })
            .collect();
        tally.add(&s.ref_transcript, &restricted);
    }
    tally.wer()
}

/// Stage-1 dev WER next to the oracle bound for nested vocabularies of the
/// given strictly ascending sizes.
pub fn sweep_vocab(
    config: &PipelineConfig,
    dataset: &Dataset,
    sizes: &[usize],
) -> Result<Vec<VocabPoint>> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] == 0 {
        return Err(Error::invalid(
            "vocabulary sizes must be positive and strictly ascending",
        ));
    }
    let alpha = resolve_alpha(config, &dataset.train)?;
    sizes
        .iter()
        .map(|&size| {
            let mut c = config.clone();
            c.top_k = size;
            let (model, r) = stage1_train_word_model(&c, &dataset.train, &dataset.dev, alpha)?;
            let oracle = oracle_wer(&dataset.dev, &model.vocab);
            log::info!(
                "vocab {size}: dev WER {:.4} oracle {:.4}",
                r.dev_wer,
                oracle
            );
            Ok(VocabPoint {
                size,
                dev_wer: r.dev_wer,
                oracle_wer: oracle,
            })
        })
        .collect()
}
