use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderDims;
use crate::error::{Error, Result};
use crate::synthdata::SynthConfig;
use crate::unkfill::FillStrategy;

use super::train::TrainSettings;

/// Flat run configuration. Every key has a default, so an empty file is a
/// valid config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Directory holding `train.jsonl`, `dev.jsonl` and `lm.txt`.
    pub dataset_dir: PathBuf,
    /// Run directory for every artifact.
    pub out_dir: PathBuf,

    /// Blank prior; absent means the frame-budget heuristic on the train set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub top_k: usize,

    pub hidden: usize,
    pub kernel: usize,
    pub stride: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub word_epochs: usize,

    pub letter_hidden: usize,
    pub letter_kernel: usize,
    pub letter_depth: usize,
    pub letter_upsample: usize,
    pub letter_learning_rate: f64,
    pub ctc_epochs: usize,
    /// Train the letter model on gold transcripts instead of pseudo-labels.
    pub gold_ctc: bool,
    /// Keep only pseudo-labels whose word count equals the bag size.
    pub bag_length_filter: bool,

    pub batch_size: usize,
    pub grad_clip: f64,
    pub cosine_decay: bool,

    pub lm_order: usize,
    pub lm_smoothing: f64,
    pub fill_strategy: FillStrategy,
    pub beam_width: usize,

    pub seed: u64,
    /// Reuse stage 1-2 artifacts already in `out_dir` when their hashes match.
    pub resume: bool,

    pub data_seed: u64,
    pub vocab_words: usize,
    pub oov_words: usize,
    pub features: usize,
    pub min_word_frames: usize,
    pub max_word_frames: usize,
    pub min_silence_frames: usize,
    pub max_silence_frames: usize,
    pub noise: f64,
    pub min_sentence_words: usize,
    pub max_sentence_words: usize,
    pub train_size: usize,
    pub dev_size: usize,
    pub lm_sentences: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        PipelineConfig {
            dataset_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("run"),
            alpha: None,
            top_k: 30,
            hidden: 32,
            kernel: 7,
            stride: 3,
            depth: 2,
            learning_rate: 3e-3,
            word_epochs: 20,
            letter_hidden: 96,
            letter_kernel: 7,
            letter_depth: 2,
            letter_upsample: 2,
            letter_learning_rate: 3e-3,
            ctc_epochs: 20,
            gold_ctc: false,
            bag_length_filter: true,
            batch_size: 16,
            grad_clip: 5.0,
            cosine_decay: false,
            lm_order: 3,
            lm_smoothing: 0.1,
            fill_strategy: FillStrategy::ReplaceTranscriptVocab,
            beam_width: 8,
            seed: 7,
            resume: false,
            data_seed: synth.seed,
            vocab_words: synth.vocab_words,
            oov_words: synth.oov_words,
            features: synth.features,
            min_word_frames: synth.frames_per_word.0,
            max_word_frames: synth.frames_per_word.1,
            min_silence_frames: synth.silence_frames.0,
            max_silence_frames: synth.silence_frames.1,
            noise: synth.noise,
            min_sentence_words: synth.sentence_words.0,
            max_sentence_words: synth.sentence_words.1,
            train_size: synth.train_size,
            dev_size: synth.dev_size,
            lm_sentences: synth.lm_sentences,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.alpha {
            if !(0.0..1.0).contains(&a) {
                return Err(Error::invalid(format!("alpha {a} outside [0, 1)")));
            }
        }
        if self.top_k == 0 {
            return Err(Error::invalid("top_k must be at least 1"));
        }
        if self.word_epochs == 0 || self.ctc_epochs == 0 {
            return Err(Error::invalid("epoch counts must be at least 1"));
        }
        if self.batch_size == 0 || self.beam_width == 0 || self.letter_upsample == 0 {
            return Err(Error::invalid(
                "batch_size, beam_width and letter_upsample must be at least 1",
            ));
        }
        if self.lm_order == 0 || !(self.lm_smoothing > 0.0) {
            return Err(Error::invalid("lm_order must be >= 1 and lm_smoothing > 0"));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("letter_learning_rate", self.letter_learning_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !(self.grad_clip >= 0.0) {
            return Err(Error::invalid("grad_clip must be non-negative"));
        }
        self.word_dims(1)?;
        self.letter_dims(1)?;
        self.synth_config().validate()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn word_dims(&self, classes: usize) -> Result<EncoderDims> {
        let d = EncoderDims {
            features: self.features,
            hidden: self.hidden,
            classes,
            kernel: self.kernel,
            stride: self.stride,
            depth: self.depth,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn letter_dims(&self, classes: usize) -> Result<EncoderDims> {
        let d = EncoderDims {
            features: self.features,
            hidden: self.letter_hidden,
            classes,
            kernel: self.letter_kernel,
            stride: 1,
            depth: self.letter_depth,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn word_settings(&self) -> TrainSettings {
        TrainSettings {
            epochs: self.word_epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            grad_clip: self.grad_clip,
            cosine_decay: self.cosine_decay,
            seed: self.seed,
        }
    }

    pub fn letter_settings(&self) -> TrainSettings {
        TrainSettings {
            epochs: self.ctc_epochs,
            batch_size: self.batch_size,
            learning_rate: self.letter_learning_rate,
            grad_clip: self.grad_clip,
            cosine_decay: self.cosine_decay,
            seed: self.seed.wrapping_add(1),
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            vocab_words: self.vocab_words,
            oov_words: self.oov_words,
            features: self.features,
            frames_per_word: (self.min_word_frames, self.max_word_frames),
            silence_frames: (self.min_silence_frames, self.max_silence_frames),
            noise: self.noise,
            sentence_words: (self.min_sentence_words, self.max_sentence_words),
            train_size: self.train_size,
            dev_size: self.dev_size,
            lm_sentences: self.lm_sentences,
            seed: self.data_seed,
        }
    }
}
