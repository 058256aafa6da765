//! Deterministic synthetic corpus: frame-feature sequences with known word
//! content, onsets and silences, plus an independent LM text corpus drawn
//! from the same word grammar.
//!
//! Each word has a fixed prototype vector. An utterance emits every word as
//! its prototype repeated for a random number of frames, separated by
//! silence (zero) frames, with i.i.d. Gaussian noise added to every frame.

mod dataset;
mod grammar;
mod metrics;

pub use dataset::{parse_dataset, write_dataset, DatasetRecord};
pub use grammar::{stationary_distribution, MarkovGrammar};
pub use metrics::{edit_distance, oracle_restricted_wer, wer, WerTally};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::vocab::Bag;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// Words that end up in the acoustic vocabulary (the frequent ones).
    pub vocab_words: usize,
    /// Rare words meant to fall outside the acoustic vocabulary.
    pub oov_words: usize,
    pub features: usize,
    pub frames_per_word: (usize, usize),
    pub silence_frames: (usize, usize),
    pub noise: f64,
    pub sentence_words: (usize, usize),
    pub train_size: usize,
    pub dev_size: usize,
    pub lm_sentences: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocab_words: 30,
            oov_words: 5,
            features: 8,
            frames_per_word: (3, 6),
            silence_frames: (0, 4),
            noise: 0.3,
            sentence_words: (3, 8),
            train_size: 2000,
            dev_size: 200,
            lm_sentences: 5000,
            seed: 20_210_601,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let range_ok = |(lo, hi): (usize, usize)| lo <= hi;
        if self.vocab_words + self.oov_words < 5 {
            return Err(Error::invalid("need at least five words"));
        }
        if self.vocab_words == 0 || self.features == 0 {
            return Err(Error::invalid(
                "vocabulary and feature sizes must be positive",
            ));
        }
        if !range_ok(self.frames_per_word)
            || !range_ok(self.silence_frames)
            || !range_ok(self.sentence_words)
            || self.frames_per_word.0 == 0
            || self.sentence_words.0 == 0
        {
            return Err(Error::invalid("invalid range in synthetic config"));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::invalid(
                "noise scale must be finite and non-negative",
            ));
        }
        Ok(())
    }

    pub fn num_words(&self) -> usize {
        self.vocab_words + self.oov_words
    }

    /// Expected input frames per word, counting one inter-word silence per word.
    pub fn mean_frames_per_word(&self) -> f64 {
        let mid = |(lo, hi): (usize, usize)| (lo + hi) as f64 / 2.0;
        mid(self.frames_per_word) + mid(self.silence_frames)
    }
}

/// Name of word `i`: `w00`, `w01`, ...
pub fn word_name(i: usize) -> String {
    format!("w{i:02}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    pub id: String,
    pub features: Matrix,
    /// Weak label: the unordered words of the utterance.
    pub bag: Bag,
    /// Hidden word order; evaluation only.
    pub ref_transcript: Vec<String>,
    /// Input-frame index of each word's first frame; evaluation only.
    pub ref_onsets: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub train: Vec<SyntheticSample>,
    pub dev: Vec<SyntheticSample>,
    pub lm_corpus: Vec<Vec<String>>,
    pub grammar: MarkovGrammar,
    pub prototypes: Vec<Vec<f64>>,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent RNG stream for `(seed, stream, index)`.
fn stream_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed ^ splitmix(stream)) ^ index))
}

const STREAM_GRAMMAR: u64 = 1;
const STREAM_PROTOTYPES: u64 = 2;
const STREAM_TRAIN: u64 = 3;
const STREAM_DEV: u64 = 4;
const STREAM_LM: u64 = 5;

/// Prototype vectors with pairwise distance at least 1.5 and norm at least 1.
fn prototypes(config: &SynthConfig) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(config.seed, STREAM_PROTOTYPES, 0);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(config.num_words());
    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let zero = vec![0.0; config.features];
    let mut attempts = 0;
    while out.len() < config.num_words() {
        let v: Vec<f64> = (0..config.features)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        attempts += 1;
        // low-dimensional configs may not admit the separation; accept after many tries
        let relaxed = attempts > 10_000;
        if relaxed || (dist(&v, &zero) >= 1.0 && out.iter().all(|p| dist(p, &v) >= 1.5)) {
            out.push(v);
        }
    }
    out
}

fn render(
    config: &SynthConfig,
    grammar: &MarkovGrammar,
    protos: &[Vec<f64>],
    id: String,
    rng: &mut ChaCha8Rng,
) -> SyntheticSample {
    let len = rng.gen_range(config.sentence_words.0..=config.sentence_words.1);
    let words = grammar.sample_sentence(len, rng);
    let noise = Normal::new(0.0, config.noise).expect("validated noise scale");
    let f = config.features;
    let mut frames: Vec<f64> = Vec::new();
    let mut onsets = Vec::with_capacity(len);
    let push_frame = |base: Option<&[f64]>, frames: &mut Vec<f64>, rng: &mut ChaCha8Rng| {
        for d in 0..f {
            let b = base.map_or(0.0, |p| p[d]);
            frames.push(b + noise.sample(rng));
        }
    };
    let silence =
        |rng: &mut ChaCha8Rng| rng.gen_range(config.silence_frames.0..=config.silence_frames.1);
    for &w in &words {
        // leading silence before the first word, inter-word silence otherwise
        let gap = silence(rng);
        for _ in 0..gap {
            push_frame(None, &mut frames, rng);
        }
        onsets.push(frames.len() / f);
        let dur = rng.gen_range(config.frames_per_word.0..=config.frames_per_word.1);
        for _ in 0..dur {
            push_frame(Some(&protos[w]), &mut frames, rng);
        }
    }
    for _ in 0..silence(rng) {
        push_frame(None, &mut frames, rng);
    }
    let n_frames = frames.len() / f;
    let ref_transcript: Vec<String> = words.iter().map(|&w| word_name(w)).collect();
    SyntheticSample {
        id,
        features: Matrix::from_vec(n_frames, f, frames),
        bag: ref_transcript.iter().collect(),
        ref_transcript,
        ref_onsets: onsets,
    }
}

/// Builds train and dev utterances and an LM text corpus, all determined by
/// `config.seed`. LM sentences come from their own random stream and are
/// never copied from the acoustic transcripts.
pub fn generate_corpus(config: &SynthConfig) -> Result<Corpus> {
    config.validate()?;
    let grammar = MarkovGrammar::generate(
        config.vocab_words,
        config.oov_words,
        &mut stream_rng(config.seed, STREAM_GRAMMAR, 0),
    );
    let protos = prototypes(config);
    let make = |stream: u64, prefix: &str, n: usize| -> Vec<SyntheticSample> {
        (0..n)
            .map(|i| {
                let mut rng = stream_rng(config.seed, stream, i as u64);
                render(
                    config,
                    &grammar,
                    &protos,
                    format!("{prefix}-{i:05}"),
                    &mut rng,
                )
            })
            .collect()
    };
    let train = make(STREAM_TRAIN, "train", config.train_size);
    let dev = make(STREAM_DEV, "dev", config.dev_size);
    let lm_corpus = (0..config.lm_sentences)
        .map(|i| {
            let mut rng = stream_rng(config.seed, STREAM_LM, i as u64);
            let len = rng.gen_range(config.sentence_words.0..=config.sentence_words.1);
            grammar
                .sample_sentence(len, &mut rng)
                .into_iter()
                .map(word_name)
                .collect()
        })
        .collect();
    Ok(Corpus {
        train,
        dev,
        lm_corpus,
        grammar,
        prototypes: protos,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            train_size: 20,
            dev_size: 5,
            lm_sentences: 30,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_corpus(&small()).unwrap();
        let b = generate_corpus(&small()).unwrap();
        assert_eq!(a, b);
        let mut other = small();
        other.seed += 1;
        assert_ne!(generate_corpus(&other).unwrap().train, a.train);
    }

    #[test]
    fn bag_matches_transcript_and_onsets_in_range() {
        let c = generate_corpus(&small()).unwrap();
        for s in c.train.iter().chain(&c.dev) {
            let bag: Bag = s.ref_transcript.iter().collect();
            assert_eq!(bag, s.bag);
            assert_eq!(s.ref_onsets.len(), s.ref_transcript.len());
            assert!(s.ref_onsets.windows(2).all(|w| w[0] + 3 <= w[1]));
            assert!(s.features.rows() >= 9);
            assert!(s.features.as_slice().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn noiseless_single_word_is_prototype() {
        let cfg = SynthConfig {
            noise: 0.0,
            sentence_words: (1, 1),
            silence_frames: (0, 0),
            ..small()
        };
        let c = generate_corpus(&cfg).unwrap();
        for s in &c.train {
            let truth = &s.ref_transcript[0];
            for row in s.features.iter_rows() {
                let nearest = (0..c.prototypes.len())
                    .min_by(|&a, &b| {
                        let d = |p: &Vec<f64>| {
                            p.iter().zip(row).map(|(x, y)| (x - y).powi(2)).sum::<f64>()
                        };
                        d(&c.prototypes[a]).total_cmp(&d(&c.prototypes[b]))
                    })
                    .unwrap();
                assert_eq!(&word_name(nearest), truth);
                assert_eq!(row, c.prototypes[nearest].as_slice());
            }
        }
    }

    #[test]
    fn invalid_config() {
        let mut cfg = small();
        cfg.frames_per_word = (5, 2);
        assert!(generate_corpus(&cfg).is_err());
        let mut cfg = small();
        cfg.noise = -1.0;
        assert!(generate_corpus(&cfg).is_err());
    }
}
