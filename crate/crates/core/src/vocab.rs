//! Word vocabularies and bag-of-words target distributions.
//!
//! A training label is an unordered multiset of words. It is turned into a
//! probability distribution over `|V| + 1` classes: the in-vocabulary words,
//! the pooled `<unk>` word, and a trailing `<blank>` class that receives a
//! fixed prior mass `alpha`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const BLANK: &str = "<blank>";

/// Unordered word multiset. Words are case-folded on insertion.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bag(BTreeMap<String, usize>);

impl Bag {
    pub fn new() -> Self {
        Bag::default()
    }

    pub fn insert(&mut self, word: &str) {
        self.insert_n(word, 1);
    }

    pub fn insert_n(&mut self, word: &str, count: usize) {
        if count == 0 {
            return;
        }
        *self.0.entry(word.to_lowercase()).or_default() += count;
    }

    pub fn count(&self, word: &str) -> usize {
        self.0.get(&word.to_lowercase()).copied().unwrap_or(0)
    }

    /// Total number of words, counting multiplicity.
    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// Distinct words in ascending order with their counts.
    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.0.iter().map(|(w, &c)| (w.as_str(), c))
    }

    pub fn distinct(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }
}

impl<S: AsRef<str>> FromIterator<S> for Bag {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut bag = Bag::new();
        for w in iter {
            bag.insert(w.as_ref());
        }
        bag
    }
}

/// Bidirectional word/id map. `<unk>` is always present; `<blank>` is the
/// implicit class with id `len()`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    unk: usize,
}

impl Vocabulary {
    /// Builds a vocabulary from a word list. `<unk>` is appended when missing.
    pub fn from_words<S: AsRef<str>>(words: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut list = Vec::new();
        let mut index = HashMap::new();
        for w in words {
            let w = w.as_ref().to_lowercase();
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("invalid vocabulary word {w:?}")));
            }
            if w == BLANK {
                return Err(Error::invalid("<blank> is implicit and cannot be listed"));
            }
            if index.insert(w.clone(), list.len()).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary word {w:?}")));
            }
            list.push(w);
        }
        if !index.contains_key(UNK) {
            index.insert(UNK.to_string(), list.len());
            list.push(UNK.to_string());
        }
        let unk = index[UNK];
        Ok(Vocabulary {
            words: list,
            index,
            unk,
        })
    }

    /// Number of entries including `<unk>`, excluding `<blank>`.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of output classes, `len() + 1`.
    pub fn num_classes(&self) -> usize {
        self.words.len() + 1
    }

    pub fn unk_id(&self) -> usize {
        self.unk
    }

    pub fn blank_id(&self) -> usize {
        self.words.len()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Id of an in-vocabulary word.
    pub fn get(&self, word: &str) -> Option<usize> {
        match self.index.get(word) {
            Some(&id) => Some(id),
            None => self.index.get(&word.to_lowercase()).copied(),
        }
    }

    /// Id of a word, mapping anything unknown to `<unk>`.
    pub fn id_or_unk(&self, word: &str) -> usize {
        self.get(word).unwrap_or(self.unk)
    }

    /// Word for a class id; the blank id maps to `"<blank>"`.
    pub fn lookup(&self, id: usize) -> Option<&str> {
        if id == self.blank_id() {
            Some(BLANK)
        } else {
            self.words.get(id).map(String::as_str)
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.get(word).is_some()
    }

    /// One word per line, line number = id. `<blank>` is never written.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for w in &self.words {
            let _ = writeln!(out, "{w}");
        }
        out
    }

    /// Parses the one-word-per-line format. `<unk>` must be listed.
    pub fn parse(text: &str) -> Result<Self> {
        let mut words = Vec::new();
        let mut seen = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let w = line.trim_end_matches('\r');
            if w.is_empty() {
                return Err(Error::parse(lineno, "empty line"));
            }
            if w.chars().any(char::is_whitespace) {
                return Err(Error::parse(lineno, "word contains whitespace"));
            }
            if w == BLANK {
                return Err(Error::parse(lineno, "<blank> must not be listed"));
            }
            if w.to_lowercase() != w {
                return Err(Error::parse(lineno, "word is not lowercase"));
            }
            if let Some(prev) = seen.insert(w.to_string(), lineno) {
                return Err(Error::parse(
                    lineno,
                    format!("duplicate word {w:?} (first on line {prev})"),
                ));
            }
            words.push(w.to_string());
        }
        if !seen.contains_key(UNK) {
            return Err(Error::MissingSection(UNK.to_string()));
        }
        Vocabulary::from_words(words)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::parse(&text)
    }

    /// Nested sub-vocabulary holding the first `n` non-`<unk>` words.
    pub fn truncate(&self, n: usize) -> Vocabulary {
        let kept = self.words.iter().filter(|w| *w != UNK).take(n);
        Vocabulary::from_words(kept).expect("subset of a valid vocabulary")
    }
}

/// Top `top_k` most frequent words over all bags, then `<unk>`.
///
/// Frequency ties are broken by ascending word order. A literal `<unk>` in
/// the input is not counted as a word.
pub fn build_vocabulary<'a>(
    bags: impl IntoIterator<Item = &'a Bag>,
    top_k: usize,
) -> Result<Vocabulary> {
    if top_k == 0 {
        return Err(Error::invalid("top_k must be at least 1"));
    }
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for bag in bags {
        for (w, c) in bag.iter() {
            if w != UNK && w != BLANK {
                *freq.entry(w).or_default() += c;
            }
        }
    }
    if freq.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
    // BTreeMap order is ascending already; a stable sort keeps it within ties.
    ranked.sort_by_key(|&(_, c)| std::cmp::Reverse(c));
    Vocabulary::from_words(ranked.into_iter().take(top_k).map(|(w, _)| w))
}

/// Per-sample target distribution over `|V| + 1` classes.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetDistribution {
    probs: Vec<f64>,
    blank_prior: f64,
}

impl TargetDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn blank_prior(&self) -> f64 {
        self.blank_prior
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Builds a distribution from raw probabilities, checking it sums to one.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("empty distribution"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid(
                "probabilities must be finite and non-negative",
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("probabilities sum to {sum}")));
        }
        let blank_prior = *probs.last().unwrap();
        Ok(TargetDistribution { probs, blank_prior })
    }
}

/// Normalizes the in-vocabulary word counts of `bag`, pools OOV words into
/// `<unk>`, scales all word mass by `1 - alpha` and puts `alpha` on blank.
pub fn make_target(bag: &Bag, vocab: &Vocabulary, alpha: f64) -> Result<TargetDistribution> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1)")));
    }
    let total = bag.total();
    if total == 0 {
        return Err(Error::EmptyTranscript);
    }
    let mut counts = vec![0usize; vocab.num_classes()];
    for (w, c) in bag.iter() {
        counts[vocab.id_or_unk(w)] += c;
    }
    let scale = 1.0 - alpha;
    let mut probs: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / total as f64 * scale)
        .collect();
    probs[vocab.blank_id()] = alpha;
    Ok(TargetDistribution {
        probs,
        blank_prior: alpha,
    })
}

/// `1 - words_per_second / frames_per_second`, clamped to `[0, 0.99]`.
pub fn default_alpha(words_per_second: f64, frames_per_second: f64) -> Result<f64> {
    if !(frames_per_second > 0.0) || !(words_per_second >= 0.0) {
        return Err(Error::invalid(
            "rates must be non-negative and the frame rate positive",
        ));
    }
    if words_per_second > frames_per_second {
        return Err(Error::RateExceedsFrameRate);
    }
    Ok((1.0 - words_per_second / frames_per_second).clamp(0.0, 0.99))
}
