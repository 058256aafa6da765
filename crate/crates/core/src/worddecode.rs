//! Greedy decoding of word-level emissions into pseudo-labels, and word
//! onset localization.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::aggloss::Emissions;
use crate::error::{Error, Result};
use crate::matrix::argmax;
use crate::vocab::{Vocabulary, UNK};

/// Decoded word sequence with the positions of `<unk>` tokens.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PseudoLabel {
    words: Vec<String>,
    unk_positions: Vec<usize>,
}

impl PseudoLabel {
    pub fn new<S: Into<String>>(words: impl IntoIterator<Item = S>) -> Self {
        let words: Vec<String> = words.into_iter().map(Into::into).collect();
        let unk_positions = words
            .iter()
            .enumerate()
            .filter(|(_, w)| w.as_str() == UNK)
            .map(|(i, _)| i)
            .collect();
        PseudoLabel {
            words,
            unk_positions,
        }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn unk_positions(&self) -> &[usize] {
        &self.unk_positions
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn into_words(self) -> Vec<String> {
        self.words
    }
}

/// Frame-wise argmax (ties to the lowest id), adjacent repeats collapsed,
/// `blank` removed.
pub fn collapse_argmax(emissions: &Emissions, blank: usize) -> Vec<usize> {
    collapse_runs(emissions, blank)
        .into_iter()
        .map(|(id, _, _)| id)
        .collect()
}

/// Non-blank runs of the frame argmax as `(class, first frame, length)`.
fn collapse_runs(emissions: &Emissions, blank: usize) -> Vec<(usize, usize, usize)> {
    let mut runs: Vec<(usize, usize, usize)> = Vec::new();
    let mut prev = None;
    for t in 0..emissions.num_frames() {
        let best = argmax(emissions.frame(t));
        if Some(best) == prev {
            if best != blank {
                runs.last_mut().unwrap().2 += 1;
            }
        } else if best != blank {
            runs.push((best, t, 1));
        }
        prev = Some(best);
    }
    runs
}

fn check_classes(emissions: &Emissions, vocab: &Vocabulary) -> Result<()> {
    if emissions.num_classes() != vocab.num_classes() {
        return Err(Error::DimensionMismatch {
            expected: vocab.num_classes(),
            actual: emissions.num_classes(),
        });
    }
    Ok(())
}

pub fn greedy_decode(emissions: &Emissions, vocab: &Vocabulary) -> Result<PseudoLabel> {
    check_classes(emissions, vocab)?;
    let ids = collapse_argmax(emissions, vocab.blank_id());
    Ok(PseudoLabel::new(
        ids.into_iter()
            .map(|id| vocab.lookup(id).unwrap().to_string()),
    ))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalizedWord {
    pub word: String,
    /// First output frame of the run.
    pub onset_frame: usize,
    /// Run length in output frames.
    pub span: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Localization {
    pub entries: Vec<LocalizedWord>,
}

impl Localization {
    pub fn words(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.word.as_str()).collect()
    }

    /// Onsets in input frames for an encoder with the given stride.
    pub fn input_onsets(&self, stride: usize) -> Vec<usize> {
        self.entries
            .iter()
            .map(|e| e.onset_frame * stride)
            .collect()
    }
}

/// Each collapsed non-blank run reported as (word, first frame, length).
pub fn localize(emissions: &Emissions, vocab: &Vocabulary) -> Result<Localization> {
    check_classes(emissions, vocab)?;
    let entries = collapse_runs(emissions, vocab.blank_id())
        .into_iter()
        .map(|(id, onset_frame, span)| LocalizedWord {
            word: vocab.lookup(id).unwrap().to_string(),
            onset_frame,
            span,
        })
        .collect();
    Ok(Localization { entries })
}

/// One JSON-lines record of a pseudo-label file. The fill metadata fields
/// are present only on files written after unk filling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PseudoLabelRecord {
    pub id: String,
    pub words: Vec<String>,
    pub unk_positions: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beam_width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_positions: Option<Vec<usize>>,
}

impl PseudoLabelRecord {
    pub fn new(id: impl Into<String>, label: &PseudoLabel) -> Self {
        PseudoLabelRecord {
            id: id.into(),
            words: label.words.clone(),
            unk_positions: label.unk_positions.clone(),
            strategy: None,
            beam_width: None,
            fallback_positions: None,
        }
    }

    pub fn label(&self) -> PseudoLabel {
        PseudoLabel::new(self.words.iter().cloned())
    }
}

/// Parses a pseudo-label JSON-lines document, validating that
/// `unk_positions` agrees with the words. Blank lines are skipped.
pub fn parse_pseudo_labels(text: &str) -> Result<Vec<PseudoLabelRecord>> {
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PseudoLabelRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(lineno, e.to_string()))?;
        if rec
            .words
            .iter()
            .any(|w| w.is_empty() || w.chars().any(char::is_whitespace))
        {
            return Err(Error::parse(lineno, "invalid word"));
        }
        if rec.words.iter().any(|w| w == crate::vocab::BLANK) {
            return Err(Error::parse(lineno, "<blank> in pseudo-label"));
        }
        if rec.label().unk_positions != rec.unk_positions {
            return Err(Error::parse(lineno, "unk_positions disagree with words"));
        }
        if !ids.insert(rec.id.clone()) {
            return Err(Error::parse(lineno, format!("duplicate id {:?}", rec.id)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_pseudo_labels(records: &[PseudoLabelRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("plain data serializes"));
        out.push('\n');
    }
    out
}
