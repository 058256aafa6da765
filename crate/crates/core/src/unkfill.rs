//! Replacing `<unk>` tokens in pseudo-labels with the words that maximize
//! the sentence likelihood under an n-gram LM.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ngramlm::{NGramModel, WordId};
use crate::vocab::Bag;
use crate::worddecode::PseudoLabel;

/// Largest assignment space [`exhaustive_fill`] will enumerate.
pub const EXHAUSTIVE_LIMIT: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FillStrategy {
    /// Delete every `<unk>`.
    Remove,
    /// Search over the whole LM vocabulary.
    #[serde(rename = "full")]
    ReplaceFullVocab,
    /// Search over the words of the utterance's own bag.
    #[serde(rename = "transcript")]
    ReplaceTranscriptVocab,
}

impl FillStrategy {
    pub const ALL: [FillStrategy; 3] = [
        FillStrategy::Remove,
        FillStrategy::ReplaceFullVocab,
        FillStrategy::ReplaceTranscriptVocab,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FillStrategy::Remove => "remove",
            FillStrategy::ReplaceFullVocab => "full",
            FillStrategy::ReplaceTranscriptVocab => "transcript",
        }
    }
}

impl fmt::Display for FillStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FillStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "remove" => Ok(FillStrategy::Remove),
            "full" => Ok(FillStrategy::ReplaceFullVocab),
            "transcript" => Ok(FillStrategy::ReplaceTranscriptVocab),
            other => Err(Error::invalid(format!("unknown fill strategy {other:?}"))),
        }
    }
}

/// Result of filling one pseudo-label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FillOutcome {
    pub label: PseudoLabel,
    /// Unk positions (in the input label) that had no candidates and were removed.
    pub fallback_positions: Vec<usize>,
}

/// Partial assignment of candidate words to the leading unk positions.
#[derive(Clone, Debug, PartialEq)]
pub struct FillHypothesis {
    /// Candidate index per assigned unk position, left to right.
    pub assignment: Vec<usize>,
    /// LM log-probability of the scored prefix with the assignment substituted.
    pub score: f64,
    /// Index of the next unk position to assign.
    pub frontier: usize,
}

/// Higher score first; among equal scores the smallest assignment wins.
fn rank(a: &FillHypothesis, b: &FillHypothesis) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.assignment.cmp(&b.assignment))
}

fn remove_unks(pl: &PseudoLabel) -> PseudoLabel {
    PseudoLabel::new(
        pl.words()
            .iter()
            .enumerate()
            .filter(|(i, _)| !pl.unk_positions().contains(i))
            .map(|(_, w)| w.clone()),
    )
}

/// Sorted, deduplicated candidate words restricted to the LM vocabulary.
fn resolve_candidates<S: AsRef<str>>(
    lm: &NGramModel,
    words: impl IntoIterator<Item = S>,
) -> Vec<(String, WordId)> {
    let mut out: Vec<(String, WordId)> = words
        .into_iter()
        .filter(|w| lm.contains(w.as_ref()))
        .map(|w| (w.as_ref().to_string(), lm.word_id(w.as_ref())))
        .collect();
    out.sort();
    out.dedup();
    out
}

struct Problem<'a> {
    lm: &'a NGramModel,
    ids: Vec<WordId>,
    unks: &'a [usize],
    candidates: Vec<(String, WordId)>,
}

impl Problem<'_> {
    fn substituted(&self, assignment: &[usize]) -> Vec<WordId> {
        let mut ids = self.ids.clone();
        for (&pos, &cand) in self.unks.iter().zip(assignment) {
            ids[pos] = self.candidates[cand].1;
        }
        ids
    }

    /// LM score of everything up to the unk at `frontier - 1` plus up to
    /// `n - 1` following known words (and the end marker if reached).
    fn prefix_score(&self, assignment: &[usize]) -> f64 {
        let j = assignment.len() - 1;
        let pos = self.unks[j];
        let next_unk = self.unks.get(j + 1).copied().unwrap_or(usize::MAX);
        let window_end = (pos + self.lm.order() - 1).min(next_unk - 1);
        let ids = self.substituted(assignment);
        let mut padded = vec![self.lm.bos(); self.lm.order() - 1];
        padded.extend_from_slice(&ids);
        padded.push(self.lm.eos());
        let start = self.lm.order() - 1;
        // index into `padded` of the last scored token; `ids.len()` is </s>
        let last = start + window_end.min(ids.len());
        (start..=last)
            .map(|i| self.lm.log_prob(&padded[..i], padded[i]))
            .sum()
    }

    fn full_score(&self, assignment: &[usize]) -> f64 {
        self.lm.score_ids(&self.substituted(assignment))
    }

    fn output(&self, pl: &PseudoLabel, assignment: &[usize]) -> PseudoLabel {
        let mut words = pl.words().to_vec();
        for (&pos, &cand) in self.unks.iter().zip(assignment) {
            words[pos] = self.candidates[cand].0.clone();
        }
        PseudoLabel::new(words)
    }
}

/// Left-to-right beam search over unk positions keeping the `beam_width`
/// best partial assignments; the final pick uses the full-sentence score.
fn beam_fill(problem: &Problem<'_>, beam_width: usize) -> Vec<usize> {
    let n_cands = problem.candidates.len();
    let mut beam = vec![FillHypothesis {
        assignment: Vec::new(),
        score: 0.0,
        frontier: 0,
    }];
    let n_unks = problem.unks.len();
    for j in 0..n_unks {
        let last = j + 1 == n_unks;
        let mut expanded = Vec::with_capacity(beam.len() * n_cands);
        for hyp in &beam {
            for c in 0..n_cands {
                let mut assignment = hyp.assignment.clone();
                assignment.push(c);
                let score = if last {
                    problem.full_score(&assignment)
                } else {
                    problem.prefix_score(&assignment)
                };
                expanded.push(FillHypothesis {
                    assignment,
                    score,
                    frontier: j + 1,
                });
            }
        }
        expanded.sort_by(rank);
        if !last {
            expanded.truncate(beam_width);
        }
        beam = expanded;
    }
    beam.swap_remove(0).assignment
}

/// Replaces or removes the `<unk>` tokens of `pl` according to `strategy`.
///
/// Replace strategies never touch non-unk tokens. When a replace strategy
/// has no candidate words, the unks are removed and reported in
/// [`FillOutcome::fallback_positions`].
pub fn fill_unk(
    pl: &PseudoLabel,
    lm: &NGramModel,
    strategy: FillStrategy,
    bag: Option<&Bag>,
    beam_width: usize,
) -> Result<FillOutcome> {
    if beam_width == 0 {
        return Err(Error::invalid("beam width must be at least 1"));
    }
    if strategy == FillStrategy::ReplaceTranscriptVocab && bag.is_none() {
        return Err(Error::invalid(
            "transcript strategy needs the utterance bag",
        ));
    }
    if pl.unk_positions().is_empty() {
        return Ok(FillOutcome {
            label: pl.clone(),
            fallback_positions: Vec::new(),
        });
    }
    let candidates = match strategy {
        FillStrategy::Remove => {
            return Ok(FillOutcome {
                label: remove_unks(pl),
                fallback_positions: Vec::new(),
            })
        }
        FillStrategy::ReplaceFullVocab => resolve_candidates(lm, lm.vocabulary()),
        FillStrategy::ReplaceTranscriptVocab => resolve_candidates(lm, bag.unwrap().distinct()),
    };
    if candidates.is_empty() {
        return Ok(FillOutcome {
            label: remove_unks(pl),
            fallback_positions: pl.unk_positions().to_vec(),
        });
    }
    let problem = Problem {
        lm,
        ids: lm.ids(pl.words()),
        unks: pl.unk_positions(),
        candidates,
    };
    let best = beam_fill(&problem, beam_width);
    Ok(FillOutcome {
        label: problem.output(pl, &best),
        fallback_positions: Vec::new(),
    })
}

/// Scores every complete assignment of `candidates` (restricted to the LM
/// vocabulary) to the unk positions with the full-sentence LM score and
/// returns the best; ties go to the lexicographically smallest assignment.
pub fn exhaustive_fill<S: AsRef<str>>(
    pl: &PseudoLabel,
    lm: &NGramModel,
    candidates: &[S],
) -> Result<PseudoLabel> {
    let candidates = resolve_candidates(lm, candidates);
    let n_unks = pl.unk_positions().len();
    if n_unks == 0 {
        return Ok(pl.clone());
    }
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate words in the LM vocabulary"));
    }
    let space = u32::try_from(n_unks)
        .ok()
        .and_then(|e| candidates.len().checked_pow(e))
        .filter(|&s| s <= EXHAUSTIVE_LIMIT)
        .ok_or_else(|| {
            Error::BoundExceeded(format!(
                "{} candidates over {n_unks} unks exceeds {EXHAUSTIVE_LIMIT}",
                candidates.len()
            ))
        })?;
    let problem = Problem {
        lm,
        ids: lm.ids(pl.words()),
        unks: pl.unk_positions(),
        candidates,
    };
    let n_cands = problem.candidates.len();
    let mut best: Option<FillHypothesis> = None;
    let mut assignment = vec![0usize; n_unks];
    for code in 0..space {
        let mut rest = code;
        for slot in assignment.iter_mut().rev() {
            *slot = rest % n_cands;
            rest /= n_cands;
        }
        let hyp = FillHypothesis {
            assignment: assignment.clone(),
            score: problem.full_score(&assignment),
            frontier: n_unks,
        };
        // enumeration is in ascending assignment order, so ties keep the first
        if best.as_ref().is_none_or(|b| hyp.score > b.score) {
            best = Some(hyp);
        }
    }
    Ok(problem.output(pl, &best.unwrap().assignment))
}
