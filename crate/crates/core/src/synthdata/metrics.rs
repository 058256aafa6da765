use crate::error::{Error, Result};
use crate::vocab::{Vocabulary, UNK};

/// Word-level Levenshtein distance with unit costs.
pub fn edit_distance<A: AsRef<str>, B: AsRef<str>>(reference: &[A], hypothesis: &[B]) -> usize {
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    let mut cur = vec![0; hypothesis.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r.as_ref() != h.as_ref());
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[hypothesis.len()]
}

/// Edit distance divided by the reference length. Can exceed 1.
pub fn wer<A: AsRef<str>, B: AsRef<str>>(reference: &[A], hypothesis: &[B]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::invalid("empty reference"));
    }
    Ok(edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}

/// WER of a perfect recognizer whose output is forced into `vocab`: every
/// out-of-vocabulary reference word becomes `<unk>`.
pub fn oracle_restricted_wer<A: AsRef<str>>(reference: &[A], vocab: &Vocabulary) -> Result<f64> {
    let restricted: Vec<&str> = reference
        .iter()
        .map(|w| {
            let w = w.as_ref();
            if vocab.contains(w) && w != UNK {
                w
            } else {
                UNK
            }
        })
        .collect();
    wer(reference, &restricted)
}

/// Corpus-level WER: total edits over total reference words.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WerTally {
    pub edits: usize,
    pub ref_words: usize,
}

impl WerTally {
    pub fn add<A: AsRef<str>, B: AsRef<str>>(&mut self, reference: &[A], hypothesis: &[B]) {
        self.edits += edit_distance(reference, hypothesis);
        self.ref_words += reference.len();
    }

    pub fn wer(&self) -> f64 {
        if self.ref_words == 0 {
            0.0
        } else {
            self.edits as f64 / self.ref_words as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_cases() {
        assert_eq!(wer(&["a", "b"], &["a", "b"]).unwrap(), 0.0);
        assert_eq!(
            wer(&["a", "b", "c", "d"], &["a", "x", "c", "d"]).unwrap(),
            0.25
        );
        let empty: [&str; 0] = [];
        assert_eq!(wer(&["a", "b", "c"], &empty).unwrap(), 1.0);
        assert_eq!(wer(&["a"], &["x", "y", "z"]).unwrap(), 3.0);
        assert!(wer(&empty, &["a"]).is_err());
    }

    #[test]
    fn oracle_restriction() {
        let v = Vocabulary::from_words(["a", "b"]).unwrap();
        assert_eq!(oracle_restricted_wer(&["a", "b", "a"], &v).unwrap(), 0.0);
        let mut r = vec!["a"; 9];
        r.push("zzz");
        assert!((oracle_restricted_wer(&r, &v).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn tally_pools_edits() {
        let mut t = WerTally::default();
        t.add(&["a", "b"], &["a"]);
        t.add(&["c", "d", "e"], &["c", "d", "e"]);
        assert_eq!(t.wer(), 0.2);
    }
}
