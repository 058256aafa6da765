//! JSON-lines dataset files.
//!
//! `{"id": .., "frames": [[..]], "bag": {word: count}, "ref": [..], "onsets": [..]}`
//!
//! `ref` and `onsets` are evaluation-only and may be absent.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::SyntheticSample;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::vocab::Bag;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: String,
    pub frames: Vec<Vec<f64>>,
    pub bag: BTreeMap<String, usize>,
    #[serde(default, rename = "ref")]
    pub reference: Vec<String>,
    #[serde(default)]
    pub onsets: Vec<usize>,
}

impl From<&SyntheticSample> for DatasetRecord {
    fn from(s: &SyntheticSample) -> Self {
        DatasetRecord {
            id: s.id.clone(),
            frames: s.features.to_rows(),
            bag: s.bag.iter().map(|(w, c)| (w.to_string(), c)).collect(),
            reference: s.ref_transcript.clone(),
            onsets: s.ref_onsets.clone(),
        }
    }
}

impl DatasetRecord {
    fn into_sample(self, line: usize) -> Result<SyntheticSample> {
        if self.frames.is_empty() {
            return Err(Error::parse(line, "no frames"));
        }
        let features =
            Matrix::from_rows(&self.frames).ok_or_else(|| Error::parse(line, "ragged frames"))?;
        if features.cols() == 0 {
            return Err(Error::parse(line, "zero-width frames"));
        }
        if features.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(line, "non-finite feature"));
        }
        let mut bag = Bag::new();
        for (w, &c) in &self.bag {
            if c == 0 || w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::parse(line, format!("invalid bag entry {w:?}: {c}")));
            }
            bag.insert_n(w, c);
        }
        if bag.is_empty() {
            return Err(Error::parse(line, "empty bag"));
        }
        if !self.onsets.is_empty() && self.onsets.len() != self.reference.len() {
            return Err(Error::parse(line, "onsets and ref lengths differ"));
        }
        Ok(SyntheticSample {
            id: self.id,
            features,
            bag,
            ref_transcript: self.reference,
            ref_onsets: self.onsets,
        })
    }
}

/// Parses a dataset, checking every record is well formed, ids are unique
/// and all records share one feature width. Blank lines are skipped.
pub fn parse_dataset(text: &str) -> Result<Vec<SyntheticSample>> {
    let mut out: Vec<SyntheticSample> = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(lineno, e.to_string()))?;
        if !ids.insert(rec.id.clone()) {
            return Err(Error::parse(lineno, format!("duplicate id {:?}", rec.id)));
        }
        let sample = rec.into_sample(lineno)?;
        if let Some(first) = out.first() {
            if first.features.cols() != sample.features.cols() {
                return Err(Error::parse(
                    lineno,
                    "feature width differs from first record",
                ));
            }
        }
        out.push(sample);
    }
    Ok(out)
}

pub fn write_dataset(samples: &[SyntheticSample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(&DatasetRecord::from(s)).expect("plain data"));
        out.push('\n');
    }
    out
}
