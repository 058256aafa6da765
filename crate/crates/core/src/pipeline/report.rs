use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::unkfill::FillStrategy;

use super::train::TrainOutcome;

/// Training curve and final WERs of one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub epoch_losses: Vec<f64>,
    pub dev_wers: Vec<f64>,
    pub best_epoch: usize,
    #[serde(default)]
    pub train_wer: Option<f64>,
    pub dev_wer: f64,
    /// Training examples that could not be used.
    pub skipped: usize,
}

impl StageReport {
    pub fn new(outcome: &TrainOutcome, train_wer: Option<f64>) -> Self {
        StageReport {
            epoch_losses: outcome.epoch_losses.clone(),
            dev_wers: outcome.dev_wers.clone(),
            best_epoch: outcome.best_epoch,
            train_wer,
            dev_wer: outcome.best_dev_wer(),
            skipped: outcome.skipped,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FillReport {
    pub strategy: FillStrategy,
    pub beam_width: usize,
    pub train_wer: f64,
    /// Unk tokens removed because no candidate existed.
    pub fallbacks: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub alpha: Option<f64>,
    pub vocab_size: Option<usize>,
    /// Fraction of train tokens outside the acoustic vocabulary.
    pub train_oov_rate: Option<f64>,
    pub word_model: Option<StageReport>,
    /// Train WER of the greedy pseudo-labels, `<unk>` counted as an error.
    pub pl_train_wer: Option<f64>,
    pub unk_tokens: Option<usize>,
    pub fill: Vec<FillReport>,
    /// `"gold"` or the fill strategy whose labels trained the letter model.
    pub letter_targets: Option<String>,
    /// Pseudo-labels dropped because their length disagrees with the bag.
    pub letter_filtered: usize,
    pub letter_model: Option<StageReport>,
    pub resumed: bool,
    /// Wall-clock seconds per stage.
    pub seconds: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunReport {
    /// The report with timings removed, for determinism comparisons.
    pub fn without_timings(&self) -> RunReport {
        RunReport {
            seconds: BTreeMap::new(),
            ..self.clone()
        }
    }

    pub fn total_seconds(&self) -> f64 {
        self.seconds.values().sum()
    }

    pub fn fill_wer(&self, strategy: FillStrategy) -> Option<f64> {
        self.fill
            .iter()
            .find(|f| f.strategy == strategy)
            .map(|f| f.train_wer)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub const MANIFEST: &str = "manifest.json";

/// Artifact name to SHA-256 hex digest.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    /// Hashes every regular file directly inside `dir` except the manifest.
    pub fn scan(dir: &Path) -> Result<Self> {
        let mut artifacts = BTreeMap::new();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path = entry.path();
            let name = entry.file_name().to_string_lossy().into_owned();
            if !path.is_file() || name == MANIFEST {
                continue;
            }
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            artifacts.insert(name, sha256_hex(&bytes));
        }
        Ok(Manifest { artifacts })
    }

    pub fn write(dir: &Path) -> Result<Self> {
        let m = Self::scan(dir)?;
        let path = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&m)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(m)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// True when each named file exists in `dir` and matches its recorded hash.
    pub fn verifies(&self, dir: &Path, names: &[&str]) -> bool {
        names.iter().all(|name| {
            let Some(expected) = self.artifacts.get(*name) else {
                return false;
            };
            std::fs::read(dir.join(name)).is_ok_and(|b| &sha256_hex(&b) == expected)
        })
    }
}
