use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ngramlm::{train_ngram, NGramModel};
use crate::synthdata::SyntheticSample;
use crate::unkfill::FillStrategy;
use crate::worddecode::{parse_pseudo_labels, write_pseudo_labels, PseudoLabelRecord};

use super::config::PipelineConfig;
use super::report::{sha256_hex, FillReport, Manifest, RunReport, StageReport};
use super::stages::{
    create_dir, files, oov_rate, pl_wer, read, resolve_alpha, stage1_train_word_model,
    stage2_generate_pls, stage3_fill_unks, stage4_train_ctc, write, Dataset, LetterModel,
    WordModel,
};

/// Letter-model training pairs: a sample and the word sequence to spell.
pub type CtcPairs<'a> = Vec<(&'a SyntheticSample, Vec<String>)>;

/// Stage-1 provenance stored next to the word model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage1Record {
    /// Hash of everything stage 1 depends on; resume requires a match.
    pub fingerprint: String,
    pub alpha: f64,
    pub report: StageReport,
}

/// A config, its dataset, and its run directory. Each step reads its inputs
/// from and writes its outputs to the run directory.
pub struct Workspace {
    pub config: PipelineConfig,
    pub dataset: Dataset,
    train_hash: String,
}

impl Workspace {
    /// Loads the dataset named by the config and creates the run directory.
    pub fn open(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let train_text = read(&config.dataset_dir.join(files::TRAIN))?;
        let dataset = Dataset::load(&config.dataset_dir)?;
        Self::with_dataset(config, dataset, sha256_hex(train_text.as_bytes()))
    }

    /// Uses an in-memory dataset; `train_hash` identifies it for resume checks.
    pub fn with_dataset(
        config: PipelineConfig,
        dataset: Dataset,
        train_hash: String,
    ) -> Result<Self> {
        config.validate()?;
        create_dir(&config.out_dir)?;
        Ok(Workspace {
            config,
            dataset,
            train_hash,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.config.out_dir
    }

    pub fn write_manifest(&self) -> Result<Manifest> {
        Manifest::write(self.dir())
    }

    fn fingerprint(&self) -> String {
        let c = &self.config;
        let key = serde_json::json!({
            "train": self.train_hash,
            "alpha": c.alpha,
            "top_k": c.top_k,
            "dims": [c.features, c.hidden, c.kernel, c.stride, c.depth],
            "settings": c.word_settings(),
        });
        sha256_hex(key.to_string().as_bytes())
    }

    /// Stage 1: trains and saves the word model and its record.
    pub fn train_word(&self) -> Result<(WordModel, Stage1Record)> {
        let alpha = resolve_alpha(&self.config, &self.dataset.train)?;
        let (model, report) =
            stage1_train_word_model(&self.config, &self.dataset.train, &self.dataset.dev, alpha)?;
        model.save(self.dir())?;
        let record = Stage1Record {
            fingerprint: self.fingerprint(),
            alpha,
            report,
        };
        write(
            &self.dir().join(files::STAGE1),
            serde_json::to_string_pretty(&record)?,
        )?;
        Ok((model, record))
    }

    pub fn load_word_model(&self) -> Result<WordModel> {
        WordModel::load(self.dir())
    }

    pub fn load_stage1(&self) -> Result<Stage1Record> {
        Ok(serde_json::from_str(&read(
            &self.dir().join(files::STAGE1),
        )?)?)
    }

    /// Stage 2: greedy pseudo-labels for the train split.
    pub fn decode(&self, model: &WordModel) -> Result<Vec<PseudoLabelRecord>> {
        let pls = stage2_generate_pls(model, &self.dataset.train)?;
        write(
            &self.dir().join(files::PL_GREEDY),
            write_pseudo_labels(&pls),
        )?;
        Ok(pls)
    }

    pub fn load_pls(&self, name: &str) -> Result<Vec<PseudoLabelRecord>> {
        parse_pseudo_labels(&read(&self.dir().join(name))?)
    }

    pub fn train_lm(&self) -> Result<NGramModel> {
        let lm = train_ngram(
            &self.dataset.lm_corpus,
            self.config.lm_order,
            self.config.lm_smoothing,
        )?;
        lm.save(self.dir().join(files::LM))?;
        Ok(lm)
    }

    pub fn load_lm(&self) -> Result<NGramModel> {
        NGramModel::load(self.dir().join(files::LM))
    }

    /// Stage 3 for one strategy; writes `pl_filled_<strategy>.jsonl`.
    pub fn fill(
        &self,
        pls: &[PseudoLabelRecord],
        lm: &NGramModel,
        strategy: FillStrategy,
        beam_width: usize,
    ) -> Result<(Vec<PseudoLabelRecord>, FillReport)> {
        let filled = stage3_fill_unks(pls, lm, strategy, beam_width, &self.dataset.train_bags())?;
        write(
            &self.dir().join(files::pl_filled(strategy)),
            write_pseudo_labels(&filled),
        )?;
        let report = FillReport {
            strategy,
            beam_width,
            train_wer: pl_wer(&filled, &self.dataset.train)?,
            fallbacks: filled
                .iter()
                .map(|r| r.fallback_positions.as_ref().map_or(0, Vec::len))
                .sum(),
        };
        Ok((filled, report))
    }

    /// Training pairs: gold transcripts when `config.gold_ctc`,
    /// otherwise `filled`, minus bag-length mismatches when that filter is
    /// on. Returns the pairs and the number filtered out.
    pub fn ctc_targets<'a>(
        &'a self,
        filled: &[PseudoLabelRecord],
    ) -> Result<(CtcPairs<'a>, usize)> {
        if self.config.gold_ctc {
            let pairs = self
                .dataset
                .train
                .iter()
                .map(|s| (s, s.ref_transcript.clone()))
                .collect();
            return Ok((pairs, 0));
        }
        let by_id: BTreeMap<&str, &SyntheticSample> = self
            .dataset
            .train
            .iter()
            .map(|s| (s.id.as_str(), s))
            .collect();
        let mut kept = Vec::new();
        let mut filtered = 0;
        for r in filled {
            let s = *by_id
                .get(r.id.as_str())
                .ok_or_else(|| Error::invalid(format!("no sample with id {:?}", r.id)))?;
            if self.config.bag_length_filter && r.words.len() != s.bag.total() {
                filtered += 1;
                continue;
            }
            kept.push((s, r.words.clone()));
        }
        Ok((kept, filtered))
    }

    /// Stage 4: trains and saves the letter model; the alphabet also covers
    /// `vocab_words`.
    pub fn train_ctc(
        &self,
        targets: &[(&SyntheticSample, Vec<String>)],
        vocab_words: &[String],
    ) -> Result<(LetterModel, StageReport)> {
        let (model, mut report) =
            stage4_train_ctc(&self.config, targets, vocab_words, &self.dataset.dev)?;
        model.save(self.dir())?;
        report.train_wer = Some(model.wer(&self.dataset.train)?);
        Ok((model, report))
    }

    pub fn load_letter_model(&self) -> Result<LetterModel> {
        LetterModel::load(self.dir(), self.config.letter_upsample)
    }

    /// Stage 1-2 artifacts from an earlier run, if hash-verified and produced
    /// under the same stage-1 inputs.
    fn resume(&self) -> Option<(WordModel, Stage1Record, Vec<PseudoLabelRecord>)> {
        let manifest = Manifest::load(self.dir()).ok()?;
        let needed = [
            files::VOCAB,
            files::WORD_MODEL,
            files::STAGE1,
            files::PL_GREEDY,
        ];
        if !manifest.verifies(self.dir(), &needed) {
            return None;
        }
        let record = self.load_stage1().ok()?;
        if record.fingerprint != self.fingerprint() {
            return None;
        }
        Some((
            self.load_word_model().ok()?,
            record,
            self.load_pls(files::PL_GREEDY).ok()?,
        ))
    }

    /// All four stages. Writes every artifact, `report.json` and the
    /// manifest; on failure the partial report is still written.
    pub fn run_all(&self) -> Result<RunReport> {
        write(&self.dir().join(files::CONFIG), self.config.to_toml())?;
        let mut report = RunReport::default();
        let result = self.run_stages(&mut report);
        if let Err(e) = &result {
            report.error = Some(e.to_string());
        }
        write(&self.dir().join(files::REPORT), report.to_json())?;
        self.write_manifest()?;
        result.map(|()| report)
    }

    fn run_stages(&self, report: &mut RunReport) -> Result<()> {
        let mut seconds = BTreeMap::new();
        let resumed = if self.config.resume {
            self.resume()
        } else {
            None
        };
        let (model, record, pls) = match resumed {
            Some(found) => {
                report.resumed = true;
                found
            }
            None => {
                let (model, record) = timed(&mut seconds, "stage1", || self.train_word())?;
                let pls = timed(&mut seconds, "stage2", || self.decode(&model))?;
                (model, record, pls)
            }
        };
        report.seconds = seconds.clone();
        report.alpha = Some(record.alpha);
        report.vocab_size = Some(model.vocab.len());
        report.train_oov_rate = Some(oov_rate(&self.dataset.train, &model.vocab));
        let pl_train_wer = pl_wer(&pls, &self.dataset.train)?;
        let mut word_report = record.report;
        word_report.train_wer = Some(pl_train_wer);
        report.word_model = Some(word_report);
        report.pl_train_wer = Some(pl_train_wer);
        report.unk_tokens = Some(pls.iter().map(|r| r.unk_positions.len()).sum());

        let lm = timed(&mut seconds, "lm", || self.train_lm())?;
        let start = Instant::now();
        let mut chosen = Vec::new();
        for strategy in FillStrategy::ALL {
            let (filled, fill_report) = self.fill(&pls, &lm, strategy, self.config.beam_width)?;
            report.fill.push(fill_report);
            if strategy == self.config.fill_strategy {
                chosen = filled;
            }
        }
        seconds.insert("stage3".into(), start.elapsed().as_secs_f64());
        report.seconds = seconds.clone();

        let (targets, filtered) = self.ctc_targets(&chosen)?;
        report.letter_targets = Some(if self.config.gold_ctc {
            "gold".to_string()
        } else {
            self.config.fill_strategy.name().to_string()
        });
        report.letter_filtered = filtered;
        let mut words = model.vocab.words().to_vec();
        words.extend(lm.vocabulary().iter().cloned());
        let (_, letter_report) =
            timed(&mut seconds, "stage4", || self.train_ctc(&targets, &words))?;
        report.letter_model = Some(letter_report);
        report.seconds = seconds;
        Ok(())
    }
}

fn timed<T>(
    seconds: &mut BTreeMap<String, f64>,
    stage: &str,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let start = Instant::now();
    let out = f();
    seconds.insert(stage.to_string(), start.elapsed().as_secs_f64());
    out
}

/// Runs the full pipeline on the dataset named by `config`.
pub fn run_all(config: &PipelineConfig) -> Result<RunReport> {
    Workspace::open(config.clone())?.run_all()
}
