//! End-to-end training stages, run directories, and sweeps.

mod config;
mod report;
mod stages;
mod train;
mod workspace;

pub use config::PipelineConfig;
pub use report::{sha256_hex, FillReport, Manifest, RunReport, StageReport, MANIFEST};
pub use stages::{
    best_alpha, files, heuristic_alpha, oracle_wer, pl_wer, resolve_alpha, stage1_train_word_model,
    stage2_generate_pls, stage3_fill_unks, stage4_train_ctc, sweep_alpha, sweep_vocab, AlphaPoint,
    Dataset, LetterModel, VocabPoint, WordModel,
};
pub use train::{
    letter_model_wer, letter_model_words, train_letter_model, train_word_model, word_model_wer,
    CtcExample, TrainExample, TrainOutcome, TrainSettings, WeakExample,
};
pub use workspace::{run_all, CtcPairs, Stage1Record, Workspace};
