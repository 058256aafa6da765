//! The acceptance criteria as executable checks. Each criterion yields a
//! pass flag and a one-line summary of the measured numbers.

mod instances;

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wordbag::ctc::{ctc_brute_force, ctc_loss};
use wordbag::pipeline::{
    best_alpha, stage1_train_word_model, sweep_alpha, sweep_vocab, Dataset, PipelineConfig,
    RunReport, WordModel, Workspace,
};
use wordbag::unkfill::{exhaustive_fill, fill_unk, FillStrategy};
use wordbag::vocab::{default_alpha, make_target, Bag, Vocabulary};

use instances::*;

/// Result of one check.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let o = f();
    (o, start.elapsed())
}

fn gradients() -> Outcome {
    let (agg, ctc) = (0..100).fold((0.0f64, 0.0f64), |(a, c), seed| {
        (
            a.max(aggloss_gradient_error(seed)),
            c.max(ctc_gradient_error(10_000 + seed)),
        )
    });
    outcome(
        agg < FD_TOLERANCE && ctc < FD_TOLERANCE,
        format!("100+100 instances, max rel err aggloss {agg:.2e}, ctc {ctc:.2e}"),
    )
}

fn ctc_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..200 {
        let mut r = rng(20_000 + seed);
        let t = r.gen_range(1..=8);
        let c = r.gen_range(2..=6);
        let e = random_emissions(&mut r, t, c);
        let target = random_ctc_target(&mut r, t, c, 4);
        let fb = ctc_loss(&e, &target).unwrap().0;
        let bf = ctc_brute_force(&e, &target).unwrap();
        worst = worst.max((fb - bf).abs());
    }
    outcome(
        worst < 1e-9,
        format!("200 instances, max |diff| {worst:.2e}"),
    )
}

fn fill_oracle() -> Outcome {
    let (mut mismatches, mut regressions) = (0, 0);
    for seed in 0..200 {
        let mut r = rng(30_000 + seed);
        let lm = random_lm(&mut r);
        let (pl, cands) = random_fill_instance(&mut r, &lm);
        let bag: Bag = cands.iter().collect();
        let fill = |b| {
            fill_unk(
                &pl,
                &lm,
                FillStrategy::ReplaceTranscriptVocab,
                Some(&bag),
                b,
            )
            .unwrap()
            .label
        };
        let full = cands.len().pow(pl.unk_positions().len() as u32);
        if fill(full) != exhaustive_fill(&pl, &lm, &cands).unwrap() {
            mismatches += 1;
        }
        let scores: Vec<f64> = (1..=full).map(|b| lm.score(fill(b).words())).collect();
        if scores.windows(2).any(|w| w[1] < w[0] - 1e-12) {
            regressions += 1;
        }
    }
    outcome(
        mismatches == 0 && regressions == 0,
        format!("200 instances, {mismatches} oracle mismatches, {regressions} width regressions"),
    )
}

fn worked_example() -> Outcome {
    let bag: Bag = ["w1", "w0", "w1", "w2"].iter().collect();
    let vocab = Vocabulary::from_words(["w0", "w1"]).unwrap();
    let err = |alpha: f64, want: [f64; 4]| {
        let got = make_target(&bag, &vocab, alpha).unwrap();
        got.probs()
            .iter()
            .zip(want)
            .map(|(g, w)| (g - w).abs())
            .fold(0.0, f64::max)
    };
    let e0 = err(0.0, [0.25, 0.5, 0.25, 0.0]);
    let e5 = err(0.5, [0.125, 0.25, 0.125, 0.5]);
    outcome(
        e0 < 1e-12 && e5 < 1e-12,
        format!("max |diff| alpha=0 {e0:.1e}, alpha=0.5 {e5:.1e}"),
    )
}

fn blank_prior() -> Outcome {
    let a = default_alpha(2.7, 33.33).unwrap();
    outcome(
        (0.915..=0.925).contains(&a),
        format!("default_alpha(2.7, 33.33) = {a:.4}"),
    )
}

fn alpha_sweep(cfg: &PipelineConfig, data: &Dataset) -> Outcome {
    let alphas = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
    let start = Instant::now();
    let points = sweep_alpha(cfg, data, &alphas).unwrap();
    let elapsed = start.elapsed();
    let at = |a: f64| points.iter().find(|p| p.alpha == a).unwrap().dev_wer;
    let best = best_alpha(&points).unwrap();
    let curve: Vec<String> = points
        .iter()
        .map(|p| format!("{}:{:.1}%", p.alpha, 100.0 * p.dev_wer))
        .collect();
    let pass =
        best.dev_wer <= 0.5 * at(0.3) && at(0.0) >= 0.9 && elapsed < Duration::from_secs(1800);
    outcome(
        pass,
        format!(
            "best alpha {} at {:.2}% vs {:.2}% at 0.3 (need <= half); {:.2}% at 0 (need >= 90%); {:.0}s; [{}]",
            best.alpha,
            100.0 * best.dev_wer,
            100.0 * at(0.3),
            100.0 * at(0.0),
            elapsed.as_secs_f64(),
            curve.join(" ")
        ),
    )
}

fn fill_ordering(report: &RunReport) -> Outcome {
    let wer = |s| report.fill_wer(s).unwrap();
    let (remove, full, transcript) = (
        wer(FillStrategy::Remove),
        wer(FillStrategy::ReplaceFullVocab),
        wer(FillStrategy::ReplaceTranscriptVocab),
    );
    let relative = 1.0 - transcript / remove;
    outcome(
        transcript <= full && full <= remove && relative >= 0.2,
        format!(
            "train PL WER transcript {:.2}% <= full {:.2}% <= remove {:.2}%, transcript vs remove -{:.0}%",
            100.0 * transcript,
            100.0 * full,
            100.0 * remove,
            100.0 * relative
        ),
    )
}

fn end_to_end(report: &RunReport, elapsed: Duration) -> Outcome {
    let word = report.word_model.as_ref().unwrap().dev_wer;
    let letter = report.letter_model.as_ref().unwrap().dev_wer;
    outcome(
        word <= 0.15 && letter <= word + 0.02 && elapsed < Duration::from_secs(600),
        format!(
            "word dev WER {:.2}% (<= 15%), letter dev WER {:.2}% (<= word + 2), {:.0}s (< 600s)",
            100.0 * word,
            100.0 * letter,
            elapsed.as_secs_f64()
        ),
    )
}

fn order_blindness(
    cfg: &PipelineConfig,
    data: &Dataset,
    run: &WordModel,
    report: &RunReport,
) -> Outcome {
    let mut train = data.train.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for s in &mut train {
        s.ref_transcript.shuffle(&mut rng);
        s.ref_onsets.shuffle(&mut rng);
    }
    let alpha = report.alpha.unwrap();
    let (model, stage) = stage1_train_word_model(cfg, &train, &data.dev, alpha).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let first = report.word_model.as_ref().unwrap();
    let same_params = bits(model.params.values()) == bits(run.params.values());
    let same_losses = bits(&stage.epoch_losses) == bits(&first.epoch_losses);
    let same_wers = bits(&stage.dev_wers) == bits(&first.dev_wers);
    outcome(
        same_params && same_losses && same_wers,
        format!(
            "shuffled refs: params identical {same_params}, epoch losses identical {same_losses}, dev WERs identical {same_wers}"
        ),
    )
}

fn vocab_sweep(cfg: &PipelineConfig, data: &Dataset) -> Outcome {
    let points = sweep_vocab(cfg, data, &[5, 10, 20, 30, 35]).unwrap();
    let monotone = points
        .windows(2)
        .all(|w| w[1].oracle_wer <= w[0].oracle_wer);
    let bounded = points.iter().all(|p| p.dev_wer >= p.oracle_wer);
    let last = points.last().unwrap();
    let gap = last.dev_wer - last.oracle_wer;
    let rows: Vec<String> = points
        .iter()
        .map(|p| {
            format!(
                "{}:{:.1}%/{:.1}%",
                p.size,
                100.0 * p.dev_wer,
                100.0 * p.oracle_wer
            )
        })
        .collect();
    outcome(
        monotone && bounded && gap <= 0.10,
        format!(
            "oracle monotone {monotone}, weak >= oracle {bounded}, gap at {} = {:.2} points; [{}]",
            last.size,
            100.0 * gap,
            rows.join(" ")
        ),
    )
}

/// A numbered, named outcome.
#[derive(Clone, Debug)]
pub struct Criterion {
    pub number: usize,
    pub name: &'static str,
    pub outcome: Outcome,
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.outcome.pass { "PASS" } else { "FAIL" };
        write!(
            f,
            "criterion {:>2} {verdict}: {}: {}",
            self.number, self.name, self.outcome.detail
        )
    }
}

fn within(o: Outcome, t: Duration, limit_secs: u64) -> Outcome {
    outcome(
        o.pass && t < Duration::from_secs(limit_secs),
        format!("{}; {:.1}s (< {limit_secs}s)", o.detail, t.as_secs_f64()),
    )
}

/// Runs every criterion in order on the default configuration, calling
/// `on_result` as each one completes. Run artifacts go to a temporary directory.
pub fn evaluate(mut on_result: impl FnMut(&Criterion)) -> Vec<Criterion> {
    let mut results = Vec::new();
    let mut record = |number, name, outcome| {
        let c = Criterion {
            number,
            name,
            outcome,
        };
        on_result(&c);
        results.push(c);
    };

    let (o, t) = timed(gradients);
    record(1, "gradient check", within(o, t, 30));
    let (o, t) = timed(ctc_oracle);
    record(2, "ctc oracle", within(o, t, 60));
    record(3, "unk fill oracle", fill_oracle());
    record(4, "worked target example", worked_example());
    record(5, "blank prior arithmetic", blank_prior());

    let out = tempfile::TempDir::new().expect("temporary run directory");
    let cfg = PipelineConfig {
        out_dir: out.path().to_path_buf(),
        ..PipelineConfig::default()
    };
    let start = Instant::now();
    let data = Dataset::generate(&cfg).unwrap();
    let ws = Workspace::with_dataset(cfg.clone(), data.clone(), "default".into()).unwrap();
    let report = ws.run_all().unwrap();
    let elapsed = start.elapsed();
    let word_model = ws.load_word_model().unwrap();

    record(6, "blank prior sweep shape", alpha_sweep(&cfg, &data));
    record(7, "fill strategy ordering", fill_ordering(&report));
    record(8, "end-to-end pipeline", end_to_end(&report, elapsed));
    record(
        9,
        "order blindness",
        order_blindness(&cfg, &data, &word_model, &report),
    );
    record(10, "nested vocabulary sweep", vocab_sweep(&cfg, &data));
    results
}
