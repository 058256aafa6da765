use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;
use wordbag::aggloss::loss_and_grad;
use wordbag::encoder::{backward, forward, init_encoder, optimizer_step, OptimizerState};
use wordbag::pipeline::{
    files, pl_wer, resolve_alpha, stage1_train_word_model, Dataset, LetterModel, Manifest,
    PipelineConfig, RunReport, WeakExample, WordModel, Workspace, MANIFEST,
};
use wordbag::vocab::build_vocabulary;
use wordbag::worddecode::parse_pseudo_labels;

fn tiny(out: &TempDir) -> PipelineConfig {
    PipelineConfig {
        out_dir: out.path().to_path_buf(),
        train_size: 80,
        dev_size: 20,
        lm_sentences: 300,
        word_epochs: 3,
        ctc_epochs: 2,
        letter_hidden: 24,
        bag_length_filter: false,
        ..PipelineConfig::default()
    }
}

fn workspace(cfg: &PipelineConfig) -> Workspace {
    let dataset = Dataset::generate(cfg).unwrap();
    Workspace::with_dataset(cfg.clone(), dataset, "tiny".into()).unwrap()
}

#[test]
fn full_batch_descent_halves_the_loss() {
    let cfg = PipelineConfig {
        train_size: 10,
        dev_size: 1,
        lm_sentences: 1,
        ..PipelineConfig::default()
    };
    let data = Dataset::generate(&cfg).unwrap();
    let vocab = build_vocabulary(data.train.iter().map(|s| &s.bag), cfg.top_k).unwrap();
    let alpha = resolve_alpha(&cfg, &data.train).unwrap();
    let examples: Vec<WeakExample> = data
        .train
        .iter()
        .map(|s| WeakExample::from_sample(s, &vocab, alpha, cfg.kernel).unwrap())
        .collect();
    let mut params = init_encoder(cfg.seed, cfg.word_dims(vocab.num_classes()).unwrap()).unwrap();
    let mut state = OptimizerState::new(&params, cfg.learning_rate);
    let mean_loss = |params: &_| -> (f64, _) {
        let mut total = 0.0;
        let mut grad = None;
        for ex in &examples {
            let logits = forward(params, &ex.features).unwrap();
            let (l, g) = loss_and_grad(&logits, &ex.target).unwrap();
            total += l;
            let gp = backward(params, &ex.features, &g).unwrap();
            match &mut grad {
                None => grad = Some(gp),
                Some(acc) => acc.add_scaled(&gp, 1.0),
            }
        }
        let n = examples.len() as f64;
        let mut grad = grad.unwrap();
        grad.scale(1.0 / n);
        (total / n, grad)
    };
    let (initial, _) = mean_loss(&params);
    for _ in 0..200 {
        let (_, grad) = mean_loss(&params);
        optimizer_step(&mut params, &grad, &mut state).unwrap();
    }
    let (last, _) = mean_loss(&params);
    assert!(last <= 0.5 * initial, "{initial} -> {last}");
}

#[test]
fn stage1_never_reads_word_order() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny(&dir);
    let data = Dataset::generate(&cfg).unwrap();
    let mut shuffled = data.train.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for s in &mut shuffled {
        s.ref_transcript.shuffle(&mut rng);
        s.ref_onsets.shuffle(&mut rng);
    }
    assert_ne!(shuffled, data.train);
    let (a, ra) = stage1_train_word_model(&cfg, &data.train, &data.dev, 0.5).unwrap();
    let (b, rb) = stage1_train_word_model(&cfg, &shuffled, &data.dev, 0.5).unwrap();
    let bits = |m: &WordModel| {
        m.params
            .values()
            .iter()
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
    let loss_bits = |r: &wordbag::pipeline::StageReport| {
        r.epoch_losses
            .iter()
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(loss_bits(&ra), loss_bits(&rb));
}

#[test]
fn pipeline_is_deterministic() {
    let (d1, d2) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let r1 = workspace(&tiny(&d1)).run_all().unwrap();
    let r2 = workspace(&tiny(&d2)).run_all().unwrap();
    assert_eq!(r1.without_timings(), r2.without_timings());
    for name in [
        files::WORD_MODEL,
        files::PL_GREEDY,
        files::LETTER_MODEL,
        files::LM,
    ] {
        assert_eq!(
            std::fs::read(d1.path().join(name)).unwrap(),
            std::fs::read(d2.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

#[test]
fn report_is_recomputable_from_artifacts() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny(&dir);
    let ws = workspace(&cfg);
    let report = ws.run_all().unwrap();
    let saved: RunReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(files::REPORT)).unwrap())
            .unwrap();
    assert_eq!(saved, report);

    let word = WordModel::load(dir.path()).unwrap();
    let stage1 = report.word_model.as_ref().unwrap();
    assert!(close(
        word.dev_wer(&ws.dataset.dev).unwrap(),
        stage1.dev_wer
    ));
    assert_eq!(word.vocab.len(), report.vocab_size.unwrap());

    let read_pls = |name: &str| {
        parse_pseudo_labels(&std::fs::read_to_string(dir.path().join(name)).unwrap()).unwrap()
    };
    let greedy = read_pls(files::PL_GREEDY);
    assert!(close(
        pl_wer(&greedy, &ws.dataset.train).unwrap(),
        report.pl_train_wer.unwrap()
    ));
    let unks: usize = greedy.iter().map(|r| r.unk_positions.len()).sum();
    assert_eq!(unks, report.unk_tokens.unwrap());
    assert_eq!(report.fill.len(), 3);
    for fill in &report.fill {
        let filled = read_pls(&files::pl_filled(fill.strategy));
        assert!(close(
            pl_wer(&filled, &ws.dataset.train).unwrap(),
            fill.train_wer
        ));
    }

    let letter = LetterModel::load(dir.path(), cfg.letter_upsample).unwrap();
    let stage4 = report.letter_model.as_ref().unwrap();
    assert!(close(letter.wer(&ws.dataset.dev).unwrap(), stage4.dev_wer));
    assert!(close(
        letter.wer(&ws.dataset.train).unwrap(),
        stage4.train_wer.unwrap()
    ));
}

#[test]
fn resume_skips_stage1_and_reproduces_the_report() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny(&dir);
    let first = workspace(&cfg).run_all().unwrap();
    assert!(!first.resumed);
    let model_bytes = std::fs::read(dir.path().join(files::WORD_MODEL)).unwrap();

    let again = workspace(&PipelineConfig {
        resume: true,
        ..cfg.clone()
    })
    .run_all()
    .unwrap();
    assert!(again.resumed);
    assert!(!again.seconds.contains_key("stage1"));
    assert_eq!(
        std::fs::read(dir.path().join(files::WORD_MODEL)).unwrap(),
        model_bytes
    );
    let expected = RunReport {
        resumed: true,
        ..first.without_timings()
    };
    assert_eq!(again.without_timings(), expected);
}

#[test]
fn resume_refuses_tampered_or_foreign_artifacts() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny(&dir);
    workspace(&cfg).run_all().unwrap();
    let manifest = Manifest::load(dir.path()).unwrap();
    let names: Vec<&str> = manifest.artifacts.keys().map(String::as_str).collect();
    assert!(manifest.verifies(dir.path(), &names));
    assert!(!names.contains(&MANIFEST));

    // a different stage-1 setting must retrain
    let changed = PipelineConfig {
        resume: true,
        top_k: 20,
        ..cfg.clone()
    };
    assert!(!workspace(&changed).run_all().unwrap().resumed);

    // so must a modified pseudo-label file
    let pl = dir.path().join(files::PL_GREEDY);
    let mut text = std::fs::read_to_string(&pl).unwrap();
    text.push('\n');
    std::fs::write(&pl, text).unwrap();
    assert!(!Manifest::load(dir.path())
        .unwrap()
        .verifies(dir.path(), &[files::PL_GREEDY]));
    let resumed = PipelineConfig {
        resume: true,
        ..cfg
    };
    assert!(!workspace(&resumed).run_all().unwrap().resumed);
}

#[test]
fn failure_leaves_a_partial_report() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny(&dir);
    let mut dataset = Dataset::generate(&cfg).unwrap();
    dataset.lm_corpus.clear();
    let ws = Workspace::with_dataset(cfg, dataset, "no-lm".into()).unwrap();
    assert!(ws.run_all().is_err());
    let report: RunReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(files::REPORT)).unwrap())
            .unwrap();
    assert!(report.error.is_some());
    assert!(report.word_model.is_some());
    assert!(report.pl_train_wer.is_some());
    assert!(report.fill.is_empty());
    assert!(report.letter_model.is_none());
    assert!(dir.path().join(MANIFEST).exists());
}
