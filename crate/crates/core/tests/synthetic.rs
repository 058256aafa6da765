use std::collections::HashMap;

use wordbag::pipeline::{resolve_alpha, stage1_train_word_model, PipelineConfig};
use wordbag::synthdata::{generate_corpus, word_name, SynthConfig};

/// Upper 0.1% point of the chi-squared distribution with 34 degrees of freedom.
const CHI2_34_999: f64 = 65.25;

#[test]
fn word_frequencies_follow_stationary_distribution() {
    let cfg = SynthConfig {
        dev_size: 0,
        lm_sentences: 0,
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(&cfg).unwrap();
    let index: HashMap<String, usize> = (0..cfg.num_words()).map(|i| (word_name(i), i)).collect();
    let tokens: Vec<usize> = corpus
        .train
        .iter()
        .flat_map(|s| s.ref_transcript.iter().map(|w| index[w]))
        .take(10_000)
        .collect();
    assert_eq!(tokens.len(), 10_000);
    let mut counts = vec![0.0; cfg.num_words()];
    for t in tokens {
        counts[t] += 1.0;
    }
    let chi2: f64 = counts
        .iter()
        .zip(&corpus.grammar.stationary)
        .map(|(&o, &p)| {
            let e = p * 10_000.0;
            (o - e).powi(2) / e
        })
        .sum();
    assert_eq!(cfg.num_words() - 1, 34);
    assert!(chi2 < CHI2_34_999, "chi2 = {chi2}");
}

#[test]
fn lm_corpus_is_not_copied_from_transcripts() {
    let cfg = SynthConfig {
        train_size: 200,
        dev_size: 50,
        lm_sentences: 200,
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(&cfg).unwrap();
    let regenerated = generate_corpus(&SynthConfig {
        lm_sentences: 0,
        ..cfg.clone()
    })
    .unwrap();
    // the acoustic splits do not depend on the LM corpus at all
    assert_eq!(corpus.train, regenerated.train);
    assert_eq!(corpus.dev, regenerated.dev);
}

#[test]
fn trained_model_fires_near_word_onsets() {
    let cfg = PipelineConfig {
        lm_sentences: 10,
        ..PipelineConfig::default()
    };
    let corpus = generate_corpus(&cfg.synth_config()).unwrap();
    let alpha = resolve_alpha(&cfg, &corpus.train).unwrap();
    let (model, _) = stage1_train_word_model(&cfg, &corpus.train, &corpus.dev, alpha).unwrap();
    let stride = cfg.stride as i64;
    let (mut hits, mut total) = (0, 0);
    for sample in &corpus.dev {
        let loc = model.localize(sample).unwrap();
        let onsets = loc.input_onsets(cfg.stride);
        let mut used = vec![false; loc.entries.len()];
        for (word, &truth) in sample.ref_transcript.iter().zip(&sample.ref_onsets) {
            total += 1;
            let found = loc.entries.iter().enumerate().position(|(i, e)| {
                !used[i] && &e.word == word && (onsets[i] as i64 - truth as i64).abs() <= 2 * stride
            });
            if let Some(i) = found {
                used[i] = true;
                hits += 1;
            }
        }
    }
    let rate = hits as f64 / total as f64;
    assert!(
        rate >= 0.8,
        "{hits}/{total} onsets within two output frames"
    );
}
