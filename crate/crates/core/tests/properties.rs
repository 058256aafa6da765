use proptest::collection::vec;
use proptest::prelude::*;
use wordbag::aggloss::{aggregate, log_softmax, loss_and_grad, Emissions};
use wordbag::matrix::{log_sum_exp, Matrix};
use wordbag::ngramlm::{train_ngram, NGramModel, WordId};
use wordbag::vocab::{make_target, Bag, TargetDistribution, Vocabulary};
use wordbag::worddecode::{greedy_decode, localize};

const WORDS: [&str; 6] = ["w0", "w1", "w2", "w3", "w4", "w5"];

fn vocab() -> Vocabulary {
    Vocabulary::from_words(&WORDS[..4]).unwrap()
}

fn transcript() -> impl Strategy<Value = Vec<&'static str>> {
    vec(prop::sample::select(&WORDS[..]), 1..12)
}

fn logits(max_t: usize, c: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_t).prop_flat_map(move |t| {
        vec(-5.0f64..5.0, t * c).prop_map(move |v| Matrix::from_vec(t, c, v))
    })
}

fn target(c: usize) -> impl Strategy<Value = TargetDistribution> {
    vec(0.0f64..1.0, c)
        .prop_filter("needs mass", |w| w.iter().sum::<f64>() > 1e-3)
        .prop_map(|w| {
            let s: f64 = w.iter().sum();
            TargetDistribution::from_probs(w.iter().map(|x| x / s).collect()).unwrap()
        })
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|x| x * x.ln())
        .sum::<f64>()
}

proptest! {
    #[test]
    fn target_ignores_word_order(words in transcript(), alpha in 0.0f64..0.99, seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = words.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = make_target(&words.iter().collect::<Bag>(), &vocab(), alpha).unwrap();
        let b = make_target(&shuffled.iter().collect::<Bag>(), &vocab(), alpha).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn target_sums_to_one(words in transcript(), alpha in 0.0f64..0.99) {
        let t = make_target(&words.iter().collect::<Bag>(), &vocab(), alpha).unwrap();
        prop_assert!((t.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert_eq!(t.probs()[vocab().blank_id()], alpha);
    }

    #[test]
    fn alpha_scales_word_mass(words in transcript(), a1 in 0.0f64..0.5, a2 in 0.5f64..0.99) {
        let bag: Bag = words.iter().collect();
        let v = vocab();
        let t1 = make_target(&bag, &v, a1).unwrap();
        let t2 = make_target(&bag, &v, a2).unwrap();
        let ratio = (1.0 - a2) / (1.0 - a1);
        for c in 0..v.len() {
            prop_assert!((t2.probs()[c] - t1.probs()[c] * ratio).abs() < 1e-12);
        }
    }

    #[test]
    fn all_oov_bag_goes_to_unk(n in 1usize..6, alpha in 0.0f64..0.99) {
        let bag: Bag = std::iter::repeat_n("w5", n).collect();
        let v = vocab();
        let t = make_target(&bag, &v, alpha).unwrap();
        prop_assert!((t.probs()[v.unk_id()] - (1.0 - alpha)).abs() < 1e-15);
    }

    #[test]
    fn aggregate_is_normalized(z in logits(8, 6)) {
        let q = aggregate(&log_softmax(&z).unwrap()).unwrap();
        prop_assert!(log_sum_exp(&q.log_q).abs() < 1e-6);
    }

    #[test]
    fn loss_is_shift_invariant_per_frame(z in logits(8, 5), p in target(5), shifts in vec(-50.0f64..50.0, 8)) {
        let mut shifted = z.clone();
        for (t, s) in shifts.iter().enumerate().take(z.rows()) {
            shifted.row_mut(t).iter_mut().for_each(|v| *v += s);
        }
        let (a, _) = loss_and_grad(&z, &p).unwrap();
        let (b, _) = loss_and_grad(&shifted, &p).unwrap();
        prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
    }

    #[test]
    fn loss_bounded_below_by_entropy(z in logits(8, 5), p in target(5)) {
        let (loss, _) = loss_and_grad(&z, &p).unwrap();
        prop_assert!(loss >= entropy(p.probs()) - 1e-12);
    }

    #[test]
    fn loss_equals_entropy_when_prediction_matches(w in vec(0.01f64..1.0, 5), t in 1usize..6) {
        let s: f64 = w.iter().sum();
        let p = TargetDistribution::from_probs(w.iter().map(|x| x / s).collect()).unwrap();
        let row: Vec<f64> = p.probs().iter().map(|x| x.ln()).collect();
        let z = Matrix::from_vec(t, 5, row.repeat(t));
        let (loss, _) = loss_and_grad(&z, &p).unwrap();
        prop_assert!((loss - entropy(p.probs())).abs() < 1e-7);
    }

    #[test]
    fn decoded_words_never_exceed_frames(z in logits(20, 6)) {
        let e = log_softmax(&z).unwrap();
        prop_assert!(greedy_decode(&e, &vocab()).unwrap().len() <= e.num_frames());
    }

    #[test]
    fn decoding_is_deterministic(z in logits(20, 6)) {
        let e = log_softmax(&z).unwrap();
        prop_assert_eq!(greedy_decode(&e, &vocab()).unwrap(), greedy_decode(&e, &vocab()).unwrap());
    }

    #[test]
    fn decoding_a_collapsed_sequence_is_identity(ids in vec(0usize..5, 0..10)) {
        let v = vocab();
        let blank = v.blank_id();
        let mut frames = vec![blank];
        for &id in &ids {
            frames.push(id);
            frames.push(blank);
        }
        let mut lp = Matrix::zeros(frames.len(), v.num_classes());
        for (t, &cls) in frames.iter().enumerate() {
            for c in 0..v.num_classes() {
                lp.row_mut(t)[c] = if c == cls { 0.9f64.ln() } else { (0.1 / 5.0f64).ln() };
            }
        }
        let e = Emissions::from_log_probs(lp).unwrap();
        let want: Vec<&str> = ids.iter().map(|&i| v.lookup(i).unwrap()).collect();
        let got = greedy_decode(&e, &v).unwrap();
        prop_assert_eq!(got.words(), &want[..]);
    }
}

#[test]
fn localization_agrees_with_greedy_on_random_emissions() {
    use rand::{Rng, SeedableRng};
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let v = vocab();
    for _ in 0..1000 {
        let t = r.gen_range(1..30);
        // coarse values so that argmax ties actually occur
        let z = Matrix::from_vec(
            t,
            v.num_classes(),
            (0..t * v.num_classes())
                .map(|_| r.gen_range(0..3) as f64)
                .collect(),
        );
        let e = log_softmax(&z).unwrap();
        let loc = localize(&e, &v).unwrap();
        let greedy = greedy_decode(&e, &v).unwrap();
        assert_eq!(loc.words(), greedy.words());
        let mut last_end = 0;
        for w in &loc.entries {
            assert!(w.onset_frame >= last_end && w.span >= 1);
            last_end = w.onset_frame + w.span;
        }
        assert!(last_end <= t);
    }
}

fn lm_corpus() -> Vec<Vec<&'static str>> {
    vec![
        vec!["a", "b", "c"],
        vec!["a", "b"],
        vec!["b", "c", "a", "a"],
        vec!["c"],
        vec!["d", "a", "b", "c", "d"],
    ]
}

fn outcomes(lm: &NGramModel) -> Vec<WordId> {
    let mut ids: Vec<_> = lm.vocabulary().iter().map(|w| lm.word_id(w)).collect();
    ids.push(lm.unk());
    ids.push(lm.eos());
    ids
}

#[test]
fn lm_conditionals_normalize() {
    use rand::{Rng, SeedableRng};
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for order in 1..=4 {
        let lm = train_ngram(&lm_corpus(), order, 0.1).unwrap();
        let mut history_pool: Vec<_> = lm.vocabulary().iter().map(|w| lm.word_id(w)).collect();
        history_pool.push(lm.unk());
        history_pool.push(lm.bos());
        for _ in 0..100 {
            let len = r.gen_range(0..order + 1);
            let h: Vec<_> = (0..len)
                .map(|_| history_pool[r.gen_range(0..history_pool.len())])
                .collect();
            let total: f64 = outcomes(&lm)
                .iter()
                .map(|&w| lm.log_prob(&h, w).exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-9, "order {order}, {h:?}: {total}");
        }
    }
}

#[test]
fn unseen_context_backs_off_to_lower_order() {
    let tri = train_ngram(&lm_corpus(), 3, 0.1).unwrap();
    let bi = train_ngram(&lm_corpus(), 2, 0.1).unwrap();
    // "c b" never occurs, "b" does
    let (c, b) = (tri.word_id("c"), tri.word_id("b"));
    for w in outcomes(&tri) {
        let a = tri.log_prob(&[c, b], w);
        let want = bi.log_prob(&[bi.word_id("b")], w);
        assert!((a - want).abs() < 1e-12);
    }
}

#[test]
fn lm_training_is_deterministic() {
    let a = train_ngram(&lm_corpus(), 3, 0.1).unwrap();
    let b = train_ngram(&lm_corpus(), 3, 0.1).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    assert_eq!(a.score(&["a", "b", "zz"]), b.score(&["a", "b", "zz"]));
}
