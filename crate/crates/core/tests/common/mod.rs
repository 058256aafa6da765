#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wordbag::aggloss::{log_softmax, loss_and_grad, Emissions};
use wordbag::ctc::{ctc_loss, CtcTarget};
use wordbag::ngramlm::{train_ngram, NGramModel};
use wordbag::vocab::TargetDistribution;
use wordbag::worddecode::PseudoLabel;
use wordbag::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_logits(rng: &mut ChaCha8Rng, t: usize, c: usize, scale: f64) -> Matrix {
    let data = (0..t * c).map(|_| rng.gen_range(-scale..scale)).collect();
    Matrix::from_vec(t, c, data)
}

pub fn random_emissions(rng: &mut ChaCha8Rng, t: usize, c: usize) -> Emissions {
    log_softmax(&random_logits(rng, t, c, 2.0)).unwrap()
}

/// Random distribution with some exact zeros.
pub fn random_target(rng: &mut ChaCha8Rng, c: usize) -> TargetDistribution {
    let mut p: Vec<f64> = (0..c)
        .map(|_| {
            if rng.gen_bool(0.3) {
                0.0
            } else {
                rng.gen_range(0.05..1.0)
            }
        })
        .collect();
    if p.iter().all(|&v| v == 0.0) {
        p[rng.gen_range(0..c)] = 1.0;
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    TargetDistribution::from_probs(p).unwrap()
}

/// Random CTC target over `c - 1` labels that fits in `t` frames.
pub fn random_ctc_target(rng: &mut ChaCha8Rng, t: usize, c: usize, max_len: usize) -> CtcTarget {
    loop {
        let len = rng.gen_range(0..=max_len.min(t));
        let target = CtcTarget::new((0..len).map(|_| rng.gen_range(0..c - 1)).collect());
        if target.min_frames() <= t {
            return target;
        }
    }
}

/// Central finite differences of `f` at `x`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest per-coordinate `|a - n| / max(|a|, |n|, floor)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Finite-difference step and relative-error bound used by every gradient check.
pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Denominator floor for near-zero gradient entries.
pub const FD_FLOOR: f64 = 1e-6;

/// Max relative error of the bag-of-words loss gradient on one random instance.
pub fn aggloss_instance_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let t = r.gen_range(1..=8);
    let c = r.gen_range(2..=6);
    let logits = random_logits(&mut r, t, c, 3.0);
    let p = random_target(&mut r, c);
    let (_, g) = loss_and_grad(&logits, &p).unwrap();
    let n = numeric_gradient(logits.as_slice(), FD_STEP, |x| {
        loss_and_grad(&Matrix::from_vec(t, c, x.to_vec()), &p)
            .unwrap()
            .0
    });
    max_relative_error(g.as_slice(), &n, FD_FLOOR)
}

/// Max relative error of the CTC gradient on one random instance.
pub fn ctc_instance_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let t = r.gen_range(1..=8);
    let c = r.gen_range(2..=6);
    let logits = random_logits(&mut r, t, c, 2.0);
    let target = random_ctc_target(&mut r, t, c, 4);
    let loss = |x: &[f64]| {
        let e = log_softmax(&Matrix::from_vec(t, c, x.to_vec())).unwrap();
        ctc_loss(&e, &target).unwrap().0
    };
    let (_, g) = ctc_loss(&log_softmax(&logits).unwrap(), &target).unwrap();
    let n = numeric_gradient(logits.as_slice(), FD_STEP, loss);
    max_relative_error(g.as_slice(), &n, FD_FLOOR)
}

const FILL_WORDS: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

pub fn random_lm(r: &mut ChaCha8Rng) -> NGramModel {
    let corpus: Vec<Vec<String>> = (0..r.gen_range(5..30))
        .map(|_| {
            (0..r.gen_range(1..6))
                .map(|_| FILL_WORDS[r.gen_range(0..FILL_WORDS.len())].to_string())
                .collect()
        })
        .collect();
    train_ngram(&corpus, r.gen_range(1..=3), 0.1).unwrap()
}

/// A label of 1..=6 words with 1..=2 unks, plus up to 5 candidates drawn
/// from the LM vocabulary.
pub fn random_instance(r: &mut ChaCha8Rng, lm: &NGramModel) -> (PseudoLabel, Vec<String>) {
    let len = r.gen_range(1..=6);
    let mut words: Vec<String> = (0..len)
        .map(|_| FILL_WORDS[r.gen_range(0..FILL_WORDS.len())].to_string())
        .collect();
    let n_unks = r.gen_range(1..=2).min(len);
    let mut positions: Vec<usize> = (0..len).collect();
    positions.shuffle(r);
    for &p in &positions[..n_unks] {
        words[p] = "<unk>".to_string();
    }
    let mut pool = lm.vocabulary().to_vec();
    pool.shuffle(r);
    pool.truncate(r.gen_range(1..=5));
    (PseudoLabel::new(words), pool)
}
