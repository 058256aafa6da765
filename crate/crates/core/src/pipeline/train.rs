//! Minibatch training loops for the word model (bag-of-words loss) and the
//! letter model (CTC loss).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggloss::{log_softmax, loss_and_grad};
use crate::ctc::{ctc_greedy_decode, ctc_loss, CtcTarget, LetterAlphabet};
use crate::encoder::{
    backward_with_cache, forward, forward_with_cache, init_encoder, optimizer_step, prepare_input,
    EncoderDims, EncoderParams, OptimizerState,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::synthdata::{SyntheticSample, WerTally};
use crate::vocab::{make_target, TargetDistribution, Vocabulary};
use crate::worddecode::greedy_decode;

/// What the word model is allowed to see of a training utterance: its
/// features and the bag-derived target. Word order never reaches training.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakExample {
    pub features: Matrix,
    pub target: TargetDistribution,
}

impl WeakExample {
    /// Features are edge-padded for an encoder with the given kernel.
    pub fn from_sample(
        sample: &SyntheticSample,
        vocab: &Vocabulary,
        alpha: f64,
        kernel: usize,
    ) -> Result<Self> {
        Ok(WeakExample {
            features: prepare_input(&sample.features, 1, kernel),
            target: make_target(&sample.bag, vocab, alpha)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    /// Anneal the learning rate to zero over the epochs along a half cosine.
    pub cosine_decay: bool,
    pub seed: u64,
}

/// Loss per epoch, dev WER per epoch, and the parameters of the best dev epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    pub epoch_losses: Vec<f64>,
    pub dev_wers: Vec<f64>,
    pub best_epoch: usize,
    /// Training examples that could not be used (CTC only).
    pub skipped: usize,
}

impl TrainOutcome {
    pub fn best_dev_wer(&self) -> f64 {
        self.dev_wers
            .get(self.best_epoch)
            .copied()
            .unwrap_or(f64::NAN)
    }
}

fn clip(grad: &mut EncoderParams, max_norm: f64) {
    if max_norm > 0.0 {
        let norm = grad.l2_norm();
        if norm > max_norm {
            grad.scale(max_norm / norm);
        }
    }
}

/// A training example: input features and a loss on the encoder logits.
pub trait TrainExample {
    fn features(&self) -> &Matrix;

    /// Loss and logit gradient, or `None` when the example must be skipped.
    fn loss_and_grad(&self, logits: &Matrix) -> Result<Option<(f64, Matrix)>>;
}

impl TrainExample for WeakExample {
    fn features(&self) -> &Matrix {
        &self.features
    }

    fn loss_and_grad(&self, logits: &Matrix) -> Result<Option<(f64, Matrix)>> {
        loss_and_grad(logits, &self.target).map(Some)
    }
}

impl TrainExample for CtcExample {
    fn features(&self) -> &Matrix {
        &self.features
    }

    fn loss_and_grad(&self, logits: &Matrix) -> Result<Option<(f64, Matrix)>> {
        if logits.rows() < self.target.min_frames() {
            return Ok(None);
        }
        let emissions = log_softmax(logits)?;
        ctc_loss(&emissions, &self.target).map(Some)
    }
}

/// Minibatch Adam. Example order per epoch is a seeded shuffle; per-batch
/// gradients are summed in order and averaged. Returns the parameters of the
/// epoch with the lowest `evaluate` score.
fn run_epochs<E: TrainExample>(
    params: &mut EncoderParams,
    examples: &[E],
    settings: &TrainSettings,
    mut evaluate: impl FnMut(&EncoderParams) -> Result<f64>,
) -> Result<(Vec<f64>, Vec<f64>, usize, EncoderParams)> {
    if settings.batch_size == 0 || settings.epochs == 0 {
        return Err(Error::invalid("epochs and batch size must be at least 1"));
    }
    let mut state = OptimizerState::new(params, settings.learning_rate);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(settings.epochs);
    let mut dev_wers = Vec::with_capacity(settings.epochs);
    let mut best = (f64::INFINITY, 0usize, params.clone());
    for epoch in 0..settings.epochs {
        if settings.cosine_decay {
            let progress = epoch as f64 / settings.epochs as f64;
            state.learning_rate =
                settings.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed.wrapping_add(epoch as u64 + 1));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut used = 0usize;
        for batch in order.chunks(settings.batch_size) {
            let mut grad = params.zeros_like();
            let mut n = 0usize;
            for &i in batch {
                let ex = &examples[i];
                let Some(t) = params.dims().output_frames(ex.features().rows()) else {
                    continue;
                };
                if t == 0 {
                    continue;
                }
                let (logits, cache) = forward_with_cache(params, ex.features())?;
                let Some((loss, grad_logits)) = ex.loss_and_grad(&logits)? else {
                    continue;
                };
                if !loss.is_finite() {
                    return Err(Error::Diverged);
                }
                let g = backward_with_cache(params, ex.features(), &cache, &grad_logits)?;
                grad.add_scaled(&g, 1.0);
                total += loss;
                n += 1;
            }
            if n == 0 {
                continue;
            }
            used += n;
            grad.scale(1.0 / n as f64);
            clip(&mut grad, settings.grad_clip);
            optimizer_step(params, &grad, &mut state)?;
        }
        if used == 0 {
            return Err(Error::invalid("no usable training examples"));
        }
        epoch_losses.push(total / used as f64);
        let wer = evaluate(params)?;
        dev_wers.push(wer);
        if wer < best.0 {
            best = (wer, epoch, params.clone());
        }
        log::info!(
            "epoch {epoch}: loss {:.5} dev WER {:.4}",
            epoch_losses[epoch],
            wer
        );
    }
    Ok((epoch_losses, dev_wers, best.1, best.2))
}

/// Greedy word-model WER over `samples` (corpus-level).
pub fn word_model_wer(
    params: &EncoderParams,
    vocab: &Vocabulary,
    samples: &[SyntheticSample],
) -> Result<f64> {
    let mut tally = WerTally::default();
    for s in samples {
        let x = prepare_input(&s.features, 1, params.dims().kernel);
        let emissions = log_softmax(&forward(params, &x)?)?;
        let pl = greedy_decode(&emissions, vocab)?;
        tally.add(&s.ref_transcript, pl.words());
    }
    Ok(tally.wer())
}

pub fn train_word_model(
    dims: EncoderDims,
    examples: &[WeakExample],
    vocab: &Vocabulary,
    dev: &[SyntheticSample],
    settings: &TrainSettings,
) -> Result<TrainOutcome> {
    let mut params = init_encoder(settings.seed, dims)?;
    let (epoch_losses, dev_wers, best_epoch, best) =
        run_epochs(&mut params, examples, settings, |p| {
            word_model_wer(p, vocab, dev)
        })?;
    Ok(TrainOutcome {
        params: best,
        epoch_losses,
        dev_wers,
        best_epoch,
        skipped: 0,
    })
}

/// Letter-model input: features repeated `upsample` times along time.
#[derive(Clone, Debug, PartialEq)]
pub struct CtcExample {
    pub features: Matrix,
    pub target: CtcTarget,
}

/// Greedy letter decoding split into words on the separator.
pub fn letter_model_words(
    params: &EncoderParams,
    alphabet: &LetterAlphabet,
    features: &Matrix,
    upsample: usize,
) -> Result<Vec<String>> {
    let x = prepare_input(features, upsample, params.dims().kernel);
    let emissions = log_softmax(&forward(params, &x)?)?;
    Ok(alphabet.decode_words(&ctc_greedy_decode(&emissions, alphabet)?))
}

pub fn letter_model_wer(
    params: &EncoderParams,
    alphabet: &LetterAlphabet,
    samples: &[SyntheticSample],
    upsample: usize,
) -> Result<f64> {
    let mut tally = WerTally::default();
    for s in samples {
        let words = letter_model_words(params, alphabet, &s.features, upsample)?;
        tally.add(&s.ref_transcript, &words);
    }
    Ok(tally.wer())
}

/// Trains a fresh letter model. Examples whose target cannot be aligned to
/// the available frames are skipped and counted.
pub fn train_letter_model(
    dims: EncoderDims,
    examples: &[CtcExample],
    alphabet: &LetterAlphabet,
    dev: &[SyntheticSample],
    upsample: usize,
    settings: &TrainSettings,
) -> Result<TrainOutcome> {
    let skipped = examples
        .iter()
        .filter(|ex| {
            dims.output_frames(ex.features.rows())
                .is_none_or(|t| t < ex.target.min_frames())
        })
        .count();
    let mut params = init_encoder(settings.seed, dims)?;
    let (epoch_losses, dev_wers, best_epoch, best) =
        run_epochs(&mut params, examples, settings, |p| {
            letter_model_wer(p, alphabet, dev, upsample)
        })?;
    Ok(TrainOutcome {
        params: best,
        epoch_losses,
        dev_wers,
        best_epoch,
        skipped,
    })
}
