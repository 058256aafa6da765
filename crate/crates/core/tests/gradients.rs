mod common;

use common::*;
use rand::Rng;
use wordbag::aggloss::{log_softmax, loss_and_grad};
use wordbag::ctc::ctc_loss;
use wordbag::encoder::{backward, forward, init_encoder, EncoderDims, EncoderParams};
use wordbag::Matrix;

#[test]
fn aggloss_gradient_matches_finite_differences() {
    for seed in 0..100 {
        let err = aggloss_instance_error(seed);
        assert!(err < FD_TOLERANCE, "seed {seed}: {err}");
    }
}

#[test]
fn aggloss_known_four_by_three() {
    let mut r = rng(4242);
    let logits = random_logits(&mut r, 4, 3, 1.5);
    let p = random_target(&mut r, 3);
    let (_, g) = loss_and_grad(&logits, &p).unwrap();
    let n = numeric_gradient(logits.as_slice(), FD_STEP, |x| {
        loss_and_grad(&Matrix::from_vec(4, 3, x.to_vec()), &p)
            .unwrap()
            .0
    });
    assert!(max_relative_error(g.as_slice(), &n, FD_FLOOR) < FD_TOLERANCE);
}

#[test]
fn ctc_gradient_matches_finite_differences() {
    for seed in 0..100 {
        let err = ctc_instance_error(1000 + seed);
        assert!(err < FD_TOLERANCE, "seed {seed}: {err}");
    }
}

fn tiny_dims(r: &mut impl Rng, classes: usize) -> EncoderDims {
    let kernel = r.gen_range(1..=3);
    EncoderDims {
        features: r.gen_range(1..=3),
        hidden: r.gen_range(2..=4),
        classes,
        kernel,
        stride: r.gen_range(1..=kernel.min(2)),
        depth: r.gen_range(1..=2),
    }
}

fn with_values(params: &EncoderParams, values: &[f64]) -> EncoderParams {
    let mut p = params.clone();
    p.values_mut().copy_from_slice(values);
    p
}

#[test]
fn encoder_backward_matches_finite_differences() {
    for seed in 0..20 {
        let mut r = rng(2000 + seed);
        let dims = tiny_dims(&mut r, 3);
        let params = init_encoder(seed, dims).unwrap();
        let t_in = dims.kernel + r.gen_range(0..5);
        let x = random_logits(&mut r, t_in, dims.features, 1.0);
        let t_out = dims.output_frames(t_in).unwrap();
        // linear functional of the logits: L = Σ w ⊙ logits
        let w = random_logits(&mut r, t_out, dims.classes, 1.0);
        let g = backward(&params, &x, &w).unwrap();
        let n = numeric_gradient(params.values(), FD_STEP, |v| {
            let out = forward(&with_values(&params, v), &x).unwrap();
            out.as_slice()
                .iter()
                .zip(w.as_slice())
                .map(|(a, b)| a * b)
                .sum()
        });
        let err = max_relative_error(g.values(), &n, FD_FLOOR);
        assert!(err < FD_TOLERANCE, "seed {seed}: {err}");
    }
}

#[test]
fn composite_encoder_aggloss_gradient() {
    for seed in 0..20 {
        let mut r = rng(3000 + seed);
        let classes = r.gen_range(2..=4);
        let dims = tiny_dims(&mut r, classes);
        let params = init_encoder(seed, dims).unwrap();
        let t_in = dims.kernel + r.gen_range(0..6);
        let x = random_logits(&mut r, t_in, dims.features, 1.0);
        let p = random_target(&mut r, classes);
        let logits = forward(&params, &x).unwrap();
        let (_, gl) = loss_and_grad(&logits, &p).unwrap();
        let g = backward(&params, &x, &gl).unwrap();
        let n = numeric_gradient(params.values(), FD_STEP, |v| {
            let l = forward(&with_values(&params, v), &x).unwrap();
            loss_and_grad(&l, &p).unwrap().0
        });
        let err = max_relative_error(g.values(), &n, FD_FLOOR);
        assert!(err < FD_TOLERANCE, "seed {seed}: {err}");
    }
}

#[test]
fn composite_encoder_ctc_gradient() {
    for seed in 0..20 {
        let mut r = rng(4000 + seed);
        let classes = r.gen_range(2..=4);
        let mut dims = tiny_dims(&mut r, classes);
        dims.stride = 1;
        let params = init_encoder(seed, dims).unwrap();
        let t_in = dims.kernel + 2 + r.gen_range(0..5);
        let x = random_logits(&mut r, t_in, dims.features, 1.0);
        let t_out = dims.output_frames(x.rows()).unwrap();
        let target = random_ctc_target(&mut r, t_out, classes, 3);
        let logits = forward(&params, &x).unwrap();
        let (_, gl) = ctc_loss(&log_softmax(&logits).unwrap(), &target).unwrap();
        let g = backward(&params, &x, &gl).unwrap();
        let n = numeric_gradient(params.values(), FD_STEP, |v| {
            let l = forward(&with_values(&params, v), &x).unwrap();
            ctc_loss(&log_softmax(&l).unwrap(), &target).unwrap().0
        });
        let err = max_relative_error(g.values(), &n, FD_FLOOR);
        assert!(err < FD_TOLERANCE, "seed {seed}: {err}");
    }
}
