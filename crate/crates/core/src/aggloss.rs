//! Bag-of-words objective: per-frame log-softmax, LogSumExp pooling over
//! time, and cross-entropy against a [`TargetDistribution`].

use crate::error::{Error, Result};
use crate::matrix::{log_sum_exp, Matrix};
use crate::vocab::TargetDistribution;

/// `T x C` per-frame log-probabilities. Each row is a normalized
/// log-distribution and `T >= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Emissions {
    log_probs: Matrix,
}

impl Emissions {
    /// Wraps log-probabilities, checking every row normalizes to within 1e-6.
    pub fn from_log_probs(log_probs: Matrix) -> Result<Self> {
        if log_probs.rows() == 0 {
            return Err(Error::EmptyEmissions);
        }
        for row in log_probs.iter_rows() {
            if row.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
                return Err(Error::NonFiniteLogits);
            }
            let lse = log_sum_exp(row);
            if lse.abs() > 1e-6 {
                return Err(Error::invalid(format!("row log-normalizer {lse}")));
            }
        }
        Ok(Emissions { log_probs })
    }

    pub fn log_probs(&self) -> &Matrix {
        &self.log_probs
    }

    pub fn num_frames(&self) -> usize {
        self.log_probs.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.log_probs.cols()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        self.log_probs.row(t)
    }

    /// Per-frame probabilities.
    pub fn probs(&self) -> Matrix {
        self.log_probs.map(f64::exp)
    }
}

/// Time-pooled log-distribution over classes.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregatedDistribution {
    pub log_q: Vec<f64>,
}

/// Row-wise `logits - LogSumExp(row)`.
pub fn log_softmax(logits: &Matrix) -> Result<Emissions> {
    if logits.rows() == 0 {
        return Err(Error::EmptyEmissions);
    }
    if logits.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLogits);
    }
    let mut out = logits.clone();
    for t in 0..out.rows() {
        let row = out.row_mut(t);
        let lse = log_sum_exp(row);
        row.iter_mut().for_each(|v| *v -= lse);
    }
    Ok(Emissions { log_probs: out })
}

/// `log q_c = LogSumExp_t(o_{t,c}) - ln T`: the log of the frame-averaged
/// class distribution.
pub fn aggregate(emissions: &Emissions) -> Result<AggregatedDistribution> {
    let t_len = emissions.num_frames();
    if t_len == 0 {
        return Err(Error::EmptyEmissions);
    }
    let ln_t = (t_len as f64).ln();
    let lp = emissions.log_probs();
    let mut column = vec![0.0; t_len];
    let log_q = (0..emissions.num_classes())
        .map(|c| {
            for (t, slot) in column.iter_mut().enumerate() {
                *slot = lp.get(t, c);
            }
            log_sum_exp(&column) - ln_t
        })
        .collect();
    Ok(AggregatedDistribution { log_q })
}

/// `-Σ p_i log q_i`; classes with `p_i = 0` contribute exactly zero.
pub fn cross_entropy(agg: &AggregatedDistribution, target: &TargetDistribution) -> Result<f64> {
    let p = target.probs();
    if p.len() != agg.log_q.len() {
        return Err(Error::DimensionMismatch {
            expected: agg.log_q.len(),
            actual: p.len(),
        });
    }
    Ok(-p
        .iter()
        .zip(&agg.log_q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &lq)| pi * lq)
        .sum::<f64>())
}

/// Loss and its exact gradient with respect to the logits.
///
/// With `r_{t,c} = exp(o_{t,c} - LogSumExp_t o_{.,c})` the posterior of frame
/// `t` within class `c`, and `s_t` the softmax of frame `t`:
///
/// `dL/dz_{t,j} = -p_j r_{t,j} + s_{t,j} Σ_c p_c r_{t,c}`
pub fn loss_and_grad(logits: &Matrix, target: &TargetDistribution) -> Result<(f64, Matrix)> {
    let emissions = log_softmax(logits)?;
    let agg = aggregate(&emissions)?;
    let loss = cross_entropy(&agg, target)?;

    let p = target.probs();
    let ln_t = (emissions.num_frames() as f64).ln();
    // log of the un-normalized pooled mass per class: log_q + ln T
    let pooled: Vec<f64> = agg.log_q.iter().map(|lq| lq + ln_t).collect();
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    for t in 0..logits.rows() {
        let o = emissions.frame(t);
        let g = grad.row_mut(t);
        let mut weighted = 0.0;
        for c in 0..o.len() {
            if p[c] > 0.0 {
                let pr = p[c] * (o[c] - pooled[c]).exp();
                g[c] = -pr;
                weighted += pr;
            }
        }
        for c in 0..o.len() {
            g[c] += o[c].exp() * weighted;
        }
    }
    Ok((loss, grad))
}

/// Mean of per-sample losses and gradients, reduced in input order.
pub fn batch_loss_and_grad<'a>(
    samples: impl IntoIterator<Item = (&'a Matrix, &'a TargetDistribution)>,
) -> Result<(f64, Vec<Matrix>)> {
    let mut grads = Vec::new();
    let mut total = 0.0;
    for (logits, target) in samples {
        let (l, g) = loss_and_grad(logits, target)?;
        total += l;
        grads.push(g);
    }
    if grads.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let n = grads.len() as f64;
    for g in &mut grads {
        g.as_mut_slice().iter_mut().for_each(|v| *v /= n);
    }
    Ok((total / n, grads))
}
