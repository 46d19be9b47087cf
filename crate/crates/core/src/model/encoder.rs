//! Convolutional utterance encoder: widths 1..=3, ReLU, max-pool over
//! positions, summed across widths, then batch normalization.

use crate::error::{Error, Result};
use crate::numeric::batchnorm::{self, BatchNormCache};
use crate::numeric::{dot, BatchNormState, BatchStats, Gradients, Mode, ParameterSet};

use super::lexicon::WordMatrix;
use super::names;

pub const WIDTHS: [usize; 3] = [1, 2, 3];

/// Borrowed filter banks; `weights[k]` is `H x (WIDTHS[k] H)`.
#[derive(Debug, Clone, Copy)]
pub struct EncoderView<'a> {
    pub hidden: usize,
    pub weights: [&'a [f64]; 3],
    pub biases: [&'a [f64]; 3],
}

impl<'a> EncoderView<'a> {
    pub fn new(params: &'a ParameterSet, hidden: usize) -> Result<Self> {
        let mut weights = [&[][..]; 3];
        let mut biases = [&[][..]; 3];
        for (k, n) in WIDTHS.iter().enumerate() {
            weights[k] = params.data(names::ENCODER_WEIGHTS[k])?;
            biases[k] = params.data(names::ENCODER_BIASES[k])?;
            if weights[k].len() != hidden * n * hidden || biases[k].len() != hidden {
                return Err(Error::Shape(format!("encoder width {n} does not match H={hidden}")));
            }
        }
        Ok(EncoderView {
            hidden,
            weights,
            biases,
        })
    }
}

/// Winning window start per feature, `None` where the pooled response was
/// clipped by the ReLU or the utterance is shorter than the width.
#[derive(Debug, Clone, Default)]
pub struct PoolTrace {
    winners: [Vec<Option<usize>>; 3],
}

/// Sum over widths of max-pooled ReLU responses, before normalization.
pub fn encode_pre_norm(view: &EncoderView, words: &WordMatrix) -> Result<(Vec<f64>, PoolTrace)> {
    let h = view.hidden;
    if words.is_empty() {
        return Err(Error::EmptyUtterance);
    }
    if words.dim() != h {
        return Err(Error::Shape(format!("{}-d word vectors for H={h}", words.dim())));
    }
    let mut out = vec![0.0; h];
    let mut trace = PoolTrace::default();
    for (k, &n) in WIDTHS.iter().enumerate() {
        let mut winners = vec![None; h];
        if words.len() >= n {
            let w = view.weights[k];
            let b = view.biases[k];
            let cols = n * h;
            for (i, (row, &bi)) in w.chunks_exact(cols).zip(b).enumerate() {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for p in 0..=words.len() - n {
                    let z = dot(row, words.window(p, n)) + bi;
                    if z > best {
                        best = z;
                        arg = p;
                    }
                }
                if best > 0.0 {
                    out[i] += best;
                    winners[i] = Some(arg);
                }
            }
        }
        trace.winners[k] = winners;
    }
    Ok((out, trace))
}

/// Distance from the nearest point where pooling or the ReLU switches:
/// the smallest gap, over features and widths, between the winning window
/// response and zero or the best response of a different window.
///
/// Finite-difference checks are only meaningful when parameter
/// perturbations move responses by less than this.
pub fn kink_margin(view: &EncoderView, words: &WordMatrix) -> f64 {
    let h = view.hidden;
    let mut margin = f64::INFINITY;
    for (k, &n) in WIDTHS.iter().enumerate() {
        if words.len() < n {
            continue;
        }
        let cols = n * h;
        for (row, &bi) in view.weights[k].chunks_exact(cols).zip(view.biases[k]) {
            let z: Vec<f64> = (0..=words.len() - n)
                .map(|p| dot(row, words.window(p, n)) + bi)
                .collect();
            let best = (0..z.len()).fold(0, |b, p| if z[p] > z[b] { p } else { b });
            margin = margin.min(z[best].abs());
            for p in 0..z.len() {
                if words.window(p, n) != words.window(best, n) {
                    margin = margin.min(z[best] - z[p]);
                }
            }
        }
    }
    margin
}

/// Accumulates filter gradients from the gradient at the pre-norm output.
pub fn encode_pre_norm_backward(
    view: &EncoderView,
    words: &WordMatrix,
    trace: &PoolTrace,
    d_out: &[f64],
    grads: &mut Gradients,
) {
    let h = view.hidden;
    for (k, &n) in WIDTHS.iter().enumerate() {
        let cols = n * h;
        let dw = grads.slot(names::ENCODER_WEIGHTS[k], h * cols);
        for (i, win) in trace.winners[k].iter().enumerate() {
            if let Some(p) = *win {
                if d_out[i] != 0.0 {
                    let row = &mut dw[i * cols..(i + 1) * cols];
                    for (w, x) in row.iter_mut().zip(words.window(p, n)) {
                        *w += d_out[i] * x;
                    }
                }
            }
        }
        let db = grads.slot(names::ENCODER_BIASES[k], h);
        for (i, win) in trace.winners[k].iter().enumerate() {
            if win.is_some() {
                db[i] += d_out[i];
            }
        }
    }
}

/// A batch of encodings plus what the backward pass needs.
#[derive(Debug, Clone)]
pub struct EncodedBatch {
    pub r: Vec<Vec<f64>>,
    pub stats: Option<BatchStats>,
    traces: Vec<PoolTrace>,
    cache: BatchNormCache,
}

pub fn encode_batch(
    params: &ParameterSet,
    bn: &BatchNormState,
    hidden: usize,
    batch: &[&WordMatrix],
    mode: Mode,
) -> Result<EncodedBatch> {
    let view = EncoderView::new(params, hidden)?;
    let mut pre = Vec::with_capacity(batch.len());
    let mut traces = Vec::with_capacity(batch.len());
    for words in batch {
        let (s, t) = encode_pre_norm(&view, words)?;
        pre.push(s);
        traces.push(t);
    }
    let (r, cache, stats) = bn.forward(&pre, mode)?;
    Ok(EncodedBatch {
        r,
        stats,
        traces,
        cache,
    })
}

pub fn encode_batch_backward(
    params: &ParameterSet,
    hidden: usize,
    batch: &[&WordMatrix],
    encoded: &EncodedBatch,
    d_r: &[Vec<f64>],
    grads: &mut Gradients,
) -> Result<()> {
    let view = EncoderView::new(params, hidden)?;
    let d_pre = batchnorm::backward(&encoded.cache, d_r);
    for ((words, trace), d) in batch.iter().zip(&encoded.traces).zip(&d_pre) {
        encode_pre_norm_backward(&view, words, trace, d, grads);
    }
    Ok(())
}

/// Infer-mode encoding of a single utterance.
pub fn encode_utterance(
    params: &ParameterSet,
    bn: &BatchNormState,
    hidden: usize,
    words: &WordMatrix,
) -> Result<Vec<f64>> {
    let enc = encode_batch(params, bn, hidden, &[words], Mode::Infer)?;
    Ok(enc.r.into_iter().next().expect("one encoding"))
}
