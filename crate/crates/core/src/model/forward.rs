//! Batched scoring with an optional loss and its exact gradient.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{sigmoid, softplus, BatchStats, Gradients, Mode};

use super::encoder::{encode_batch, encode_batch_backward};
use super::gate::{act_terms, project_acts, relevance_backward, relevance_gate, ActGradients, GateView};
use super::lexicon::{ActVectors, Candidate, Lexicon, WordMatrix};
use super::score::ScoreTable;
use super::{names, NbtModel};

/// One turn to score: its words, act vectors and previous-turn scores.
#[derive(Debug, Clone, Copy)]
pub struct TurnInput<'a> {
    pub words: &'a WordMatrix,
    pub acts: &'a ActVectors,
    pub prior: &'a ScoreTable,
}

/// Binary targets in [`ScoreTable`] layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnLabels {
    pub informable: Vec<Vec<bool>>,
    pub requests: Vec<bool>,
}

impl TurnLabels {
    fn get(&self, c: Candidate) -> bool {
        match c {
            Candidate::Informable { slot, value } => self.informable[slot][value],
            Candidate::Request { slot } => self.requests[slot],
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub scores: Vec<ScoreTable>,
    /// Mean over the batch of the per-turn mean cross-entropy.
    pub loss: Option<f64>,
    /// Gradients of `loss` for trainable parameters only.
    pub grads: Option<Gradients>,
    /// Train-mode batch statistics, not yet folded into the model.
    pub stats: Option<BatchStats>,
}

/// Scores a batch of turns. With `labels`, also returns the loss and its
/// gradient. Dropout on the gates is applied in train mode when `rng` is
/// given and the model's rate is positive.
pub fn forward_batch<R: Rng>(
    model: &NbtModel,
    lexicon: &Lexicon,
    inputs: &[TurnInput],
    labels: Option<&[&TurnLabels]>,
    mode: Mode,
    rng: Option<&mut R>,
) -> Result<ForwardOutput> {
    let h = model.hidden();
    let ontology = lexicon.ontology();
    if lexicon.dim() != h {
        return Err(Error::Shape(format!("{}-d embeddings for H={h}", lexicon.dim())));
    }
    if let Some(l) = labels {
        if l.len() != inputs.len() {
            return Err(Error::Shape(format!("{} labels for {} turns", l.len(), inputs.len())));
        }
    }
    if let Some(bad) = inputs.iter().find(|t| !t.prior.matches(ontology)) {
        return Err(Error::Shape(format!(
            "prior scores cover {} slots, ontology has {}",
            bad.prior.informable.len(),
            ontology.informable.len()
        )));
    }
    let lambda = model.config.lambda;
    let view = GateView::new(&model.params, h)?;
    let w_y = model.params.data(names::DECODER_W_Y)?;
    let candidates = lexicon.candidates();
    let g1: Vec<Vec<f64>> = candidates
        .iter()
        .map(|&c| {
            let (cs, cv) = lexicon.candidate_vectors(c);
            relevance_gate(&view, cs, cv)
        })
        .collect();

    let words: Vec<&WordMatrix> = inputs.iter().map(|t| t.words).collect();
    let encoded = encode_batch(&model.params, &model.bn, h, &words, mode)?;

    let keep = 1.0 - model.config.dropout;
    let mut rng = match mode {
        Mode::Train if model.config.dropout > 0.0 => rng,
        _ => None,
    };

    let n_cand = candidates.len() as f64;
    let inv = 1.0 / (n_cand * inputs.len() as f64);
    let mut grads = labels.map(|_| Gradients::new());
    let mut loss = 0.0;
    let mut d_r = vec![vec![0.0; h]; inputs.len()];
    let mut d_g1 = vec![vec![0.0; h]; candidates.len()];
    let mut scores = Vec::with_capacity(inputs.len());
    let mut g = vec![0.0; h];
    let mut mask = vec![1.0; h];

    for (b, turn) in inputs.iter().enumerate() {
        let r = &encoded.r[b];
        let proj = project_acts(&view, turn.acts)?;
        let mut table = ScoreTable::constant(ontology, 0.0);
        let mut act_grads = grads.as_ref().map(|_| ActGradients::new(h));
        for (ci, &c) in candidates.iter().enumerate() {
            let (cs, cv) = lexicon.candidate_vectors(c);
            let terms = act_terms(&proj, cs, cv);
            let extra = terms.total();
            if let Some(rng) = rng.as_deref_mut() {
                for m in mask.iter_mut() {
                    *m = if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 };
                }
            }
            for i in 0..h {
                g[i] = (g1[ci][i] + extra) * mask[i];
            }
            let y: f64 = (0..h).map(|i| w_y[i] * r[i] * g[i]).sum();
            let (y_hat, dy_dyhat) = match c {
                Candidate::Informable { slot, value } => {
                    let s = lambda * y + (1.0 - lambda) * turn.prior.informable[slot][value];
                    table.informable[slot][value] = s;
                    (s, lambda)
                }
                Candidate::Request { slot } => {
                    table.requests[slot] = y;
                    (y, 1.0)
                }
            };
            let (Some(labels), Some(grads)) = (labels, grads.as_mut()) else {
                continue;
            };
            let target = if labels[b].get(c) { 1.0 } else { 0.0 };
            loss += softplus(y_hat) - target * y_hat;
            let dy = (sigmoid(y_hat) - target) * inv * dy_dyhat;
            if dy == 0.0 {
                continue;
            }
            let dwy = grads.slot(names::DECODER_W_Y, h);
            let mut total = 0.0;
            for i in 0..h {
                dwy[i] += dy * r[i] * g[i];
                d_r[b][i] += dy * w_y[i] * g[i];
                let dg = dy * w_y[i] * r[i] * mask[i];
                d_g1[ci][i] += dg;
                total += dg;
            }
            if let Some(a) = act_grads.as_mut() {
                a.add(cs, cv, &terms, total);
            }
        }
        if let (Some(a), Some(grads)) = (act_grads, grads.as_mut()) {
            a.flush(turn.acts, grads);
        }
        scores.push(table);
    }

    if let Some(grads) = grads.as_mut() {
        for (ci, &c) in candidates.iter().enumerate() {
            let (cs, cv) = lexicon.candidate_vectors(c);
            relevance_backward(h, cs, cv, &g1[ci], &d_g1[ci], grads);
        }
        encode_batch_backward(&model.params, h, &words, &encoded, &d_r, grads)?;
        grads.retain(|name| model.params.is_trainable(name));
    }

    let loss = labels.map(|_| loss / (n_cand * inputs.len() as f64));
    if let Some(l) = loss {
        if !l.is_finite() {
            return Err(Error::NonFinite("turn loss".into()));
        }
    }
    Ok(ForwardOutput {
        scores,
        loss,
        grads,
        stats: encoded.stats,
    })
}
