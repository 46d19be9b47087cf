//! Dictionary-based code switching: how many words to replace, which ones,
//! and with which target synonym.

use rand::distr::weighted::WeightedIndex;
use rand::seq::index;
use rand::Rng;
use rand_distr::Distribution;

use crate::corpus::{BilingualDictionary, EmbeddingTable, Utterance, MAX_UTTERANCE_LEN};
use crate::error::{Error, Result};
use crate::model::WordMatrix;
use crate::numeric::dot;

/// Half-width of the context window around a replaced word.
pub const CONTEXT_RADIUS: usize = 2;

/// `p(i) ∝ exp(-i / τ)` for `i` in `0..n`.
pub fn replacement_distribution(n: usize, tau: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("utterance length must be at least 1".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    // i = 0 has the largest weight, exp(0) = 1, so no shift is needed.
    let w: Vec<f64> = (0..n).map(|i| (-(i as f64) / tau).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

pub fn sample_replacement_count<R: Rng + ?Sized>(n: usize, tau: f64, rng: &mut R) -> Result<usize> {
    let p = replacement_distribution(n, tau)?;
    let dist = WeightedIndex::new(&p).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(dist.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixedToken {
    pub text: String,
    pub side: Side,
}

/// A source utterance with some words swapped for target synonyms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixedUtterance {
    pub tokens: Vec<MixedToken>,
    /// Replacements asked for.
    pub requested: usize,
    /// Replacements made; below `requested` when too few words have entries.
    pub replaced: usize,
}

impl MixedUtterance {
    pub fn unchanged(u: &Utterance) -> Self {
        MixedUtterance {
            tokens: u
                .tokens()
                .iter()
                .map(|t| MixedToken {
                    text: t.clone(),
                    side: Side::Source,
                })
                .collect(),
            requested: 0,
            replaced: 0,
        }
    }

    /// Word vectors, each token looked up in its own language's table.
    pub fn embed(&self, source: &EmbeddingTable, target: &EmbeddingTable) -> WordMatrix {
        let rows = self
            .tokens
            .iter()
            .take(MAX_UTTERANCE_LEN)
            .map(|t| match t.side {
                Side::Source => source.lookup(&t.text).0,
                Side::Target => target.lookup(&t.text).0,
            })
            .collect();
        WordMatrix::new(source.dim(), rows).expect("utterances are non-empty")
    }

    pub fn text(&self) -> String {
        let words: Vec<&str> = self.tokens.iter().map(|t| t.text.as_str()).collect();
        words.join(" ")
    }
}

/// Sum of the source vectors within [`CONTEXT_RADIUS`] of position `i`,
/// excluding `i` itself.
pub fn context_vector(u: &Utterance, i: usize, source: &EmbeddingTable) -> Vec<f64> {
    let tokens = u.tokens();
    let mut h = vec![0.0; source.dim()];
    let lo = i.saturating_sub(CONTEXT_RADIUS);
    let hi = (i + CONTEXT_RADIUS).min(tokens.len() - 1);
    for k in (lo..=hi).filter(|&k| k != i) {
        for (a, b) in h.iter_mut().zip(source.lookup(&tokens[k]).0) {
            *a += b;
        }
    }
    h
}

/// Softmax over candidates of `vector(candidate) · h`.
pub fn candidate_probabilities(candidates: &[String], h: &[f64], target: &EmbeddingTable) -> Vec<f64> {
    let logits: Vec<f64> = candidates.iter().map(|c| dot(&target.lookup(c).0, h)).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Replaces `n_w` distinct dictionary-covered positions of `u`, each with a
/// candidate drawn from [`candidate_probabilities`] under its source
/// context. Positions are uniform without replacement.
pub fn replace_words<R: Rng + ?Sized>(
    u: &Utterance,
    n_w: usize,
    dictionary: &BilingualDictionary,
    source: &EmbeddingTable,
    target: &EmbeddingTable,
    rng: &mut R,
) -> MixedUtterance {
    let mut out = MixedUtterance::unchanged(u);
    out.requested = n_w;
    if n_w == 0 {
        return out;
    }
    let replaceable: Vec<usize> = u
        .tokens()
        .iter()
        .enumerate()
        .filter(|(_, t)| dictionary.candidates(t).is_some())
        .map(|(i, _)| i)
        .collect();
    let k = n_w.min(replaceable.len());
    if k < n_w {
        log::debug!("asked for {n_w} replacements but only {} words have entries", replaceable.len());
    }
    for pick in index::sample(rng, replaceable.len(), k) {
        let i = replaceable[pick];
        let candidates = dictionary.candidates(&u.tokens()[i]).expect("replaceable");
        let chosen = if candidates.len() == 1 {
            0
        } else {
            let p = candidate_probabilities(candidates, &context_vector(u, i, source), target);
            WeightedIndex::new(&p).expect("softmax is a distribution").sample(rng)
        };
        out.tokens[i] = MixedToken {
            text: candidates[chosen].clone(),
            side: Side::Target,
        };
    }
    out.replaced = k;
    out
}
