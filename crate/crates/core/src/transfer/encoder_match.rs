//! Encoder matching: the student's encoding of a target (or code-switched)
//! sentence should equal the teacher's encoding of the source sentence.

use rand::Rng;

use crate::corpus::{BilingualDictionary, Utterance};
use crate::error::{Error, Result};
use crate::model::encoder::{encode_batch, encode_batch_backward};
use crate::model::{names, Lexicon, NbtModel, WordMatrix};
use crate::numeric::{squared_distance, BatchStats, Gradients, Mode};

use super::replace::{replace_words, sample_replacement_count, MixedUtterance};

#[derive(Debug, Clone)]
pub struct EncoderCost {
    pub cost: f64,
    /// Gradients for the student's trainable encoder parameters.
    pub grads: Gradients,
    /// The student's batch statistics, to be folded into its running stats.
    pub stats: Option<BatchStats>,
}

/// Mean over the batch of `‖r_teacher(a) − r_student(b)‖²`. Both sides are
/// normalized with their own batch statistics.
pub fn encoder_cost(
    teacher: &NbtModel,
    teacher_words: &[&WordMatrix],
    student: &NbtModel,
    student_words: &[&WordMatrix],
) -> Result<EncoderCost> {
    let n = teacher_words.len();
    if n != student_words.len() {
        return Err(Error::Shape(format!("{n} teacher inputs for {} student inputs", student_words.len())));
    }
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    let h = student.hidden();
    if teacher.hidden() != h {
        return Err(Error::Shape(format!("teacher H={} but student H={h}", teacher.hidden())));
    }
    let r_e = encode_batch(&teacher.params, &teacher.bn, h, teacher_words, Mode::Train)?.r;
    let enc = encode_batch(&student.params, &student.bn, h, student_words, Mode::Train)?;
    let scale = 1.0 / n as f64;
    let cost = r_e.iter().zip(&enc.r).map(|(a, b)| squared_distance(a, b)).sum::<f64>() * scale;
    if !cost.is_finite() {
        return Err(Error::NonFinite("encoder cost".into()));
    }
    let d_r: Vec<Vec<f64>> = r_e
        .iter()
        .zip(&enc.r)
        .map(|(e, f)| f.iter().zip(e).map(|(f, e)| 2.0 * scale * (f - e)).collect())
        .collect();
    let mut grads = Gradients::new();
    encode_batch_backward(&student.params, h, student_words, &enc, &d_r, &mut grads)?;
    grads.retain(|n| names::is_encoder(n) && student.params.is_trainable(n));
    Ok(EncoderCost {
        cost,
        grads,
        stats: enc.stats,
    })
}

/// Encoder cost over parallel sentence pairs `(m_e, m_f)`.
pub fn encoder_cost_corpus(
    pairs: &[&(Utterance, Utterance)],
    teacher: &NbtModel,
    source: &Lexicon,
    student: &NbtModel,
    target: &Lexicon,
) -> Result<EncoderCost> {
    if pairs.len() < 2 {
        return Err(Error::BatchTooSmall(pairs.len()));
    }
    let e: Vec<WordMatrix> = pairs.iter().map(|(a, _)| source.embed_utterance(a)).collect();
    let f: Vec<WordMatrix> = pairs.iter().map(|(_, b)| target.embed_utterance(b)).collect();
    encoder_cost(teacher, &e.iter().collect::<Vec<_>>(), student, &f.iter().collect::<Vec<_>>())
}

/// Draws a replacement count and a code-switched version of `u`.
pub fn code_switch<R: Rng + ?Sized>(
    u: &Utterance,
    dictionary: &BilingualDictionary,
    source: &Lexicon,
    target: &Lexicon,
    tau: f64,
    rng: &mut R,
) -> Result<MixedUtterance> {
    let n_w = sample_replacement_count(u.len(), tau, rng)?;
    Ok(replace_words(u, n_w, dictionary, source.table(), target.table(), rng))
}

/// Encoder cost between source utterances and their code-switched versions.
#[allow(clippy::too_many_arguments)]
pub fn encoder_cost_dict<R: Rng + ?Sized>(
    utterances: &[&Utterance],
    teacher: &NbtModel,
    source: &Lexicon,
    student: &NbtModel,
    target: &Lexicon,
    dictionary: &BilingualDictionary,
    tau: f64,
    rng: &mut R,
) -> Result<EncoderCost> {
    if utterances.len() < 2 {
        return Err(Error::BatchTooSmall(utterances.len()));
    }
    let e: Vec<WordMatrix> = utterances.iter().map(|u| source.embed_utterance(u)).collect();
    let f: Vec<WordMatrix> = utterances
        .iter()
        .map(|u| Ok(code_switch(u, dictionary, source, target, tau, rng)?.embed(source.table(), target.table())))
        .collect::<Result<_>>()?;
    encoder_cost(teacher, &e.iter().collect::<Vec<_>>(), student, &f.iter().collect::<Vec<_>>())
}
