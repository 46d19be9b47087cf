//! Comparison systems that involve no transfer learning: string matching
//! against the ontology, word-by-word dictionary translation, and the
//! teacher applied directly to target-language embeddings.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::corpus::{BeliefState, BilingualDictionary, Dialog, EmbeddingTable, Ontology, OntologyMapping, Utterance};
use crate::error::Result;
use crate::eval::{evaluate_model, Evaluation};
use crate::model::{Lexicon, NbtModel};
use crate::transfer::{candidate_probabilities, context_vector};

/// Extra surface forms for requestable slots, keyed by slot.
pub type RequestSynonyms = HashMap<String, Vec<String>>;

fn words(term: &str) -> Vec<String> {
    term.split_whitespace().map(str::to_lowercase).collect()
}

fn occurrences(tokens: &[String], needle: &[String]) -> Vec<usize> {
    if needle.is_empty() || needle.len() > tokens.len() {
        return Vec::new();
    }
    tokens
        .windows(needle.len())
        .enumerate()
        .filter(|(_, w)| *w == needle)
        .map(|(i, _)| i)
        .collect()
}

/// Goals mentioned verbatim in `u`. Longer mentions beat shorter ones they
/// overlap; equal lengths fall back to ontology order.
pub fn match_goals(u: &Utterance, ontology: &Ontology) -> Vec<(String, String)> {
    let tokens = u.tokens();
    // (length, slot index, value index, start)
    let mut found = Vec::new();
    for (si, values) in ontology.informable.values().enumerate() {
        for (vi, value) in values.iter().enumerate() {
            let needle = words(value);
            for start in occurrences(tokens, &needle) {
                found.push((needle.len(), si, vi, start));
            }
        }
    }
    found.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)).then(a.3.cmp(&b.3)));
    let mut taken = vec![false; tokens.len()];
    let mut set = vec![false; ontology.informable.len()];
    let mut out = Vec::new();
    for (len, si, vi, start) in found {
        if set[si] || taken[start..start + len].iter().any(|&t| t) {
            continue;
        }
        taken[start..start + len].iter_mut().for_each(|t| *t = true);
        set[si] = true;
        let (slot, values) = ontology.informable.get_index(si).expect("slot index");
        out.push((slot.clone(), values[vi].clone()));
    }
    out
}

/// Turn-by-turn exact string matching. Matched values overwrite their slot,
/// other slots persist, requests are per turn.
#[derive(Debug, Clone)]
pub struct OntologyMatcher<'a> {
    ontology: &'a Ontology,
    synonyms: &'a RequestSynonyms,
    goals: BTreeMap<String, String>,
}

impl<'a> OntologyMatcher<'a> {
    pub fn new(ontology: &'a Ontology, synonyms: &'a RequestSynonyms) -> Self {
        OntologyMatcher {
            ontology,
            synonyms,
            goals: BTreeMap::new(),
        }
    }

    pub fn reset(&mut self) {
        self.goals.clear();
    }

    pub fn step(&mut self, u: &Utterance) -> BeliefState {
        for (slot, value) in match_goals(u, self.ontology) {
            self.goals.insert(slot, value);
        }
        let tokens = u.tokens();
        let requests = self
            .ontology
            .requestable
            .iter()
            .filter(|r| {
                let extra = self.synonyms.get(*r).map(Vec::as_slice).unwrap_or_default();
                std::iter::once(*r)
                    .chain(extra)
                    .any(|term| !occurrences(tokens, &words(term)).is_empty())
            })
            .cloned()
            .collect();
        BeliefState {
            goals: self.goals.clone(),
            requests,
        }
    }
}

/// Per-turn states of [`OntologyMatcher`] over one dialog.
pub fn ontology_match_track(dialog: &Dialog, ontology: &Ontology, synonyms: &RequestSynonyms) -> Vec<BeliefState> {
    let mut m = OntologyMatcher::new(ontology, synonyms);
    dialog.turns.iter().map(|turn| m.step(&turn.utterance)).collect()
}

/// Greedy word-by-word translation: each word with a dictionary entry
/// becomes the candidate whose target vector best matches its source
/// context; other words are kept. Ties go to the first candidate.
pub fn translate_utterance(
    u: &Utterance,
    dictionary: &BilingualDictionary,
    source: &EmbeddingTable,
    target: &EmbeddingTable,
) -> Utterance {
    let tokens = u
        .tokens()
        .iter()
        .enumerate()
        .map(|(i, w)| match dictionary.candidates(w) {
            None => w.clone(),
            Some([only]) => only.clone(),
            Some(cands) => {
                let p = candidate_probabilities(cands, &context_vector(u, i, source), target);
                let best = p
                    .iter()
                    .enumerate()
                    .fold(0, |best, (k, &x)| if x > p[best] { k } else { best });
                cands[best].clone()
            }
        })
        .collect();
    Utterance::new(tokens).expect("same length as a non-empty utterance")
}

/// Translates every turn of `dialogs` word by word and maps acts and gold
/// labels from language `from` to `to`.
pub fn word_by_word_translate(
    dialogs: &[Dialog],
    dictionary: &BilingualDictionary,
    source: &EmbeddingTable,
    target: &EmbeddingTable,
    mapping: &OntologyMapping,
    from: &str,
    to: &str,
) -> Result<Vec<Dialog>> {
    dialogs
        .iter()
        .map(|d| {
            let mut out = mapping.map_dialog_labels(d, from, to)?;
            for turn in &mut out.turns {
                turn.utterance = translate_utterance(&turn.utterance, dictionary, source, target);
                turn.transcript = turn.utterance.to_string();
            }
            Ok(out)
        })
        .collect()
}

/// The teacher run unchanged on target-language embeddings and the target
/// realization of its ontology.
pub fn no_transfer_eval(
    teacher: &NbtModel,
    dialogs: &[Dialog],
    target_embeddings: Arc<EmbeddingTable>,
    source_ontology: &Ontology,
    mapping: &OntologyMapping,
    target_language: &str,
) -> Result<Evaluation> {
    let ontology = mapping.map_ontology(source_ontology, &teacher.language, target_language)?;
    let lexicon = Lexicon::new(target_embeddings, ontology)?;
    evaluate_model(teacher, &lexicon, dialogs)
}
