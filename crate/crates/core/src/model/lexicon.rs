use std::sync::Arc;

use crate::corpus::{embed_term, EmbeddingTable, Ontology, SystemActs, Utterance, MAX_UTTERANCE_LEN};
use crate::error::{Error, Result};

/// Embedded utterance: `len` rows of `dim` values, row-major, so an n-gram
/// window is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct WordMatrix {
    len: usize,
    dim: usize,
    data: Vec<f64>,
}

impl WordMatrix {
    pub fn new(dim: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyUtterance);
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in &rows {
            if r.len() != dim {
                return Err(Error::Shape(format!("word vector of length {} in a {dim}-d matrix", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(WordMatrix {
            len: rows.len(),
            dim,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Concatenation of rows `start..start + width`.
    pub fn window(&self, start: usize, width: usize) -> &[f64] {
        &self.data[start * self.dim..(start + width) * self.dim]
    }
}

/// System-act term vectors; `None` is the zero vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActVectors {
    pub request: Option<Vec<f64>>,
    pub confirm_slot: Option<Vec<f64>>,
    pub confirm_value: Option<Vec<f64>>,
}

impl ActVectors {
    pub fn none() -> Self {
        Self::default()
    }
}

/// A scored entry: an informable (slot, value) pair or a requestable slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Candidate {
    Informable { slot: usize, value: usize },
    Request { slot: usize },
}

/// Embedding table bound to an ontology, with every ontology term embedded
/// once up front.
#[derive(Debug, Clone)]
pub struct Lexicon {
    table: Arc<EmbeddingTable>,
    ontology: Ontology,
    slot_vectors: Vec<Vec<f64>>,
    value_vectors: Vec<Vec<Vec<f64>>>,
    request_vectors: Vec<Vec<f64>>,
    candidates: Vec<Candidate>,
}

impl Lexicon {
    pub fn new(table: Arc<EmbeddingTable>, ontology: Ontology) -> Result<Self> {
        let embed = |term: &str| -> Result<Vec<f64>> {
            let tv = embed_term(term, &table)?;
            if tv.oov {
                log::warn!("ontology term `{term}` has no embedding");
            }
            Ok(tv.vector)
        };
        let mut slot_vectors = Vec::new();
        let mut value_vectors = Vec::new();
        let mut candidates = Vec::new();
        for (si, (slot, values)) in ontology.informable.iter().enumerate() {
            slot_vectors.push(embed(slot)?);
            value_vectors.push(values.iter().map(|v| embed(v)).collect::<Result<Vec<_>>>()?);
            candidates.extend((0..values.len()).map(|vi| Candidate::Informable { slot: si, value: vi }));
        }
        let request_vectors = ontology
            .requestable
            .iter()
            .map(|r| embed(r))
            .collect::<Result<Vec<_>>>()?;
        candidates.extend((0..request_vectors.len()).map(|slot| Candidate::Request { slot }));
        Ok(Lexicon {
            table,
            ontology,
            slot_vectors,
            value_vectors,
            request_vectors,
            candidates,
        })
    }

    pub fn table(&self) -> &Arc<EmbeddingTable> {
        &self.table
    }

    pub fn ontology(&self) -> &Ontology {
        &self.ontology
    }

    pub fn dim(&self) -> usize {
        self.table.dim()
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    /// `(c_s, c_v)` for a candidate; requestable slots have no value vector.
    pub fn candidate_vectors(&self, c: Candidate) -> (&[f64], Option<&[f64]>) {
        match c {
            Candidate::Informable { slot, value } => {
                (&self.slot_vectors[slot], Some(&self.value_vectors[slot][value]))
            }
            Candidate::Request { slot } => (&self.request_vectors[slot], None),
        }
    }

    /// Word vectors of the first [`MAX_UTTERANCE_LEN`] tokens.
    pub fn embed_utterance(&self, u: &Utterance) -> WordMatrix {
        let rows = u
            .tokens()
            .iter()
            .take(MAX_UTTERANCE_LEN)
            .map(|t| self.table.lookup(t).0)
            .collect();
        WordMatrix::new(self.dim(), rows).expect("utterances are non-empty")
    }

    pub fn embed_term(&self, term: &str) -> Result<Vec<f64>> {
        Ok(embed_term(term, &self.table)?.vector)
    }

    pub fn embed_acts(&self, acts: &SystemActs) -> Result<ActVectors> {
        Ok(ActVectors {
            request: acts.request.as_deref().map(|t| self.embed_term(t)).transpose()?,
            confirm_slot: acts
                .confirm
                .as_ref()
                .map(|(s, _)| self.embed_term(s))
                .transpose()?,
            confirm_value: acts
                .confirm
                .as_ref()
                .map(|(_, v)| self.embed_term(v))
                .transpose()?,
        })
    }
}
