//! Readers and writers for every on-disk resource the tracker consumes:
//! dialogs, ontologies, word embeddings, bilingual dictionaries, parallel
//! corpora and the cross-lingual ontology mapping.

pub mod dialog;
pub mod dictionary;
pub mod embeddings;
pub mod mapping;
pub mod ontology;
pub mod parallel;
pub mod tokenize;

pub use dialog::{load_dialogs, parse_dialogs, save_dialogs, utterance_of, BeliefState, Dialog, DialogTurn, SystemActs};
pub use dictionary::{load_dictionary, BilingualDictionary};
pub use embeddings::{embed_term, load_embeddings, EmbeddingTable, LoadReport, OovPolicy, TermVector};
pub use mapping::{load_mapping, OntologyMapping};
pub use ontology::{load_ontology, Ontology};
pub use parallel::{load_parallel, ParallelCorpus};
pub use tokenize::{tokenize, tokenize_bounded, OverLength, Utterance, MAX_UTTERANCE_LEN};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
