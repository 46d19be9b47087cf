use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};

use super::{read_text, BeliefState, Dialog, DialogTurn, Ontology, SystemActs};

/// Concept-level bijection between the surface terms of each language.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OntologyMapping {
    concept_of: HashMap<(String, String), String>,
    term_of: HashMap<(String, String), String>,
    languages: BTreeSet<String>,
}

impl OntologyMapping {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `term` as the realization of `concept` in `language`.
    pub fn add(&mut self, concept: &str, language: &str, term: &str) -> Result<()> {
        let key = (language.to_string(), term.to_string());
        if let Some(existing) = self.concept_of.get(&key) {
            if existing != concept {
                return Err(Error::Ontology(format!(
                    "term `{term}` ({language}) maps to both `{existing}` and `{concept}`"
                )));
            }
            return Ok(());
        }
        let ckey = (concept.to_string(), language.to_string());
        if let Some(existing) = self.term_of.get(&ckey) {
            return Err(Error::Ontology(format!(
                "concept `{concept}` has two {language} realizations: `{existing}` and `{term}`"
            )));
        }
        self.concept_of.insert(key, concept.to_string());
        self.term_of.insert(ckey, term.to_string());
        self.languages.insert(language.to_string());
        Ok(())
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.languages.iter().map(String::as_str)
    }

    pub fn concept(&self, language: &str, term: &str) -> Option<&str> {
        self.concept_of
            .get(&(language.to_string(), term.to_string()))
            .map(String::as_str)
    }

    pub fn translate(&self, term: &str, from: &str, to: &str) -> Result<String> {
        let unmapped = || Error::UnmappedTerm {
            term: term.to_string(),
            language: from.to_string(),
        };
        let concept = self.concept(from, term).ok_or_else(unmapped)?;
        self.term_of
            .get(&(concept.to_string(), to.to_string()))
            .cloned()
            .ok_or_else(unmapped)
    }

    /// The ontology whose every slot, value and requestable slot is replaced
    /// by its realization in `to`.
    pub fn map_ontology(&self, ontology: &Ontology, from: &str, to: &str) -> Result<Ontology> {
        let mut informable = IndexMap::new();
        for (slot, values) in &ontology.informable {
            let vs = values
                .iter()
                .map(|v| self.translate(v, from, to))
                .collect::<Result<Vec<_>>>()?;
            informable.insert(self.translate(slot, from, to)?, vs);
        }
        let requestable = ontology
            .requestable
            .iter()
            .map(|r| self.translate(r, from, to))
            .collect::<Result<Vec<_>>>()?;
        Ontology::new(informable, requestable)
    }

    pub fn map_acts(&self, acts: &SystemActs, from: &str, to: &str) -> Result<SystemActs> {
        Ok(SystemActs {
            request: acts
                .request
                .as_ref()
                .map(|q| self.translate(q, from, to))
                .transpose()?,
            confirm: match &acts.confirm {
                Some((s, v)) => Some((self.translate(s, from, to)?, self.translate(v, from, to)?)),
                None => None,
            },
        })
    }

    pub fn map_state(&self, state: &BeliefState, from: &str, to: &str) -> Result<BeliefState> {
        let mut out = BeliefState::default();
        for (s, v) in &state.goals {
            out.goals
                .insert(self.translate(s, from, to)?, self.translate(v, from, to)?);
        }
        for r in &state.requests {
            out.requests.insert(self.translate(r, from, to)?);
        }
        Ok(out)
    }

    /// Maps acts and gold labels of every turn; the utterance is left to the
    /// caller.
    pub fn map_turn_labels(&self, turn: &DialogTurn, from: &str, to: &str) -> Result<DialogTurn> {
        Ok(DialogTurn {
            system_acts: self.map_acts(&turn.system_acts, from, to)?,
            gold: self.map_state(&turn.gold, from, to)?,
            ..turn.clone()
        })
    }

    pub fn map_dialog_labels(&self, dialog: &Dialog, from: &str, to: &str) -> Result<Dialog> {
        Ok(Dialog {
            id: dialog.id,
            turns: dialog
                .turns
                .iter()
                .map(|t| self.map_turn_labels(t, from, to))
                .collect::<Result<_>>()?,
        })
    }

    /// Finds the mapping language whose terms cover `ontology`.
    pub fn language_of(&self, ontology: &Ontology) -> Option<String> {
        self.languages
            .iter()
            .find(|lang| {
                ontology.slots().all(|s| self.concept(lang, s).is_some())
                    && ontology
                        .informable
                        .values()
                        .flatten()
                        .all(|v| self.concept(lang, v).is_some())
                    && ontology.requestable.iter().all(|r| self.concept(lang, r).is_some())
            })
            .cloned()
    }

    pub fn to_tsv(&self) -> String {
        let mut rows: Vec<(&String, &String, &String)> = self
            .term_of
            .iter()
            .map(|((c, l), t)| (c, l, t))
            .collect();
        rows.sort();
        rows.iter().map(|(c, l, t)| format!("{c}\t{l}\t{t}\n")).collect()
    }
}

pub fn parse_mapping(text: &str, origin: &Path) -> Result<OntologyMapping> {
    let mut m = OntologyMapping::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 || cols.iter().any(|c| c.trim().is_empty()) {
            return Err(Error::format(origin, format!("line {}: expected concept<TAB>lang<TAB>term", i + 1)));
        }
        m.add(cols[0].trim(), cols[1].trim(), cols[2].trim())
            .map_err(|e| Error::format(origin, format!("line {}: {e}", i + 1)))?;
    }
    Ok(m)
}

pub fn load_mapping(path: &Path) -> Result<OntologyMapping> {
    parse_mapping(&read_text(path)?, path)
}
