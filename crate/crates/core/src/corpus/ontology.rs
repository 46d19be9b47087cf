use std::collections::HashSet;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::embeddings::hex;
use super::read_text;

/// Slots and their candidate values. Order is significant: it breaks argmax
/// ties and fixes the layout of score tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ontology {
    pub informable: IndexMap<String, Vec<String>>,
    pub requestable: Vec<String>,
}

impl Ontology {
    pub fn new(informable: IndexMap<String, Vec<String>>, requestable: Vec<String>) -> Result<Self> {
        let o = Ontology {
            informable,
            requestable,
        };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        if self.informable.is_empty() && self.requestable.is_empty() {
            return Err(Error::Ontology("ontology is empty".into()));
        }
        for (slot, values) in &self.informable {
            if values.is_empty() {
                return Err(Error::Ontology(format!("slot `{slot}` has no values")));
            }
            let mut seen = HashSet::new();
            for v in values {
                if v.trim().is_empty() {
                    return Err(Error::Ontology(format!("slot `{slot}` has an empty value")));
                }
                if !seen.insert(v) {
                    return Err(Error::Ontology(format!("slot `{slot}` repeats value `{v}`")));
                }
            }
        }
        let mut seen = HashSet::new();
        for r in &self.requestable {
            if !seen.insert(r) {
                return Err(Error::Ontology(format!("requestable slot `{r}` repeated")));
            }
        }
        Ok(())
    }

    pub fn slot_index(&self, slot: &str) -> Option<usize> {
        self.informable.get_index_of(slot)
    }

    pub fn value_index(&self, slot: &str, value: &str) -> Option<(usize, usize)> {
        let (si, _, values) = self.informable.get_full(slot)?;
        values.iter().position(|v| v == value).map(|vi| (si, vi))
    }

    pub fn request_index(&self, slot: &str) -> Option<usize> {
        self.requestable.iter().position(|r| r == slot)
    }

    pub fn slots(&self) -> impl Iterator<Item = &str> {
        self.informable.keys().map(String::as_str)
    }

    /// Number of scored entries per turn: every (slot, value) pair plus one per
    /// requestable slot.
    pub fn candidate_count(&self) -> usize {
        self.informable.values().map(Vec::len).sum::<usize>() + self.requestable.len()
    }

    /// SHA-256 over the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("ontology serializes");
        hex(&Sha256::digest(json))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ontology serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

pub fn parse_ontology(text: &str, origin: &Path) -> Result<Ontology> {
    let o: Ontology =
        serde_json::from_str(text).map_err(|e| Error::format(origin, format!("ontology JSON: {e}")))?;
    o.validate()?;
    Ok(o)
}

pub fn load_ontology(path: &Path) -> Result<Ontology> {
    parse_ontology(&read_text(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_keeps_order() {
        let o = parse_ontology(
            r#"{"informable": {"food": ["persian", "chinese"], "area": ["north"]}, "requestable": ["phone"]}"#,
            Path::new("mem"),
        )
        .unwrap();
        assert_eq!(o.slots().collect::<Vec<_>>(), ["food", "area"]);
        assert_eq!(o.value_index("food", "chinese"), Some((0, 1)));
        assert_eq!(o.request_index("phone"), Some(0));
        assert_eq!(o.candidate_count(), 4);
    }

    #[test]
    fn rejects_duplicates_and_empty_slots() {
        let dup = r#"{"informable": {"food": ["a", "a"]}, "requestable": []}"#;
        assert!(parse_ontology(dup, Path::new("mem")).is_err());
        let empty = r#"{"informable": {"food": []}, "requestable": []}"#;
        assert!(parse_ontology(empty, Path::new("mem")).is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = parse_ontology(r#"{"informable": {"f": ["x"]}, "requestable": []}"#, Path::new("m")).unwrap();
        let b = parse_ontology(r#"{"informable": {"f": ["y"]}, "requestable": []}"#, Path::new("m")).unwrap();
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
