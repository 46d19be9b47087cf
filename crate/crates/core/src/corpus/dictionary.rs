use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};

use super::read_text;

/// One-to-many word lexicon from source to target words, candidates in file
/// order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BilingualDictionary {
    entries: IndexMap<String, Vec<String>>,
}

impl BilingualDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds candidates for `source`, skipping ones already present.
    pub fn add(&mut self, source: impl Into<String>, candidates: impl IntoIterator<Item = String>) {
        let list = self.entries.entry(source.into()).or_default();
        for c in candidates {
            if !c.is_empty() && !list.contains(&c) {
                list.push(c);
            }
        }
    }

    pub fn candidates(&self, source: &str) -> Option<&[String]> {
        self.entries
            .get(source)
            .map(Vec::as_slice)
            .filter(|c| !c.is_empty())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('\t');
            out.push_str(&v.join("|"));
            out.push('\n');
        }
        out
    }
}

pub fn parse_dictionary(text: &str, origin: &Path) -> Result<BilingualDictionary> {
    let mut dict = BilingualDictionary::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (source, cands) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(origin, format!("line {}: missing tab", i + 1)))?;
        let cands: Vec<String> = cands
            .split('|')
            .map(|c| c.trim().to_string())
            .filter(|c| !c.is_empty())
            .collect();
        if source.trim().is_empty() || cands.is_empty() {
            return Err(Error::format(origin, format!("line {}: empty source or candidate list", i + 1)));
        }
        dict.add(source.trim(), cands);
    }
    Ok(dict)
}

pub fn load_dictionary(path: &Path) -> Result<BilingualDictionary> {
    parse_dictionary(&read_text(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_candidates_in_order() {
        let d = parse_dictionary("food\tessen|nahrung\n", Path::new("mem")).unwrap();
        assert_eq!(d.candidates("food").unwrap(), ["essen", "nahrung"]);
        assert!(d.candidates("area").is_none());
    }

    #[test]
    fn deduplicates_and_merges() {
        let d = parse_dictionary("a\tx|y|x\na\tz|y\n", Path::new("mem")).unwrap();
        assert_eq!(d.candidates("a").unwrap(), ["x", "y", "z"]);
        assert_eq!(parse_dictionary(&d.to_tsv(), Path::new("mem")).unwrap(), d);
    }

    #[test]
    fn malformed_lines_are_errors() {
        assert!(parse_dictionary("food essen\n", Path::new("mem")).is_err());
        assert!(parse_dictionary("food\t|\n", Path::new("mem")).is_err());
    }
}
