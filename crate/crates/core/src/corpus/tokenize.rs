use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest utterance fed to the encoder.
pub const MAX_UTTERANCE_LEN: usize = 40;

/// A non-empty sequence of lowercase tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Utterance {
    tokens: Vec<String>,
}

impl Utterance {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() || tokens.iter().any(|t| t.is_empty()) {
            return Err(Error::EmptyUtterance);
        }
        Ok(Utterance { tokens })
    }

    pub fn from_words(words: &[&str]) -> Result<Self> {
        Utterance::new(words.iter().map(|w| w.to_string()).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Position of the first occurrence of `needle` as a contiguous run.
    pub fn find(&self, needle: &[String]) -> Option<usize> {
        if needle.is_empty() || needle.len() > self.tokens.len() {
            return None;
        }
        self.tokens.windows(needle.len()).position(|w| w == needle)
    }
}

impl fmt::Display for Utterance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverLength {
    /// Fail with [`Error::UtteranceTooLong`].
    Error,
    /// Return `Ok(None)` so the caller can drop the example.
    Drop,
}

/// Lowercases, splits on whitespace and splits punctuation into separate
/// tokens. An apostrophe followed by a letter starts a clitic token
/// (`what's` becomes `what`, `'s`).
pub fn tokenize(text: &str) -> Result<Utterance> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let lower = chunk.to_lowercase();
        let chars: Vec<char> = lower.chars().collect();
        let mut current = String::new();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c.is_alphanumeric() {
                current.push(c);
            } else if c == '\'' && chars.get(i + 1).is_some_and(|n| n.is_alphabetic()) {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                current.push(c);
            } else {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(c.to_string());
            }
            i += 1;
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    Utterance::new(tokens)
}

/// [`tokenize`] with the length bound applied per `policy`.
pub fn tokenize_bounded(text: &str, policy: OverLength) -> Result<Option<Utterance>> {
    let u = tokenize(text)?;
    if u.len() <= MAX_UTTERANCE_LEN {
        return Ok(Some(u));
    }
    match policy {
        OverLength::Error => Err(Error::UtteranceTooLong {
            len: u.len(),
            limit: MAX_UTTERANCE_LEN,
        }),
        OverLength::Drop => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(text: &str) -> Vec<String> {
        tokenize(text).unwrap().tokens().to_vec()
    }

    #[test]
    fn splits_trailing_punctuation() {
        assert_eq!(toks("I want Chinese food."), ["i", "want", "chinese", "food", "."]);
    }

    #[test]
    fn splits_clitics() {
        assert_eq!(toks("What's the phone?"), ["what", "'s", "the", "phone", "?"]);
    }

    #[test]
    fn keeps_non_ascii_words() {
        assert_eq!(toks("Ich möchte ESSEN!"), ["ich", "möchte", "essen", "!"]);
        assert_eq!(toks("north-european"), ["north", "-", "european"]);
    }

    #[test]
    fn empty_text_is_an_error() {
        assert!(matches!(tokenize(""), Err(Error::EmptyUtterance)));
        assert!(matches!(tokenize(" \t\n "), Err(Error::EmptyUtterance)));
    }

    #[test]
    fn length_bound_policies() {
        let long = vec!["w"; 45].join(" ");
        assert!(matches!(
            tokenize_bounded(&long, OverLength::Error),
            Err(Error::UtteranceTooLong { len: 45, limit: 40 })
        ));
        assert_eq!(tokenize_bounded(&long, OverLength::Drop).unwrap(), None);
        let ok = vec!["w"; 40].join(" ");
        assert_eq!(tokenize_bounded(&ok, OverLength::Error).unwrap().unwrap().len(), 40);
    }

    #[test]
    fn find_contiguous_run() {
        let u = tokenize("any north american food").unwrap();
        let needle = vec!["north".to_string(), "american".to_string()];
        assert_eq!(u.find(&needle), Some(1));
        assert_eq!(u.find(&["food".to_string(), "north".to_string()]), None);
    }
}
