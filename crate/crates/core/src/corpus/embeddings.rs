use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::{read_text, tokenize};

/// How out-of-vocabulary words are embedded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OovPolicy {
    Zero,
    /// A fixed pseudo-random vector per word, derived from the word and seed.
    Random { seed: u64 },
}

/// Immutable word-vector table. Lookups are thread-safe; the OOV counter is
/// the only interior state.
#[derive(Debug)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    words: Vec<String>,
    vectors: Vec<f64>,
    oov_policy: OovPolicy,
    oov_lookups: AtomicUsize,
}

impl Clone for EmbeddingTable {
    fn clone(&self) -> Self {
        EmbeddingTable {
            dim: self.dim,
            index: self.index.clone(),
            words: self.words.clone(),
            vectors: self.vectors.clone(),
            oov_policy: self.oov_policy,
            oov_lookups: AtomicUsize::new(self.oov_lookups.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for EmbeddingTable {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.words == other.words && self.vectors == other.vectors
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub loaded: usize,
    pub skipped: usize,
}

/// Result of embedding a (possibly multi-word) term.
#[derive(Debug, Clone, PartialEq)]
pub struct TermVector {
    pub vector: Vec<f64>,
    /// Every token of the term was out of vocabulary.
    pub oov: bool,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            index: HashMap::new(),
            words: Vec::new(),
            vectors: Vec::new(),
            oov_policy: OovPolicy::Zero,
            oov_lookups: AtomicUsize::new(0),
        }
    }

    pub fn from_entries<I, S>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut table = EmbeddingTable::new(dim);
        for (word, v) in entries {
            table.insert(word.into(), v)?;
        }
        Ok(table)
    }

    /// Adds or overwrites a word.
    pub fn insert(&mut self, word: String, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "embedding for `{word}` has {} values, table dimension is {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding `{word}`")));
        }
        match self.index.get(&word) {
            Some(&i) => self.vectors[i * self.dim..(i + 1) * self.dim].copy_from_slice(&vector),
            None => {
                self.index.insert(word.clone(), self.words.len());
                self.words.push(word);
                self.vectors.extend_from_slice(&vector);
            }
        }
        Ok(())
    }

    pub fn with_oov_policy(mut self, policy: OovPolicy) -> Self {
        self.oov_policy = policy;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    /// Vector for `word` plus an out-of-vocabulary flag. Misses are counted.
    pub fn lookup(&self, word: &str) -> (Vec<f64>, bool) {
        match self.get(word) {
            Some(v) => (v.to_vec(), false),
            None => {
                let n = self.oov_lookups.fetch_add(1, Ordering::Relaxed);
                if n == 0 {
                    log::warn!("out-of-vocabulary word `{word}` (further misses are counted silently)");
                }
                (self.oov_vector(word), true)
            }
        }
    }

    pub fn oov_lookups(&self) -> usize {
        self.oov_lookups.load(Ordering::Relaxed)
    }

    fn oov_vector(&self, word: &str) -> Vec<f64> {
        match self.oov_policy {
            OovPolicy::Zero => vec![0.0; self.dim],
            OovPolicy::Random { seed } => {
                let mut hasher = Sha256::new();
                hasher.update(seed.to_le_bytes());
                hasher.update(word.as_bytes());
                let digest: [u8; 32] = hasher.finalize().into();
                let mut rng = ChaCha8Rng::from_seed(digest);
                let scale = 1.0 / (self.dim as f64).sqrt();
                (0..self.dim)
                    .map(|_| { let z: f64 = StandardNormal.sample(&mut rng); scale * z })
                    .collect::<Vec<f64>>()
            }
        }
    }

    /// Writes the plain-text `word v1 ... vH` format.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for (i, w) in self.words.iter().enumerate() {
            write!(out, "{w}").unwrap();
            for v in &self.vectors[i * self.dim..(i + 1) * self.dim] {
                write!(out, " {v}").unwrap();
            }
            out.push(b'\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Stable digest of the table contents.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.dim as u64).to_le_bytes());
        for (i, w) in self.words.iter().enumerate() {
            hasher.update(w.as_bytes());
            hasher.update([0u8]);
            for v in &self.vectors[i * self.dim..(i + 1) * self.dim] {
                hasher.update(v.to_le_bytes());
            }
        }
        hex(&hasher.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses `word v1 ... vH` lines. The dimension comes from an optional
/// `count dim` header, otherwise from the first well-formed line. Lines with a
/// different number of values (or unparsable values) are skipped and counted;
/// a file where skipped lines outnumber loaded ones has no consistent
/// dimension and is rejected.
pub fn parse_embeddings(text: &str, origin: &Path) -> Result<(EmbeddingTable, LoadReport)> {
    let mut dim: Option<usize> = None;
    let mut entries: Vec<(String, Vec<f64>)> = Vec::new();
    let mut report = LoadReport::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let word = fields.next().unwrap();
        let rest: Vec<&str> = fields.collect();
        if lineno == 0 && rest.len() == 1 {
            if let (Ok(_), Ok(d)) = (word.parse::<usize>(), rest[0].parse::<usize>()) {
                dim = Some(d);
                continue;
            }
        }
        let values: Option<Vec<f64>> = rest
            .iter()
            .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        let Some(values) = values.filter(|v| !v.is_empty()) else {
            report.skipped += 1;
            continue;
        };
        let expected = *dim.get_or_insert(values.len());
        if values.len() != expected {
            report.skipped += 1;
            continue;
        }
        entries.push((word.to_string(), values));
    }
    let Some(dim) = dim else {
        return Err(Error::format(origin, "no embedding entries"));
    };
    if report.skipped > entries.len() {
        return Err(Error::format(
            origin,
            format!(
                "inconsistent dimension: {} lines skipped, {} loaded at H={dim}",
                report.skipped,
                entries.len()
            ),
        ));
    }
    if report.skipped > 0 {
        log::warn!("{}: skipped {} malformed embedding lines", origin.display(), report.skipped);
    }
    report.loaded = entries.len();
    Ok((EmbeddingTable::from_entries(dim, entries)?, report))
}

pub fn load_embeddings(path: &Path) -> Result<(EmbeddingTable, LoadReport)> {
    parse_embeddings(&read_text(path)?, path)
}

/// Sum of the vectors of the term's tokens.
pub fn embed_term(term: &str, table: &EmbeddingTable) -> Result<TermVector> {
    let tokens = tokenize(term)?;
    let mut vector = vec![0.0; table.dim()];
    let mut all_oov = true;
    for t in tokens.tokens() {
        let (v, oov) = table.lookup(t);
        all_oov &= oov;
        for (a, b) in vector.iter_mut().zip(&v) {
            *a += b;
        }
    }
    Ok(TermVector { vector, oov: all_oov })
}
