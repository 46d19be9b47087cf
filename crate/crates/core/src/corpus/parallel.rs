use std::path::Path;

use crate::error::{Error, Result};

use super::{read_text, tokenize, Utterance, MAX_UTTERANCE_LEN};

/// Shortest sentence kept from a parallel corpus.
pub const MIN_PARALLEL_LEN: usize = 4;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParallelCorpus {
    pub pairs: Vec<(Utterance, Utterance)>,
    /// Line pairs dropped by the length window or because a side was empty.
    pub filtered: usize,
}

impl ParallelCorpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn in_window(u: &Utterance) -> bool {
    (MIN_PARALLEL_LEN..=MAX_UTTERANCE_LEN).contains(&u.len())
}

pub fn parse_parallel(source: &str, target: &str, origin: &Path) -> Result<ParallelCorpus> {
    let src: Vec<&str> = source.lines().collect();
    let tgt: Vec<&str> = target.lines().collect();
    if src.len() != tgt.len() {
        return Err(Error::format(
            origin,
            format!("parallel files differ in line count: {} vs {}", src.len(), tgt.len()),
        ));
    }
    let mut corpus = ParallelCorpus::default();
    for (s, t) in src.into_iter().zip(tgt) {
        match (tokenize(s), tokenize(t)) {
            (Ok(a), Ok(b)) if in_window(&a) && in_window(&b) => corpus.pairs.push((a, b)),
            _ => corpus.filtered += 1,
        }
    }
    Ok(corpus)
}

pub fn load_parallel(path_e: &Path, path_f: &Path) -> Result<ParallelCorpus> {
    parse_parallel(&read_text(path_e)?, &read_text(path_f)?, path_e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_pairs_in_window() {
        let c = parse_parallel(
            "i want cheap food\nshort one\n",
            "ich will billiges essen\nkurz eins\n",
            Path::new("mem"),
        )
        .unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.filtered, 1);
        assert_eq!(c.pairs[0].1.tokens()[3], "essen");
    }

    #[test]
    fn three_word_pair_is_filtered() {
        let c = parse_parallel("a b c\n", "x y z\n", Path::new("mem")).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn line_count_mismatch_is_an_error() {
        assert!(parse_parallel("a b c d\ne f g h\n", "w x y z\n", Path::new("mem")).is_err());
    }
}
