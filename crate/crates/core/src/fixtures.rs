//! Small deterministic fixtures for tests: a five-candidate ontology, random
//! word vectors over a twenty-word vocabulary, models with well-spread
//! filter biases, and two annotated dialogs.

use std::sync::Arc;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{parse_dialogs, tokenize, BilingualDictionary, Dialog, EmbeddingTable, Ontology, OntologyMapping, Utterance};
use crate::model::encoder::{kink_margin, EncoderView};
use crate::model::{Lexicon, ModelConfig, NbtModel, WordMatrix};
use crate::numeric::Tensor;

pub const WORDS: &[&str] = &[
    "food", "area", "thai", "greek", "north", "south", "centre", "phone", "address", "i", "want", "the",
    "please", "what", "is", "yes", "cheap", "a", "in", "place",
];

pub fn ontology() -> Ontology {
    let mut inf = IndexMap::new();
    inf.insert("food".to_string(), vec!["thai".to_string(), "greek".to_string()]);
    inf.insert(
        "area".to_string(),
        vec!["north".to_string(), "south".to_string(), "centre".to_string()],
    );
    Ontology::new(inf, vec!["phone".to_string(), "address".to_string()]).unwrap()
}

pub fn table(dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries: Vec<(String, Vec<f64>)> = WORDS
        .iter()
        .map(|w| {
            let v: Vec<f64> = (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z / (dim as f64).sqrt()
                })
                .collect();
            (w.to_string(), v)
        })
        .collect();
    EmbeddingTable::from_entries(dim, entries).unwrap()
}

pub fn lexicon(dim: usize, seed: u64) -> Lexicon {
    Lexicon::new(Arc::new(table(dim, seed)), ontology()).unwrap()
}

/// A model whose filter biases are negative and spread out, so ReLU
/// activity differs across a batch and no bias gradient vanishes
/// identically under batch normalization.
pub fn model(dim: usize, seed: u64) -> NbtModel {
    let o = ontology();
    let config = ModelConfig {
        hidden: dim,
        ..Default::default()
    };
    let mut m = NbtModel::init(config, "en", &o.fingerprint(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    let names: Vec<String> = m.params.names().map(str::to_string).collect();
    for name in names {
        let t = m.params.tensor(&name).unwrap().clone();
        let data: Vec<f64> = if name.starts_with("encoder.b") {
            (0..t.len()).map(|_| rng.random_range(-0.6..-0.05)).collect()
        } else if name == "gate.b_cs" {
            (0..t.len()).map(|_| rng.random_range(-0.5..0.5)).collect()
        } else if name.starts_with("gate.w_t") {
            (0..t.len()).map(|_| rng.random_range(-0.5..0.5)).collect()
        } else {
            continue;
        };
        m.params
            .replace(&name, Tensor::new(t.shape().to_vec(), data).unwrap())
            .unwrap();
    }
    m
}

/// The first model from `seed` upward whose encoder is at least `margin`
/// away from any pooling or ReLU switch on every utterance in `batch`.
pub fn smooth_model(dim: usize, seed: u64, batch: &[&WordMatrix], margin: f64) -> NbtModel {
    (seed..)
        .map(|s| model(dim, s))
        .find(|m| {
            let view = EncoderView::new(&m.params, dim).unwrap();
            batch.iter().all(|w| kink_margin(&view, w) > margin)
        })
        .unwrap()
}

/// Six utterances over [`WORDS`], one of them entirely out of vocabulary.
pub fn utterances() -> Vec<Utterance> {
    [
        "i want thai food",
        "what is the phone please",
        "yes",
        "a greek place in the south",
        "zzz qqq",
        "cheap place in the centre",
    ]
    .iter()
    .map(|t| tokenize(t).unwrap())
    .collect()
}

/// A dictionary within [`WORDS`] with one- and two-candidate entries.
pub fn dictionary() -> BilingualDictionary {
    let mut d = BilingualDictionary::new();
    for (s, t) in [("thai", &["greek", "thai"][..]), ("food", &["place"]), ("south", &["north", "centre"])] {
        d.add(s, t.iter().map(|w| w.to_string()));
    }
    d
}

/// Maps every ontology term of `o` to itself in language `language`.
pub fn identity_mapping(o: &Ontology, language: &str) -> OntologyMapping {
    let mut m = OntologyMapping::new();
    for term in o.slots().chain(o.informable.values().flatten().map(String::as_str)) {
        m.add(term, language, term).unwrap();
    }
    for r in &o.requestable {
        m.add(r, language, r).unwrap();
    }
    m
}

/// Two short dialogs over [`ontology`], one of them ending in an all-OOV turn.
pub fn dialogs(ontology: &Ontology) -> Vec<Dialog> {
    parse_dialogs(DIALOGS, ontology, std::path::Path::new("fixture")).unwrap()
}

const DIALOGS: &str = r#"[{"dialogue_idx":1,"turns":[{"system_acts":{"request":null,"confirm_slot":null,"confirm_value":null},"system_text":"","transcript":"i want thai food","belief_state":{"food":"thai"},"requests":[]},{"system_acts":{"request":"area","confirm_slot":null,"confirm_value":null},"system_text":"","transcript":"in the north please what is the phone","belief_state":{"food":"thai","area":"north"},"requests":["phone"]},{"system_acts":{"request":null,"confirm_slot":"area","confirm_value":"north"},"system_text":"","transcript":"yes cheap place","belief_state":{"food":"thai","area":"north"},"requests":[]}]},{"dialogue_idx":2,"turns":[{"system_acts":{"request":null,"confirm_slot":null,"confirm_value":null},"system_text":"","transcript":"a greek place in the south","belief_state":{"food":"greek","area":"south"},"requests":[]},{"system_acts":{"request":null,"confirm_slot":"food","confirm_value":"greek"},"system_text":"","transcript":"yes what is the address","belief_state":{"food":"greek","area":"south"},"requests":["address"]},{"system_acts":{"request":null,"confirm_slot":null,"confirm_value":null},"system_text":"","transcript":"i want centre please","belief_state":{"food":"greek","area":"centre"},"requests":[]},{"system_acts":{"request":null,"confirm_slot":null,"confirm_value":null},"system_text":"","transcript":"zzz qqq","belief_state":{"food":"greek","area":"centre"},"requests":[]}]}]"#;
