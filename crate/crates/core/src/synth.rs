//! A deterministic toy world: two artificial languages related by a known
//! word bijection, restaurant-style dialogs over a small ontology, and every
//! resource file the training and transfer pipeline reads.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{
    load_dialogs, load_dictionary, load_embeddings, load_mapping, load_ontology, load_parallel, save_dialogs,
    BeliefState, BilingualDictionary, Dialog, DialogTurn, EmbeddingTable, Ontology, OntologyMapping, ParallelCorpus,
    SystemActs, Utterance,
};
use crate::error::{Error, Result};
use crate::numeric::dot;

const SOURCE_ONSETS: &[&str] = &["b", "d", "g", "k", "l", "m", "n", "p"];
const TARGET_ONSETS: &[&str] = &["f", "h", "j", "r", "s", "t", "v", "z"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

/// Function words, by role.
const YES: usize = 0;
const I: usize = 1;
const WANT: usize = 2;
const PLEASE: usize = 3;
const THE: usize = 4;
const AND: usize = 5;
const WHAT: usize = 6;
const IS: usize = 7;
const ABOUT: usize = 8;
const THAT: usize = 9;
const FINE: usize = 10;
const FUNCTION_WORDS: usize = 11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Words per language.
    pub vocabulary: usize,
    pub slots: usize,
    pub values_per_slot: usize,
    pub requestables: usize,
    pub train_dialogs: usize,
    pub valid_dialogs: usize,
    pub test_dialogs: usize,
    pub turns_per_dialog: usize,
    pub parallel_pairs: usize,
    /// Dictionary candidates per source word.
    pub ambiguity: usize,
    pub dim: usize,
    /// Scale of the noise separating a target word's vector from its
    /// source translation in the shared-space embeddings.
    pub alignment_noise: f64,
    /// Expected vector norm of function and distractor words; ontology
    /// words have norm 1.
    pub filler_scale: f64,
    /// Chance that a user request turn also changes an earlier goal.
    pub modify_prob: f64,
    pub seed: u64,
    pub source_language: String,
    pub target_language: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocabulary: 50,
            slots: 2,
            values_per_slot: 5,
            requestables: 3,
            train_dialogs: 200,
            valid_dialogs: 50,
            test_dialogs: 100,
            turns_per_dialog: 3,
            parallel_pairs: 500,
            ambiguity: 3,
            dim: 16,
            alignment_noise: 0.3,
            filler_scale: 0.5,
            modify_prob: 0.1,
            seed: 7,
            source_language: "src".into(),
            target_language: "tgt".into(),
        }
    }
}

impl SynthConfig {
    fn reserved(&self) -> usize {
        self.slots + self.slots * self.values_per_slot + self.requestables + FUNCTION_WORDS
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocabulary", self.vocabulary),
            ("slots", self.slots),
            ("values_per_slot", self.values_per_slot),
            ("requestables", self.requestables),
            ("train_dialogs", self.train_dialogs),
            ("valid_dialogs", self.valid_dialogs),
            ("test_dialogs", self.test_dialogs),
            ("turns_per_dialog", self.turns_per_dialog),
            ("parallel_pairs", self.parallel_pairs),
            ("ambiguity", self.ambiguity),
            ("dim", self.dim),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
        if self.reserved() > self.vocabulary {
            return Err(Error::InvalidArgument(format!(
                "{} slot, value, request and function words do not fit a {}-word vocabulary",
                self.reserved(),
                self.vocabulary
            )));
        }
        if !(self.alignment_noise >= 0.0 && self.alignment_noise.is_finite()) {
            return Err(Error::InvalidArgument("alignment noise must be >= 0".into()));
        }
        if !(self.filler_scale > 0.0 && self.filler_scale.is_finite()) {
            return Err(Error::InvalidArgument("filler scale must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.modify_prob) {
            return Err(Error::InvalidArgument("modify probability must be in [0,1]".into()));
        }
        if self.source_language == self.target_language || self.source_language.is_empty() {
            return Err(Error::InvalidArgument("languages must be distinct and non-empty".into()));
        }
        Ok(())
    }
}

/// One language's words, grouped by role.
#[derive(Debug, Clone, PartialEq)]
struct Vocabulary {
    slots: Vec<String>,
    values: Vec<Vec<String>>,
    requests: Vec<String>,
    function: Vec<String>,
    distractors: Vec<String>,
}

impl Vocabulary {
    fn all(&self) -> impl Iterator<Item = &String> {
        self.slots
            .iter()
            .chain(self.values.iter().flatten())
            .chain(&self.requests)
            .chain(&self.function)
            .chain(&self.distractors)
    }

    /// Same-role groups, so dictionary confusions stay within a role.
    fn groups(&self) -> Vec<Vec<String>> {
        let mut g = vec![self.slots.clone(), self.values.concat(), self.requests.clone()];
        g.push(self.function.clone());
        g.push(self.distractors.clone());
        g
    }
}

fn pseudo_words(n: usize, onsets: &[&str], rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.random_range(2..=3);
        let w: String = (0..syllables)
            .map(|_| format!("{}{}", onsets.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
            .collect();
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn vocabulary(config: &SynthConfig, onsets: &[&str], rng: &mut ChaCha8Rng) -> Vocabulary {
    let mut words = pseudo_words(config.vocabulary, onsets, rng).into_iter();
    let mut take = |n: usize| -> Vec<String> { words.by_ref().take(n).collect() };
    let slots = take(config.slots);
    let values = (0..config.slots).map(|_| take(config.values_per_slot)).collect();
    let requests = take(config.requestables);
    let function = take(FUNCTION_WORDS);
    let distractors = take(config.vocabulary - config.reserved());
    Vocabulary {
        slots,
        values,
        requests,
        function,
        distractors,
    }
}

/// `n` rows. The first `concepts` of them (up to `dim`) form an orthonormal
/// random frame so ontology words never crowd each other; the rest are
/// Gaussian with expected norm `filler_scale`.
fn embedding_rows(n: usize, concepts: usize, dim: usize, filler_scale: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let scale = 1.0 / (dim as f64).sqrt();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = gaussian(dim, if i < concepts { scale } else { scale * filler_scale }, rng);
        if i < concepts.min(dim) {
            for u in &rows {
                let d = dot(&v, u);
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
            }
            let norm = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|a| *a /= norm);
        }
        rows.push(v);
    }
    rows
}

fn gaussian(dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect()
}

/// Train, validation and test dialogs of one language.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<Dialog>,
    pub valid: Vec<Dialog>,
    pub test: Vec<Dialog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTask {
    pub config: SynthConfig,
    pub source_ontology: Ontology,
    pub target_ontology: Ontology,
    pub mapping: OntologyMapping,
    pub dictionary: BilingualDictionary,
    pub source: Splits,
    pub target: Splits,
    pub parallel: ParallelCorpus,
    pub source_embeddings: EmbeddingTable,
    /// Target vectors near their translations' source vectors.
    pub target_bilingual: EmbeddingTable,
    /// Target vectors drawn independently of the source.
    pub target_monolingual: EmbeddingTable,
}

/// Sentence builder over one vocabulary.
struct Writer<'a> {
    v: &'a Vocabulary,
}

impl Writer<'_> {
    fn f(&self, k: usize) -> String {
        self.v.function[k].clone()
    }

    fn inform_clause(&self, slot: usize, value: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        let s = self.v.slots[slot].clone();
        let val = self.v.values[slot][value].clone();
        match rng.random_range(0..4) {
            0 => vec![val, s],
            1 => vec![self.f(THE), val, s],
            2 => vec![val],
            _ => vec![s, self.f(IS), val],
        }
    }

    fn inform(&self, goals: &[(usize, usize)], rng: &mut ChaCha8Rng) -> Vec<String> {
        let mut out = match rng.random_range(0..3) {
            0 => vec![self.f(I), self.f(WANT)],
            1 => vec![self.f(WHAT), self.f(ABOUT)],
            _ => vec![],
        };
        for (k, &(s, v)) in goals.iter().enumerate() {
            if k > 0 {
                out.push(self.f(AND));
            }
            out.extend(self.inform_clause(s, v, rng));
        }
        if rng.random_bool(0.3) {
            out.push(self.f(PLEASE));
        }
        out
    }

    fn request(&self, requests: &[usize], rng: &mut ChaCha8Rng) -> Vec<String> {
        let mut out = match rng.random_range(0..3) {
            0 => vec![self.f(WHAT), self.f(IS)],
            1 => vec![self.f(WHAT), self.f(ABOUT)],
            _ => vec![],
        };
        for (k, &r) in requests.iter().enumerate() {
            if k > 0 {
                out.push(self.f(AND));
            }
            out.push(self.f(THE));
            out.push(self.v.requests[r].clone());
        }
        if rng.random_bool(0.3) {
            out.push(self.f(PLEASE));
        }
        out
    }

    fn affirm(&self, rng: &mut ChaCha8Rng) -> Vec<String> {
        match rng.random_range(0..3) {
            0 => vec![self.f(YES)],
            1 => vec![self.f(YES), self.f(PLEASE)],
            _ => vec![self.f(YES), self.f(THAT), self.f(IS), self.f(FINE)],
        }
    }

    fn with_distractors(&self, mut words: Vec<String>, rng: &mut ChaCha8Rng) -> Vec<String> {
        if self.v.distractors.is_empty() {
            return words;
        }
        for _ in 0..rng.random_range(0..=2) {
            let at = rng.random_range(0..=words.len());
            words.insert(at, self.v.distractors.choose(rng).unwrap().clone());
        }
        words
    }
}

enum UserMove {
    AnswerRequest(usize),
    Affirm(usize),
    Ask,
}

/// A dialog as word-role indices, rendered later in both languages.
struct Plan {
    turns: Vec<PlannedTurn>,
}

struct PlannedTurn {
    acts: PlannedActs,
    words: Vec<String>,
    goals: BTreeMap<usize, usize>,
    requests: BTreeSet<usize>,
}

enum PlannedActs {
    None,
    Request(usize),
    Confirm(usize, usize),
}

fn plan_dialog(config: &SynthConfig, w: &Writer, rng: &mut ChaCha8Rng) -> Plan {
    let mut goals: BTreeMap<usize, usize> = BTreeMap::new();
    let mut turns = Vec::with_capacity(config.turns_per_dialog);
    for t in 0..config.turns_per_dialog {
        let mut requests = BTreeSet::new();
        let (acts, words) = if t == 0 {
            let mut slots: Vec<usize> = (0..config.slots).collect();
            slots.shuffle(rng);
            let k = rng.random_range(1..=config.slots.min(2));
            let chosen: Vec<(usize, usize)> = slots[..k]
                .iter()
                .map(|&s| (s, rng.random_range(0..config.values_per_slot)))
                .collect();
            goals.extend(chosen.iter().copied());
            (PlannedActs::None, w.inform(&chosen, rng))
        } else {
            let unset: Vec<usize> = (0..config.slots).filter(|s| !goals.contains_key(s)).collect();
            let set: Vec<usize> = goals.keys().copied().collect();
            let mut moves = vec![UserMove::Ask];
            if let Some(&s) = unset.choose(rng) {
                moves.push(UserMove::AnswerRequest(s));
            }
            if let Some(&s) = set.choose(rng) {
                moves.push(UserMove::Affirm(s));
            }
            match moves.swap_remove(rng.random_range(0..moves.len())) {
                UserMove::AnswerRequest(s) => {
                    let v = rng.random_range(0..config.values_per_slot);
                    goals.insert(s, v);
                    (PlannedActs::Request(s), w.inform(&[(s, v)], rng))
                }
                UserMove::Affirm(s) => (PlannedActs::Confirm(s, goals[&s]), w.affirm(rng)),
                UserMove::Ask => {
                    let r = rng.random_range(0..config.requestables);
                    requests.insert(r);
                    let mut words = Vec::new();
                    if !set.is_empty() && config.values_per_slot > 1 && rng.random_bool(config.modify_prob) {
                        let s = *set.choose(rng).unwrap();
                        let old = goals[&s];
                        let v = (old + rng.random_range(1..config.values_per_slot)) % config.values_per_slot;
                        goals.insert(s, v);
                        words = w.inform(&[(s, v)], rng);
                        words.push(w.f(AND));
                    }
                    words.extend(w.request(&[r], rng));
                    (PlannedActs::None, words)
                }
            }
        };
        turns.push(PlannedTurn {
            acts,
            words: w.with_distractors(words, rng),
            goals: goals.clone(),
            requests,
        });
    }
    Plan { turns }
}

fn render(plan: &Plan, id: i64, v: &Vocabulary, translate: &dyn Fn(&str) -> String) -> Dialog {
    let turns = plan
        .turns
        .iter()
        .map(|p| {
            let tokens: Vec<String> = p.words.iter().map(|w| translate(w)).collect();
            let (system_acts, system_text) = match p.acts {
                PlannedActs::None => (SystemActs::none(), String::new()),
                PlannedActs::Request(s) => {
                    let slot = translate(&v.slots[s]);
                    (
                        SystemActs {
                            request: Some(slot.clone()),
                            confirm: None,
                        },
                        format!("request {slot}"),
                    )
                }
                PlannedActs::Confirm(s, val) => {
                    let slot = translate(&v.slots[s]);
                    let value = translate(&v.values[s][val]);
                    (
                        SystemActs {
                            request: None,
                            confirm: Some((slot.clone(), value.clone())),
                        },
                        format!("confirm {slot} {value}"),
                    )
                }
            };
            DialogTurn {
                system_acts,
                system_text,
                transcript: tokens.join(" "),
                utterance: Utterance::new(tokens).expect("templates are non-empty"),
                gold: BeliefState {
                    goals: p
                        .goals
                        .iter()
                        .map(|(&s, &val)| (translate(&v.slots[s]), translate(&v.values[s][val])))
                        .collect(),
                    requests: p.requests.iter().map(|&r| translate(&v.requests[r])).collect(),
                },
            }
        })
        .collect();
    Dialog { id, turns }
}

fn parallel_sentence(config: &SynthConfig, w: &Writer, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut words = Vec::new();
    while words.len() < crate::corpus::parallel::MIN_PARALLEL_LEN {
        if !words.is_empty() {
            words.push(w.f(AND));
        }
        let piece = match rng.random_range(0..3) {
            0 => {
                let s = rng.random_range(0..config.slots);
                w.inform(&[(s, rng.random_range(0..config.values_per_slot))], rng)
            }
            1 => w.request(&[rng.random_range(0..config.requestables)], rng),
            _ => w.affirm(rng),
        };
        words.extend(piece);
    }
    w.with_distractors(words, rng)
}

/// Builds the whole toy world from `config`.
pub fn generate_toy_task(config: &SynthConfig) -> Result<ToyTask> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let src = vocabulary(config, SOURCE_ONSETS, &mut rng);
    let tgt = vocabulary(config, TARGET_ONSETS, &mut rng);
    let word_map: BTreeMap<String, String> = src.all().cloned().zip(tgt.all().cloned()).collect();
    let to_target = |w: &str| word_map[w].clone();
    let identity = |w: &str| w.to_string();
    let (sl, tl) = (config.source_language.as_str(), config.target_language.as_str());

    let ontology_of = |v: &Vocabulary| -> Result<Ontology> {
        let informable: IndexMap<String, Vec<String>> = v.slots.iter().cloned().zip(v.values.iter().cloned()).collect();
        Ontology::new(informable, v.requests.clone())
    };
    let source_ontology = ontology_of(&src)?;
    let target_ontology = ontology_of(&tgt)?;
    let mut mapping = OntologyMapping::new();
    for (s, slot) in src.slots.iter().enumerate() {
        mapping.add(&format!("SLOT{s}"), sl, slot)?;
        mapping.add(&format!("SLOT{s}"), tl, &to_target(slot))?;
        for (k, value) in src.values[s].iter().enumerate() {
            mapping.add(&format!("S{s}V{k}"), sl, value)?;
            mapping.add(&format!("S{s}V{k}"), tl, &to_target(value))?;
        }
    }
    for (r, req) in src.requests.iter().enumerate() {
        mapping.add(&format!("REQ{r}"), sl, req)?;
        mapping.add(&format!("REQ{r}"), tl, &to_target(req))?;
    }

    let mut dictionary = BilingualDictionary::new();
    for (group, tgt_group) in src.groups().iter().zip(tgt.groups()) {
        for (k, word) in group.iter().enumerate() {
            let mut others: Vec<&String> = tgt_group.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, w)| w).collect();
            others.shuffle(&mut rng);
            let mut cands: Vec<String> = std::iter::once(tgt_group[k].clone())
                .chain(others.into_iter().take(config.ambiguity - 1).cloned())
                .collect();
            cands.shuffle(&mut rng);
            dictionary.add(word.clone(), cands);
        }
    }

    let writer = Writer { v: &src };
    let mut split = |n: usize, offset: usize| -> (Vec<Dialog>, Vec<Dialog>) {
        (0..n)
            .map(|i| {
                let plan = plan_dialog(config, &writer, &mut rng);
                let id = (offset + i) as i64;
                (render(&plan, id, &src, &identity), render(&plan, id, &src, &to_target))
            })
            .unzip()
    };
    let (s_train, t_train) = split(config.train_dialogs, 0);
    let (s_valid, t_valid) = split(config.valid_dialogs, config.train_dialogs);
    let (s_test, t_test) = split(config.test_dialogs, config.train_dialogs + config.valid_dialogs);

    let mut parallel = ParallelCorpus::default();
    for _ in 0..config.parallel_pairs {
        let words = parallel_sentence(config, &writer, &mut rng);
        let target: Vec<String> = words.iter().map(|w| to_target(w)).collect();
        parallel
            .pairs
            .push((Utterance::new(words)?, Utterance::new(target)?));
    }

    let scale = 1.0 / (config.dim as f64).sqrt();
    let mut source_embeddings = EmbeddingTable::new(config.dim);
    let mut target_bilingual = EmbeddingTable::new(config.dim);
    let concepts = config.slots * (1 + config.values_per_slot) + config.requestables;
    let rows = embedding_rows(config.vocabulary, concepts, config.dim, config.filler_scale, &mut rng);
    for (w, v) in src.all().zip(rows) {
        let noise = gaussian(config.dim, scale * config.alignment_noise, &mut rng);
        target_bilingual.insert(to_target(w), v.iter().zip(&noise).map(|(a, b)| a + b).collect())?;
        source_embeddings.insert(w.clone(), v)?;
    }
    let mut target_monolingual = EmbeddingTable::new(config.dim);
    let rows = embedding_rows(config.vocabulary, concepts, config.dim, config.filler_scale, &mut rng);
    for (w, v) in tgt.all().zip(rows) {
        target_monolingual.insert(w.clone(), v)?;
    }

    Ok(ToyTask {
        config: config.clone(),
        source_ontology,
        target_ontology,
        mapping,
        dictionary,
        source: Splits {
            train: s_train,
            valid: s_valid,
            test: s_test,
        },
        target: Splits {
            train: t_train,
            valid: t_valid,
            test: t_test,
        },
        parallel,
        source_embeddings,
        target_bilingual,
        target_monolingual,
    })
}

/// File names inside a generated task directory.
pub mod files {
    pub const MANIFEST: &str = "manifest.json";
    pub const ONTOLOGY_SRC: &str = "ontology.src.json";
    pub const ONTOLOGY_TGT: &str = "ontology.tgt.json";
    pub const MAPPING: &str = "mapping.tsv";
    pub const DICTIONARY: &str = "dictionary.tsv";
    pub const PARALLEL_SRC: &str = "parallel.src.txt";
    pub const PARALLEL_TGT: &str = "parallel.tgt.txt";
    pub const EMBEDDINGS_SRC: &str = "embeddings.src.txt";
    pub const EMBEDDINGS_TGT_BILINGUAL: &str = "embeddings.tgt.bilingual.txt";
    pub const EMBEDDINGS_TGT_MONO: &str = "embeddings.tgt.mono.txt";

    /// Dialog file of `split` (train, valid, test) on `side` (src, tgt).
    pub fn dialogs(split: &str, side: &str) -> String {
        format!("{split}.{side}.json")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub config: SynthConfig,
    pub files: BTreeMap<String, String>,
}

impl ToyTask {
    /// Writes every resource into `dir` (created if missing) and returns the
    /// manifest that was written alongside them.
    pub fn write(&self, dir: &Path) -> Result<Manifest> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| -> Result<()> {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(p, e))
        };
        let mut listed = BTreeMap::new();
        let mut note = |key: &str, name: String| {
            listed.insert(key.to_string(), name);
        };
        self.source_ontology.save(&dir.join(files::ONTOLOGY_SRC))?;
        note("ontology.src", files::ONTOLOGY_SRC.into());
        self.target_ontology.save(&dir.join(files::ONTOLOGY_TGT))?;
        note("ontology.tgt", files::ONTOLOGY_TGT.into());
        for (side, splits, ontology) in [
            ("src", &self.source, &self.source_ontology),
            ("tgt", &self.target, &self.target_ontology),
        ] {
            for (split, dialogs) in [("train", &splits.train), ("valid", &splits.valid), ("test", &splits.test)] {
                let name = files::dialogs(split, side);
                save_dialogs(&dir.join(&name), dialogs, ontology)?;
                note(&format!("dialogs.{split}.{side}"), name);
            }
        }
        write(files::MAPPING, self.mapping.to_tsv())?;
        note("mapping", files::MAPPING.into());
        write(files::DICTIONARY, self.dictionary.to_tsv())?;
        note("dictionary", files::DICTIONARY.into());
        let lines = |pick: fn(&(Utterance, Utterance)) -> &Utterance| -> String {
            self.parallel.pairs.iter().map(|p| format!("{}\n", pick(p))).collect()
        };
        write(files::PARALLEL_SRC, lines(|p| &p.0))?;
        write(files::PARALLEL_TGT, lines(|p| &p.1))?;
        note("parallel.src", files::PARALLEL_SRC.into());
        note("parallel.tgt", files::PARALLEL_TGT.into());
        self.source_embeddings.save(&dir.join(files::EMBEDDINGS_SRC))?;
        self.target_bilingual.save(&dir.join(files::EMBEDDINGS_TGT_BILINGUAL))?;
        self.target_monolingual.save(&dir.join(files::EMBEDDINGS_TGT_MONO))?;
        note("embeddings.src", files::EMBEDDINGS_SRC.into());
        note("embeddings.tgt.bilingual", files::EMBEDDINGS_TGT_BILINGUAL.into());
        note("embeddings.tgt.mono", files::EMBEDDINGS_TGT_MONO.into());
        let manifest = Manifest {
            generator: format!("xlnbt {}", env!("CARGO_PKG_VERSION")),
            config: self.config.clone(),
            files: listed,
        };
        write(files::MANIFEST, serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }

    /// Reads a task directory written by [`ToyTask::write`].
    pub fn load(dir: &Path) -> Result<ToyTask> {
        let path = |name: &str| -> PathBuf { dir.join(name) };
        let manifest: Manifest = serde_json::from_str(&crate::corpus::read_text(&path(files::MANIFEST))?)
            .map_err(|e| Error::format(path(files::MANIFEST), e.to_string()))?;
        let source_ontology = load_ontology(&path(files::ONTOLOGY_SRC))?;
        let target_ontology = load_ontology(&path(files::ONTOLOGY_TGT))?;
        let splits = |side: &str, o: &Ontology| -> Result<Splits> {
            Ok(Splits {
                train: load_dialogs(&path(&files::dialogs("train", side)), o)?,
                valid: load_dialogs(&path(&files::dialogs("valid", side)), o)?,
                test: load_dialogs(&path(&files::dialogs("test", side)), o)?,
            })
        };
        Ok(ToyTask {
            source: splits("src", &source_ontology)?,
            target: splits("tgt", &target_ontology)?,
            config: manifest.config,
            mapping: load_mapping(&path(files::MAPPING))?,
            dictionary: load_dictionary(&path(files::DICTIONARY))?,
            parallel: load_parallel(&path(files::PARALLEL_SRC), &path(files::PARALLEL_TGT))?,
            source_embeddings: load_embeddings(&path(files::EMBEDDINGS_SRC))?.0,
            target_bilingual: load_embeddings(&path(files::EMBEDDINGS_TGT_BILINGUAL))?.0,
            target_monolingual: load_embeddings(&path(files::EMBEDDINGS_TGT_MONO))?.0,
            source_ontology,
            target_ontology,
        })
    }
}
