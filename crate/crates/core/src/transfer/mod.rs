//! Teacher to student distillation across languages. The student shares the
//! teacher's frozen decoder and learns its encoder and gate by matching the
//! teacher's encodings and gates.

pub mod encoder_match;
pub mod gate_match;
pub mod replace;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{BilingualDictionary, Dialog, OntologyMapping, ParallelCorpus, Utterance, MAX_UTTERANCE_LEN};
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, Curve};
use crate::model::{names, Lexicon, NbtModel, WordMatrix};
use crate::numeric::{Method, Optimizer, OptimizerConfig, Tensor};

pub use encoder_match::{code_switch, encoder_cost, encoder_cost_corpus, encoder_cost_dict, EncoderCost};
pub use gate_match::{gate_cost, gate_samples, map_config, prepared_gate_cost, GateConfigSample, GateCost, GateTuple, PreparedGates};
pub use replace::{
    candidate_probabilities, context_vector, replace_words, replacement_distribution, sample_replacement_count,
    MixedToken, MixedUtterance, Side,
};

/// Where encoder-matching pairs come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransferMode {
    /// Parallel corpus.
    #[serde(rename = "c", alias = "corpus")]
    Corpus,
    /// Code-switched source utterances built from a bilingual dictionary.
    #[serde(rename = "d", alias = "dictionary")]
    Dictionary,
}

impl std::str::FromStr for TransferMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c" | "corpus" => Ok(TransferMode::Corpus),
            "d" | "dictionary" => Ok(TransferMode::Dictionary),
            _ => Err(Error::InvalidArgument(format!("unknown transfer mode `{s}` (expected c or d)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StudentInit {
    #[serde(rename = "copy-teacher", alias = "copy")]
    CopyTeacher,
    #[serde(rename = "random")]
    Random,
}

impl std::str::FromStr for StudentInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy-teacher" | "copy" => Ok(StudentInit::CopyTeacher),
            "random" => Ok(StudentInit::Random),
            _ => Err(Error::InvalidArgument(format!(
                "unknown student init `{s}` (expected copy-teacher or random)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    pub mode: TransferMode,
    /// Weight of the gate cost.
    pub alpha: f64,
    /// Replacement temperature (dictionary mode).
    pub tau: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub student_init: StudentInit,
    pub learning_rate: f64,
    pub optimizer: Method,
    /// Curve rows are written every this many iterations.
    pub eval_every: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            mode: TransferMode::Dictionary,
            alpha: 1.0,
            tau: 0.1,
            batch_size: 32,
            iterations: 1000,
            seed: 0,
            student_init: StudentInit::CopyTeacher,
            learning_rate: 1e-3,
            optimizer: Method::Adam,
            eval_every: 100,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be > 0, got {}", self.tau)));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument("batch size must be at least 2".into()));
        }
        if self.iterations == 0 || self.eval_every == 0 {
            return Err(Error::InvalidArgument("iterations and eval interval must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be >= 0".into()));
        }
        Ok(())
    }
}

/// Everything a transfer run reads. The teacher and all tables are borrowed
/// immutably.
#[derive(Debug, Clone, Copy)]
pub struct TransferResources<'a> {
    pub teacher: &'a NbtModel,
    pub source: &'a Lexicon,
    pub target: &'a Lexicon,
    pub mapping: &'a OntologyMapping,
    pub target_language: &'a str,
    /// Source training dialogs: act patterns for gate samples and
    /// utterances for code switching.
    pub source_dialogs: &'a [Dialog],
    pub parallel: Option<&'a ParallelCorpus>,
    pub dictionary: Option<&'a BilingualDictionary>,
    /// Target dialogs scored for the curve only.
    pub eval_dialogs: Option<&'a [Dialog]>,
}

#[derive(Debug, Clone)]
pub struct TransferOutcome {
    pub student: NbtModel,
    /// Columns: iteration, encoder_cost, gate_cost, test_goal, test_request.
    pub curve: Curve,
}

/// A student for `target` carrying the teacher's decoder, frozen.
pub fn init_student(
    teacher: &NbtModel,
    target: &Lexicon,
    target_language: &str,
    init: StudentInit,
    seed: u64,
) -> Result<NbtModel> {
    let fingerprint = target.ontology().fingerprint();
    let mut student = match init {
        StudentInit::CopyTeacher => {
            let mut s = teacher.clone();
            s.language = target_language.to_string();
            s.ontology_fingerprint = fingerprint;
            s
        }
        StudentInit::Random => {
            let mut s = NbtModel::init(teacher.config, target_language, &fingerprint, seed)?;
            s.params
                .replace(names::DECODER_W_Y, Tensor::vector(teacher.w_y().to_vec())?)?;
            s
        }
    };
    student.freeze_decoder();
    for name in student.params.names().map(str::to_string).collect::<Vec<_>>() {
        if names::is_encoder(&name) || names::is_gate(&name) {
            student.params.set_trainable(&name, true)?;
        }
    }
    Ok(student)
}

enum PairSource<'a> {
    Corpus(Vec<(WordMatrix, WordMatrix)>),
    Dictionary {
        utterances: Vec<&'a Utterance>,
        source_words: Vec<WordMatrix>,
        dictionary: &'a BilingualDictionary,
    },
}

/// Minimizes `encoder cost + α · gate cost` over the student's encoder and
/// gate for a fixed number of iterations and returns the final student.
pub fn transfer_train(res: &TransferResources, config: &TransferConfig) -> Result<TransferOutcome> {
    config.validate()?;
    let teacher = res.teacher;
    teacher.check_lexicon(res.source)?;
    if res.target.dim() != teacher.hidden() {
        return Err(Error::Shape(format!(
            "target embeddings are {}-d but the teacher has H={}",
            res.target.dim(),
            teacher.hidden()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut student = init_student(teacher, res.target, res.target_language, config.student_init, rng.random())?;

    let samples = gate_samples(
        res.source_dialogs,
        res.source.ontology(),
        res.mapping,
        &teacher.language,
        res.target_language,
    )?;
    let gates = PreparedGates::new(&samples, teacher, res.source, res.target)?;

    let pairs = match config.mode {
        TransferMode::Corpus => {
            let corpus = res
                .parallel
                .ok_or_else(|| Error::InvalidArgument("corpus mode needs a parallel corpus".into()))?;
            PairSource::Corpus(
                corpus
                    .pairs
                    .iter()
                    .map(|(a, b)| (res.source.embed_utterance(a), res.target.embed_utterance(b)))
                    .collect(),
            )
        }
        TransferMode::Dictionary => {
            let dictionary = res
                .dictionary
                .ok_or_else(|| Error::InvalidArgument("dictionary mode needs a bilingual dictionary".into()))?;
            let utterances: Vec<&Utterance> = res
                .source_dialogs
                .iter()
                .flat_map(|d| &d.turns)
                .map(|t| &t.utterance)
                .filter(|u| u.len() <= MAX_UTTERANCE_LEN)
                .collect();
            let source_words = utterances.iter().map(|u| res.source.embed_utterance(u)).collect();
            PairSource::Dictionary {
                utterances,
                source_words,
                dictionary,
            }
        }
    };
    let pool = match &pairs {
        PairSource::Corpus(p) => p.len(),
        PairSource::Dictionary { utterances, .. } => utterances.len(),
    };
    if pool < 2 {
        return Err(Error::InvalidArgument(format!("only {pool} encoder-matching examples available")));
    }
    let batch = config.batch_size.min(pool);

    let mut optimizer = Optimizer::new(OptimizerConfig {
        learning_rate: config.learning_rate,
        method: config.optimizer,
        ..OptimizerConfig::default()
    });
    let mut curve = Curve::new(&["iteration", "encoder_cost", "gate_cost", "test_goal", "test_request"]);
    let (mut enc_sum, mut gate_sum, mut window) = (0.0, 0.0, 0usize);
    let diverged = |iteration: usize| move |e: Error| Error::Diverged {
        iteration,
        message: e.to_string(),
    };

    for it in 1..=config.iterations {
        let picks = index::sample(&mut rng, pool, batch).into_vec();
        let enc = match &pairs {
            PairSource::Corpus(p) => {
                let e: Vec<&WordMatrix> = picks.iter().map(|&i| &p[i].0).collect();
                let f: Vec<&WordMatrix> = picks.iter().map(|&i| &p[i].1).collect();
                encoder_cost(teacher, &e, &student, &f)
            }
            PairSource::Dictionary {
                utterances,
                source_words,
                dictionary,
            } => {
                let e: Vec<&WordMatrix> = picks.iter().map(|&i| &source_words[i]).collect();
                let f = picks
                    .iter()
                    .map(|&i| {
                        let m = code_switch(utterances[i], dictionary, res.source, res.target, config.tau, &mut rng)?;
                        Ok(m.embed(res.source.table(), res.target.table()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                encoder_cost(teacher, &e, &student, &f.iter().collect::<Vec<_>>())
            }
        }
        .map_err(diverged(it))?;
        let mut grads = enc.grads;
        let mut gate_value = 0.0;
        if config.alpha > 0.0 {
            let g = prepared_gate_cost(&gates, &student).map_err(diverged(it))?;
            gate_value = g.cost;
            grads.add_scaled(&g.grads, config.alpha);
        } else if it % config.eval_every == 0 || it == config.iterations {
            gate_value = prepared_gate_cost(&gates, &student).map_err(diverged(it))?.cost;
        }
        grads.check_finite().map_err(diverged(it))?;
        optimizer.step(&mut student.params, &grads).map_err(diverged(it))?;
        if let Some(stats) = &enc.stats {
            student.bn.update(stats);
        }
        enc_sum += enc.cost;
        gate_sum += gate_value;
        window += 1;

        if it % config.eval_every == 0 || it == config.iterations {
            let (goal, request) = match res.eval_dialogs {
                Some(d) => {
                    let m = evaluate_model(&student, res.target, d)?.metrics;
                    (m.goal_accuracy, m.request_accuracy)
                }
                None => (f64::NAN, f64::NAN),
            };
            let enc_mean = enc_sum / window as f64;
            // with α = 0 the gate cost is only measured at curve points
            let gate_mean = if config.alpha > 0.0 { gate_sum / window as f64 } else { gate_value };
            curve.push(vec![it as f64, enc_mean, gate_mean, goal, request])?;
            if goal.is_nan() {
                log::info!("iteration {it}: encoder {enc_mean:.4} gate {gate_mean:.4}");
            } else {
                log::info!("iteration {it}: encoder {enc_mean:.4} gate {gate_mean:.4} goal {goal:.3} request {request:.3}");
            }
            enc_sum = 0.0;
            gate_sum = 0.0;
            window = 0;
        }
    }
    Ok(TransferOutcome { student, curve })
}

/// Left and right sides of the decoder-gap bound
/// `Σ (y_e − y_f)² ≤ 2‖W_y‖² Σ (‖g_e‖²‖r_e − r_f‖² + ‖r_f‖²‖g_e − g_f‖²)`
/// with `y = W_y · (r ⊙ g)`, summed over `(r_e, r_f, g_e, g_f)` tuples.
pub fn decoder_gap_bound(w_y: &[f64], tuples: &[(&[f64], &[f64], &[f64], &[f64])]) -> (f64, f64) {
    let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let score = |r: &[f64], g: &[f64]| -> f64 { w_y.iter().zip(r).zip(g).map(|((w, r), g)| w * r * g).sum() };
    let mut lhs = 0.0;
    let mut inner = 0.0;
    for &(r_e, r_f, g_e, g_f) in tuples {
        let d = score(r_e, g_e) - score(r_f, g_f);
        lhs += d * d;
        let dr: Vec<f64> = r_e.iter().zip(r_f).map(|(a, b)| a - b).collect();
        let dg: Vec<f64> = g_e.iter().zip(g_f).map(|(a, b)| a - b).collect();
        inner += norm2(g_e) * norm2(&dr) + norm2(r_f) * norm2(&dg);
    }
    (lhs, 2.0 * norm2(w_y) * inner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, Ontology};
    use crate::fixtures;

    fn identity_mapping(o: &Ontology) -> OntologyMapping {
        let mut m = OntologyMapping::new();
        for term in o
            .slots()
            .chain(o.informable.values().flatten().map(String::as_str))
            .chain(o.requestable.iter().map(String::as_str))
        {
            m.add(term, "en", term).unwrap();
            m.add(term, "xx", term).unwrap();
        }
        m
    }

    fn parallel(texts: &[&str]) -> ParallelCorpus {
        ParallelCorpus {
            pairs: texts
                .iter()
                .map(|t| (tokenize(t).unwrap(), tokenize(t).unwrap()))
                .collect(),
            filtered: 0,
        }
    }

    struct World {
        src: Lexicon,
        tgt: Lexicon,
        mapping: OntologyMapping,
        dialogs: Vec<Dialog>,
        corpus: ParallelCorpus,
        dictionary: BilingualDictionary,
        teacher: NbtModel,
    }

    fn world(tgt_seed: u64) -> World {
        let src = fixtures::lexicon(6, 1);
        let tgt = fixtures::lexicon(6, tgt_seed);
        let o = src.ontology().clone();
        let mut dictionary = BilingualDictionary::new();
        for w in fixtures::WORDS {
            dictionary.add(*w, [w.to_string()]);
        }
        World {
            mapping: identity_mapping(&o),
            dialogs: fixtures::dialogs(&o),
            corpus: parallel(&["i want thai food please", "what is the phone", "a place in the north", "yes please"]),
            dictionary,
            teacher: fixtures::model(6, 9),
            src,
            tgt,
        }
    }

    fn resources(w: &World) -> TransferResources<'_> {
        TransferResources {
            teacher: &w.teacher,
            source: &w.src,
            target: &w.tgt,
            mapping: &w.mapping,
            target_language: "xx",
            source_dialogs: &w.dialogs,
            parallel: Some(&w.corpus),
            dictionary: Some(&w.dictionary),
            eval_dialogs: Some(&w.dialogs),
        }
    }

    fn config(mode: TransferMode) -> TransferConfig {
        TransferConfig {
            mode,
            batch_size: 3,
            iterations: 20,
            eval_every: 5,
            learning_rate: 1e-2,
            tau: 2.0,
            ..Default::default()
        }
    }

    #[test]
    fn decoder_and_teacher_stay_frozen() {
        let w = world(2);
        let before = w.teacher.params.to_le_bytes();
        for mode in [TransferMode::Corpus, TransferMode::Dictionary] {
            let out = transfer_train(&resources(&w), &config(mode)).unwrap();
            assert_eq!(out.student.w_y(), w.teacher.w_y());
            assert!(!out.student.params.is_trainable(names::DECODER_W_Y));
            assert_ne!(
                out.student.params.data(names::ENCODER_WEIGHTS[0]).unwrap(),
                w.teacher.params.data(names::ENCODER_WEIGHTS[0]).unwrap()
            );
            assert_eq!(out.curve.len(), 4);
            assert_eq!(out.student.language, "xx");
        }
        assert_eq!(w.teacher.params.to_le_bytes(), before);
    }

    #[test]
    fn runs_are_deterministic() {
        let w = world(2);
        for mode in [TransferMode::Corpus, TransferMode::Dictionary] {
            let c = config(mode);
            let a = transfer_train(&resources(&w), &c).unwrap();
            let b = transfer_train(&resources(&w), &c).unwrap();
            assert_eq!(a.student.params.to_le_bytes(), b.student.params.to_le_bytes());
            assert_eq!(a.curve.to_csv().unwrap(), b.curve.to_csv().unwrap());
        }
    }

    #[test]
    fn matching_configuration_is_a_fixed_point() {
        // target = source: every cost is zero from the start
        let w = world(1);
        let c = TransferConfig {
            learning_rate: 0.0,
            tau: 1e-3,
            ..config(TransferMode::Dictionary)
        };
        let out = transfer_train(&resources(&w), &c).unwrap();
        for row in out.curve.rows() {
            assert_eq!(row[1], 0.0);
            assert_eq!(row[2], 0.0);
        }
        for (name, p) in w.teacher.params.iter() {
            assert_eq!(out.student.params.data(name).unwrap(), p.tensor.data(), "{name}");
        }
    }

    #[test]
    fn zero_alpha_leaves_the_gate_alone() {
        let w = world(3);
        let c = TransferConfig {
            alpha: 0.0,
            ..config(TransferMode::Corpus)
        };
        let out = transfer_train(&resources(&w), &c).unwrap();
        for name in [names::GATE_W_CS, names::GATE_B_CS, names::GATE_W_TQ] {
            assert_eq!(out.student.params.data(name).unwrap(), w.teacher.params.data(name).unwrap());
        }
        assert!(out.curve.last("gate_cost").unwrap() > 0.0);
    }

    #[test]
    fn random_init_keeps_the_teacher_decoder() {
        let w = world(2);
        let s = init_student(&w.teacher, &w.tgt, "xx", StudentInit::Random, 4).unwrap();
        assert_eq!(s.w_y(), w.teacher.w_y());
        assert_ne!(
            s.params.data(names::GATE_W_CS).unwrap(),
            w.teacher.params.data(names::GATE_W_CS).unwrap()
        );
    }

    #[test]
    fn missing_resources_and_bad_configs_fail() {
        let w = world(2);
        let mut r = resources(&w);
        r.parallel = None;
        assert!(transfer_train(&r, &config(TransferMode::Corpus)).is_err());
        assert!(TransferConfig { tau: 0.0, ..Default::default() }.validate().is_err());
        assert!(TransferConfig { alpha: -1.0, ..Default::default() }.validate().is_err());
        assert!("x".parse::<TransferMode>().is_err());
        assert_eq!("d".parse::<TransferMode>().unwrap(), TransferMode::Dictionary);
    }

    #[test]
    fn config_json_round_trip() {
        let c = TransferConfig {
            mode: TransferMode::Corpus,
            student_init: StudentInit::Random,
            ..Default::default()
        };
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"mode\":\"c\"") && s.contains("\"student_init\":\"random\""), "{s}");
        assert_eq!(serde_json::from_str::<TransferConfig>(&s).unwrap(), c);
    }

    #[test]
    fn bound_holds_on_hand_values() {
        let w_y = [1.0, -2.0];
        let (lhs, rhs) = decoder_gap_bound(&w_y, &[(&[1.0, 0.0], &[0.0, 1.0], &[0.5, 0.5], &[1.0, 0.0])]);
        // y_e = 0.5, y_f = 0
        assert!((lhs - 0.25).abs() < 1e-15);
        // 2·5·(0.5·2 + 1·0.5)
        assert!((rhs - 15.0).abs() < 1e-12);
    }
}
