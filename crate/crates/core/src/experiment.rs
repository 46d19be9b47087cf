//! End-to-end runs: train a source teacher, then score any comparison system
//! on target-language test dialogs.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::baselines::{ontology_match_track, word_by_word_translate, RequestSynonyms};
use crate::corpus::{BilingualDictionary, Dialog, EmbeddingTable, Ontology, OntologyMapping, ParallelCorpus};
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, evaluate_predictions, Curve, Evaluation};
use crate::model::{Lexicon, ModelConfig, NbtModel};
use crate::synth::{Splits, ToyTask};
use crate::train::{train_teacher, TrainConfig};
use crate::transfer::{transfer_train, TransferConfig, TransferMode, TransferResources};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum System {
    #[serde(rename = "ontology-match")]
    OntologyMatch,
    #[serde(rename = "wbw")]
    WordByWord,
    #[serde(rename = "no-transfer")]
    NoTransfer,
    #[serde(rename = "xlnbt-c")]
    XlnbtC,
    #[serde(rename = "xlnbt-d")]
    XlnbtD,
    #[serde(rename = "supervised")]
    Supervised,
}

impl System {
    pub const ALL: [System; 6] = [
        System::OntologyMatch,
        System::WordByWord,
        System::NoTransfer,
        System::XlnbtC,
        System::XlnbtD,
        System::Supervised,
    ];

    pub fn name(self) -> &'static str {
        match self {
            System::OntologyMatch => "ontology-match",
            System::WordByWord => "wbw",
            System::NoTransfer => "no-transfer",
            System::XlnbtC => "xlnbt-c",
            System::XlnbtD => "xlnbt-d",
            System::Supervised => "supervised",
        }
    }

    /// Whether the system needs a source-trained teacher.
    pub fn needs_teacher(self) -> bool {
        matches!(self, System::NoTransfer | System::XlnbtC | System::XlnbtD)
    }
}

impl std::fmt::Display for System {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        System::ALL
            .into_iter()
            .find(|sys| sys.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = System::ALL.iter().map(|s| s.name()).collect();
                Error::InvalidArgument(format!("unknown system `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// Which target embeddings a toy pipeline uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Target vectors near their translations' source vectors.
    Bilingual,
    /// Independent target vectors.
    Monolingual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub transfer: TransferConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            transfer: TransferConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Settings for the synthetic benchmark at embedding width `dim`.
    pub fn toy(dim: usize) -> Self {
        ExperimentConfig {
            model: ModelConfig {
                hidden: dim,
                dropout: 0.0,
                ..ModelConfig::default()
            },
            train: TrainConfig {
                epochs: 300,
                batch_size: 64,
                learning_rate: 1e-2,
                patience: 100,
                ..TrainConfig::default()
            },
            transfer: TransferConfig {
                iterations: 600,
                batch_size: 32,
                learning_rate: 5e-3,
                eval_every: 100,
                ..TransferConfig::default()
            },
        }
    }

    /// The same settings with every random seed set from `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self.transfer.seed = seed;
        self
    }
}

/// Everything needed to run any system for one language pair.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub source_language: String,
    pub target_language: String,
    pub source: Lexicon,
    pub target: Lexicon,
    pub mapping: OntologyMapping,
    pub dictionary: Option<BilingualDictionary>,
    pub parallel: Option<ParallelCorpus>,
    pub source_dialogs: Splits,
    /// Target dialogs; only `test` is needed unless the supervised system
    /// is run.
    pub target_dialogs: Splits,
    pub request_synonyms: RequestSynonyms,
}

/// One system's result on the target test set.
#[derive(Debug, Clone)]
pub struct SystemRun {
    pub system: System,
    pub evaluation: Evaluation,
    /// The tracker that produced the predictions, if any.
    pub model: Option<NbtModel>,
    pub curve: Option<Curve>,
}

impl Pipeline {
    pub fn from_toy(task: &ToyTask, regime: Regime) -> Result<Self> {
        let target_table = match regime {
            Regime::Bilingual => &task.target_bilingual,
            Regime::Monolingual => &task.target_monolingual,
        };
        Ok(Pipeline {
            source_language: task.config.source_language.clone(),
            target_language: task.config.target_language.clone(),
            source: Lexicon::new(Arc::new(task.source_embeddings.clone()), task.source_ontology.clone())?,
            target: Lexicon::new(Arc::new(target_table.clone()), task.target_ontology.clone())?,
            mapping: task.mapping.clone(),
            dictionary: Some(task.dictionary.clone()),
            parallel: Some(task.parallel.clone()),
            source_dialogs: task.source.clone(),
            target_dialogs: task.target.clone(),
            request_synonyms: RequestSynonyms::new(),
        })
    }

    /// The target ontology as the mapping realizes the source ontology.
    pub fn mapped_ontology(
        source: &Ontology,
        mapping: &OntologyMapping,
        from: &str,
        to: &str,
    ) -> Result<Ontology> {
        mapping.map_ontology(source, from, to)
    }

    /// Trains a tracker on the source training dialogs.
    pub fn train_source_teacher(&self, config: &ExperimentConfig) -> Result<NbtModel> {
        let out = train_teacher(
            &self.source_dialogs.train,
            non_empty(&self.source_dialogs.valid),
            &self.source,
            config.model,
            &config.train,
            &self.source_language,
        )?;
        Ok(out.model)
    }

    /// Scores `model` on source test dialogs.
    pub fn source_test(&self, model: &NbtModel) -> Result<Evaluation> {
        evaluate_model(model, &self.source, &self.source_dialogs.test)
    }

    /// Runs `system` and scores it on the target test dialogs. Systems that
    /// need a teacher use `teacher`.
    pub fn run(&self, system: System, teacher: Option<&NbtModel>, config: &ExperimentConfig) -> Result<SystemRun> {
        let test = &self.target_dialogs.test;
        let teacher_or_err = || {
            teacher.ok_or_else(|| Error::InvalidArgument(format!("system {system} needs a trained teacher")))
        };
        let mut model = None;
        let mut curve = None;
        let evaluation = match system {
            System::OntologyMatch => {
                let o = self.target.ontology();
                let preds = test
                    .iter()
                    .map(|d| ontology_match_track(d, o, &self.request_synonyms))
                    .collect();
                evaluate_predictions(test, preds)?
            }
            System::NoTransfer => evaluate_model(teacher_or_err()?, &self.target, test)?,
            System::XlnbtC | System::XlnbtD => {
                let mode = if system == System::XlnbtC {
                    TransferMode::Corpus
                } else {
                    TransferMode::Dictionary
                };
                let t = TransferConfig {
                    mode,
                    ..config.transfer
                };
                let res = TransferResources {
                    teacher: teacher_or_err()?,
                    source: &self.source,
                    target: &self.target,
                    mapping: &self.mapping,
                    target_language: &self.target_language,
                    source_dialogs: &self.source_dialogs.train,
                    parallel: self.parallel.as_ref(),
                    dictionary: self.dictionary.as_ref(),
                    eval_dialogs: None,
                };
                let out = transfer_train(&res, &t)?;
                let e = evaluate_model(&out.student, &self.target, test)?;
                model = Some(out.student);
                curve = Some(out.curve);
                e
            }
            System::WordByWord => {
                let dictionary = self
                    .dictionary
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("word-by-word needs a bilingual dictionary".into()))?;
                let translate = |d: &[Dialog]| {
                    word_by_word_translate(
                        d,
                        dictionary,
                        self.source.table(),
                        self.target.table(),
                        &self.mapping,
                        &self.source_language,
                        &self.target_language,
                    )
                };
                let train = translate(&self.source_dialogs.train)?;
                let valid = translate(&self.source_dialogs.valid)?;
                let out = train_teacher(
                    &train,
                    non_empty(&valid),
                    &self.target,
                    config.model,
                    &config.train,
                    &self.target_language,
                )?;
                let e = evaluate_model(&out.model, &self.target, test)?;
                model = Some(out.model);
                curve = Some(out.curve);
                e
            }
            System::Supervised => {
                let out = train_teacher(
                    &self.target_dialogs.train,
                    non_empty(&self.target_dialogs.valid),
                    &self.target,
                    config.model,
                    &config.train,
                    &self.target_language,
                )?;
                let e = evaluate_model(&out.model, &self.target, test)?;
                model = Some(out.model);
                curve = Some(out.curve);
                e
            }
        };
        Ok(SystemRun {
            system,
            evaluation,
            model,
            curve,
        })
    }
}

fn non_empty(d: &[Dialog]) -> Option<&[Dialog]> {
    (!d.is_empty()).then_some(d)
}

/// Shares an embedding table between lexicons without copying.
pub fn shared(table: EmbeddingTable) -> Arc<EmbeddingTable> {
    Arc::new(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_toy_task, SynthConfig};

    #[test]
    fn system_names_round_trip() {
        for s in System::ALL {
            assert_eq!(s.name().parse::<System>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
        assert!("translate".parse::<System>().is_err());
    }

    #[test]
    fn every_system_runs_on_a_tiny_task() {
        let task = generate_toy_task(&SynthConfig {
            train_dialogs: 12,
            valid_dialogs: 4,
            test_dialogs: 4,
            parallel_pairs: 20,
            dim: 8,
            ..Default::default()
        })
        .unwrap();
        let p = Pipeline::from_toy(&task, Regime::Bilingual).unwrap();
        let mut c = ExperimentConfig::toy(8);
        c.train.epochs = 2;
        c.transfer.iterations = 5;
        c.transfer.eval_every = 5;
        let teacher = p.train_source_teacher(&c).unwrap();
        for s in System::ALL {
            let run = p.run(s, Some(&teacher), &c).unwrap();
            let m = run.evaluation.metrics;
            assert!((0.0..=1.0).contains(&m.goal_accuracy), "{s}");
            assert_eq!(run.model.is_some(), s != System::OntologyMatch && s != System::NoTransfer);
        }
        assert!(p.run(System::NoTransfer, None, &c).is_err());
    }
}
