//! Supervised training of a tracker from annotated dialogs, one example per
//! turn with the gold previous state as the prior.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{BeliefState, Dialog, Ontology, SystemActs, Utterance, MAX_UTTERANCE_LEN};
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, Curve};
use crate::model::{
    forward_batch, ActVectors, ForwardOutput, Lexicon, ModelConfig, NbtModel, ScoreTable, TurnInput, TurnLabels,
    WordMatrix,
};
use crate::numeric::{Method, Mode, Optimizer, OptimizerConfig};

/// Logit standing in for a gold previous-state decision: `+S` for pairs in
/// the previous state, `-S` otherwise.
pub const PRIOR_LOGIT: f64 = 6.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TurnExample {
    pub acts: SystemActs,
    pub utterance: Utterance,
    pub prev_scores: ScoreTable,
    pub labels: TurnLabels,
}

pub fn labels_for(state: &BeliefState, ontology: &Ontology) -> Result<TurnLabels> {
    let t = ScoreTable::from_state(ontology, state, 1.0)?;
    Ok(TurnLabels {
        informable: t
            .informable
            .iter()
            .map(|s| s.iter().map(|&v| v > 0.0).collect())
            .collect(),
        requests: t.requests.iter().map(|&v| v > 0.0).collect(),
    })
}

/// One example per turn. Turns longer than the encoder limit are dropped.
pub fn make_turn_examples(dialogs: &[Dialog], ontology: &Ontology) -> Result<Vec<TurnExample>> {
    let mut out = Vec::new();
    let mut dropped = 0;
    for d in dialogs {
        let mut prev = BeliefState::default();
        for turn in &d.turns {
            let goals_only = BeliefState {
                goals: prev.goals.clone(),
                requests: Default::default(),
            };
            if turn.utterance.len() <= MAX_UTTERANCE_LEN {
                out.push(TurnExample {
                    acts: turn.system_acts.clone(),
                    utterance: turn.utterance.clone(),
                    prev_scores: ScoreTable::from_state(ontology, &goals_only, PRIOR_LOGIT)?,
                    labels: labels_for(&turn.gold, ontology)?,
                });
            } else {
                dropped += 1;
            }
            prev = turn.gold.clone();
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} turns longer than {MAX_UTTERANCE_LEN} tokens");
    }
    Ok(out)
}

/// A [`TurnExample`] with its words and acts already embedded.
#[derive(Debug, Clone)]
pub struct PreparedExample {
    pub words: WordMatrix,
    pub acts: ActVectors,
    pub prior: ScoreTable,
    pub labels: TurnLabels,
}

pub fn prepare(examples: &[TurnExample], lexicon: &Lexicon) -> Result<Vec<PreparedExample>> {
    examples
        .iter()
        .map(|e| {
            Ok(PreparedExample {
                words: lexicon.embed_utterance(&e.utterance),
                acts: lexicon.embed_acts(&e.acts)?,
                prior: e.prev_scores.clone(),
                labels: e.labels.clone(),
            })
        })
        .collect()
}

/// Mean cross-entropy of a batch with gradients.
pub fn batch_loss<R: Rng>(
    model: &NbtModel,
    lexicon: &Lexicon,
    batch: &[&PreparedExample],
    mode: Mode,
    rng: Option<&mut R>,
) -> Result<ForwardOutput> {
    let inputs: Vec<TurnInput> = batch
        .iter()
        .map(|e| TurnInput {
            words: &e.words,
            acts: &e.acts,
            prior: &e.prior,
        })
        .collect();
    let labels: Vec<&TurnLabels> = batch.iter().map(|e| &e.labels).collect();
    forward_batch(model, lexicon, &inputs, Some(&labels), mode, rng)
}

/// Loss of a single example, scored in infer mode without dropout.
pub fn turn_loss(example: &TurnExample, model: &NbtModel, lexicon: &Lexicon) -> Result<f64> {
    let prepared = prepare(std::slice::from_ref(example), lexicon)?;
    let out = batch_loss::<ChaCha8Rng>(model, lexicon, &[&prepared[0]], Mode::Infer, None)?;
    Ok(out.loss.expect("labels given"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    /// Share of training dialogs held out when no validation set is given.
    pub validation_fraction: f64,
    pub optimizer: Method,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            patience: 5,
            validation_fraction: 0.2,
            optimizer: Method::Adam,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size < 2 || self.patience == 0 {
            return Err(Error::InvalidArgument(
                "epochs and patience must be positive and batch size at least 2".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.learning_rate * self.weight_decay < 1.0) {
            return Err(Error::InvalidArgument(
                "weight decay must be non-negative and below 1/learning rate".into(),
            ));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidArgument("validation fraction must be in (0,1)".into()));
        }
        Ok(())
    }
}

/// Splits `0..n` into shuffled batches, folding a trailing singleton into
/// the previous batch so train-mode normalization always sees two items.
pub(crate) fn batches(n: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut out: Vec<Vec<usize>> = order.chunks(size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().extend(last);
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: NbtModel,
    /// Columns: iteration, train_loss, valid_goal, valid_request.
    pub curve: Curve,
    pub best_valid_goal: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// Trains a tracker and keeps the parameters with the best validation goal
/// accuracy.
pub fn train_teacher(
    train: &[Dialog],
    valid: Option<&[Dialog]>,
    lexicon: &Lexicon,
    model_config: ModelConfig,
    config: &TrainConfig,
    language: &str,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (train, valid): (Vec<Dialog>, Vec<Dialog>) = match valid {
        Some(v) => (train.to_vec(), v.to_vec()),
        None => {
            let mut all = train.to_vec();
            all.shuffle(&mut rng);
            let k = ((all.len() as f64) * config.validation_fraction).round().max(1.0) as usize;
            if k >= all.len() {
                return Err(Error::InvalidArgument("too few dialogs to hold out a validation set".into()));
            }
            let v = all.split_off(all.len() - k);
            (all, v)
        }
    };
    if valid.is_empty() {
        return Err(Error::InvalidArgument("validation set is empty".into()));
    }
    let ontology = lexicon.ontology();
    let examples = prepare(&make_turn_examples(&train, ontology)?, lexicon)?;
    if examples.len() < 2 {
        return Err(Error::InvalidArgument("need at least two training turns".into()));
    }
    let mut model = NbtModel::init(model_config, language, &ontology.fingerprint(), rng.random())?;
    let opt_config = OptimizerConfig {
        learning_rate: config.learning_rate,
        method: config.optimizer,
        weight_decay: config.weight_decay,
        ..OptimizerConfig::default()
    };
    let mut optimizer = Optimizer::new(opt_config);
    let mut curve = Curve::new(&["iteration", "train_loss", "valid_goal", "valid_request"]);
    let mut best = (f64::NEG_INFINITY, model.clone());
    let mut since_best = 0;
    let mut epochs_run = 0;
    let mut stopped_early = false;
    let mut iteration = 0usize;

    for epoch in 0..config.epochs {
        epochs_run = epoch + 1;
        let mut total = 0.0;
        let mut count = 0usize;
        for batch in batches(examples.len(), config.batch_size, &mut rng) {
            let refs: Vec<&PreparedExample> = batch.iter().map(|&i| &examples[i]).collect();
            let out = batch_loss(&model, lexicon, &refs, Mode::Train, Some(&mut rng)).map_err(|e| {
                Error::Diverged {
                    iteration,
                    message: e.to_string(),
                }
            })?;
            let loss = out.loss.expect("labels given");
            let grads = out.grads.expect("labels given");
            optimizer.step(&mut model.params, &grads).map_err(|e| Error::Diverged {
                iteration,
                message: e.to_string(),
            })?;
            if let Some(stats) = &out.stats {
                model.bn.update(stats);
            }
            total += loss * refs.len() as f64;
            count += refs.len();
            iteration += 1;
        }
        let eval = evaluate_model(&model, lexicon, &valid)?;
        let train_loss = total / count as f64;
        curve.push(vec![
            iteration as f64,
            train_loss,
            eval.metrics.goal_accuracy,
            eval.metrics.request_accuracy,
        ])?;
        log::info!(
            "epoch {epochs_run}: loss {train_loss:.4} valid goal {:.3} request {:.3}",
            eval.metrics.goal_accuracy,
            eval.metrics.request_accuracy
        );
        if eval.metrics.goal_accuracy > best.0 {
            best = (eval.metrics.goal_accuracy, model.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                stopped_early = epochs_run < config.epochs;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best.1,
        curve,
        best_valid_goal: best.0,
        epochs_run,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, DialogTurn};
    use crate::numeric::grad_check;
    use crate::fixtures;

    fn turn(text: &str, goals: &[(&str, &str)], requests: &[&str], acts: SystemActs) -> DialogTurn {
        DialogTurn {
            system_acts: acts,
            system_text: String::new(),
            transcript: text.to_string(),
            utterance: tokenize(text).unwrap(),
            gold: BeliefState {
                goals: goals.iter().map(|(s, v)| (s.to_string(), v.to_string())).collect(),
                requests: requests.iter().map(|r| r.to_string()).collect(),
            },
        }
    }

    fn two_turn_dialog() -> Dialog {
        Dialog {
            id: 1,
            turns: vec![
                turn("i want thai food", &[("food", "thai")], &[], SystemActs::none()),
                turn(
                    "in the north please what is the phone",
                    &[("food", "thai"), ("area", "north")],
                    &["phone"],
                    SystemActs {
                        request: Some("area".into()),
                        confirm: None,
                    },
                ),
            ],
        }
    }

    #[test]
    fn examples_follow_gold_history() {
        let o = fixtures::ontology();
        let ex = make_turn_examples(&[two_turn_dialog()], &o).unwrap();
        assert_eq!(ex.len(), 2);
        assert!(ex[0].prev_scores.informable.iter().flatten().all(|&s| s == -PRIOR_LOGIT));
        assert!(ex[0].prev_scores.requests.iter().all(|&s| s == -PRIOR_LOGIT));
        let p = &ex[1].prev_scores;
        for (si, (slot, values)) in o.informable.iter().enumerate() {
            for (vi, value) in values.iter().enumerate() {
                let expected = if slot == "food" && value == "thai" { PRIOR_LOGIT } else { -PRIOR_LOGIT };
                assert_eq!(p.informable[si][vi], expected);
            }
        }
        assert_eq!(ex[1].labels.requests, vec![true, false]);
        assert_eq!(ex[0].labels.requests, vec![false, false]);
        assert_eq!(ex[1].labels.informable[1], vec![true, false, false]);
    }

    #[test]
    fn turn_loss_gradient_check() {
        let lex = fixtures::lexicon(8, 4);
        let o = lex.ontology().clone();
        let examples = prepare(&make_turn_examples(&fixtures::dialogs(&o), &o).unwrap(), &lex).unwrap();
        let refs: Vec<&PreparedExample> = examples.iter().collect();
        let words: Vec<&WordMatrix> = examples.iter().map(|e| &e.words).collect();
        for seed in 0..5 {
            let model = fixtures::smooth_model(8, 1000 * seed, &words, 2e-3);
            let report = grad_check(
                |p| {
                    let mut m = model.clone();
                    m.params = p.clone();
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let out = batch_loss(&m, &lex, &refs, Mode::Train, Some(&mut rng))?;
                    Ok((out.loss.unwrap(), out.grads.unwrap()))
                },
                &model.params,
                1e-4,
            )
            .unwrap();
            assert!(report.max_relative_error < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn single_turn_loss_is_finite() {
        let lex = fixtures::lexicon(6, 1);
        let model = fixtures::model(6, 1);
        let ex = make_turn_examples(&[two_turn_dialog()], lex.ontology()).unwrap();
        let l = turn_loss(&ex[0], &model, &lex).unwrap();
        assert!(l.is_finite() && l > 0.0);
    }

    #[test]
    fn batching_never_leaves_a_singleton() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for n in 2..40 {
            for size in 2..7 {
                let b = batches(n, size, &mut rng);
                assert!(b.iter().all(|b| b.len() >= 2));
                let mut all: Vec<usize> = b.concat();
                all.sort();
                assert_eq!(all, (0..n).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { batch_size: 1, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { validation_fraction: 1.0, ..Default::default() }.validate().is_err());
    }
}
