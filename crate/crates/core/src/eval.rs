//! Rollout tracking, goal/request accuracy, error taxonomy and curve export.

use std::collections::BTreeSet;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{BeliefState, Dialog, SystemActs, Utterance};
use crate::error::{Error, Result};
use crate::model::{forward_batch, predict_state, Lexicon, NbtModel, ScoreTable, TurnInput};
use crate::numeric::Mode;
use crate::train::PRIOR_LOGIT;

/// Turn-by-turn tracker that feeds its own previous predictions back into
/// the score recursion.
pub struct Tracker<'a> {
    model: &'a NbtModel,
    lexicon: &'a Lexicon,
    prior: ScoreTable,
}

impl<'a> Tracker<'a> {
    pub fn new(model: &'a NbtModel, lexicon: &'a Lexicon) -> Result<Self> {
        if lexicon.dim() != model.hidden() {
            return Err(Error::Shape(format!(
                "embeddings are {}-d but the model has H={}",
                lexicon.dim(),
                model.hidden()
            )));
        }
        Ok(Tracker {
            model,
            lexicon,
            prior: ScoreTable::constant(lexicon.ontology(), -PRIOR_LOGIT),
        })
    }

    pub fn reset(&mut self) {
        self.prior = ScoreTable::constant(self.lexicon.ontology(), -PRIOR_LOGIT);
    }

    /// Scores the next turn will see as its history.
    pub fn prior(&self) -> &ScoreTable {
        &self.prior
    }

    /// Resumes from a history saved with [`Tracker::prior`].
    pub fn set_prior(&mut self, prior: ScoreTable) -> Result<()> {
        if !prior.matches(self.lexicon.ontology()) {
            return Err(Error::Shape("prior does not fit this ontology".into()));
        }
        self.prior = prior;
        Ok(())
    }

    pub fn step(&mut self, acts: &SystemActs, utterance: &Utterance) -> Result<(BeliefState, ScoreTable)> {
        let words = self.lexicon.embed_utterance(utterance);
        let acts = self.lexicon.embed_acts(acts)?;
        let input = [TurnInput {
            words: &words,
            acts: &acts,
            prior: &self.prior,
        }];
        let out = forward_batch::<ChaCha8Rng>(self.model, self.lexicon, &input, None, Mode::Infer, None)?;
        let scores = out.scores.into_iter().next().expect("one turn");
        let c = &self.model.config;
        let state = predict_state(&scores, self.lexicon.ontology(), c.theta_inf, c.theta_req);
        // The next turn sees the predicted goals encoded exactly as gold
        // history is during training.
        let goals = BeliefState {
            goals: state.goals.clone(),
            requests: Default::default(),
        };
        self.prior = ScoreTable::from_state(self.lexicon.ontology(), &goals, PRIOR_LOGIT)?;
        Ok((state, scores))
    }
}

/// Predicted state after every turn of `dialog`.
pub fn track_dialog(model: &NbtModel, lexicon: &Lexicon, dialog: &Dialog) -> Result<Vec<BeliefState>> {
    let mut tracker = Tracker::new(model, lexicon)?;
    dialog
        .turns
        .iter()
        .map(|t| tracker.step(&t.system_acts, &t.utterance).map(|(s, _)| s))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub goal_accuracy: f64,
    pub request_accuracy: f64,
    pub turns: usize,
}

/// Joint goal accuracy and exact-set request accuracy over aligned turns.
pub fn compute_metrics(predicted: &[BeliefState], gold: &[BeliefState]) -> Result<Metrics> {
    if predicted.len() != gold.len() {
        return Err(Error::Shape(format!(
            "{} predicted turns for {} gold turns",
            predicted.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::InvalidArgument("no turns to score".into()));
    }
    let n = gold.len() as f64;
    let goals = predicted.iter().zip(gold).filter(|(p, g)| p.goals == g.goals).count();
    let requests = predicted
        .iter()
        .zip(gold)
        .filter(|(p, g)| p.requests == g.requests)
        .count();
    Ok(Metrics {
        goal_accuracy: goals as f64 / n,
        request_accuracy: requests as f64 / n,
        turns: gold.len(),
    })
}

/// Per-decision request accuracy: each (turn, requestable slot) counts once.
pub fn request_micro_accuracy(predicted: &[BeliefState], gold: &[BeliefState], requestable: &[String]) -> Result<f64> {
    if predicted.len() != gold.len() {
        return Err(Error::Shape("predicted and gold turn counts differ".into()));
    }
    let total = gold.len() * requestable.len();
    if total == 0 {
        return Err(Error::InvalidArgument("no request decisions to score".into()));
    }
    let right: usize = predicted
        .iter()
        .zip(gold)
        .map(|(p, g)| {
            requestable
                .iter()
                .filter(|r| p.requests.contains(*r) == g.requests.contains(*r))
                .count()
        })
        .sum();
    Ok(right as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub modify_failure: usize,
    pub maintain_failure: usize,
    pub history_failure: usize,
}

impl ErrorCounts {
    pub fn total(&self) -> usize {
        self.modify_failure + self.maintain_failure + self.history_failure
    }

    pub fn add(&mut self, other: &ErrorCounts) {
        self.modify_failure += other.modify_failure;
        self.maintain_failure += other.maintain_failure;
        self.history_failure += other.history_failure;
    }
}

/// Labels every wrong (turn, slot) goal of one dialog.
///
/// If gold changed at this turn it is a modify failure. Otherwise, if the
/// previous prediction was already wrong on the slot it is a history
/// failure, else a maintain failure. Before the first turn both gold and
/// prediction are empty.
pub fn classify_errors(predicted: &[BeliefState], gold: &[BeliefState]) -> Result<ErrorCounts> {
    if predicted.len() != gold.len() {
        return Err(Error::Shape("predicted and gold turn counts differ".into()));
    }
    let slots: BTreeSet<&str> = predicted
        .iter()
        .chain(gold)
        .flat_map(|s| s.goals.keys().map(String::as_str))
        .collect();
    let empty = BeliefState::default();
    let mut counts = ErrorCounts::default();
    for t in 0..gold.len() {
        let (prev_gold, prev_pred) = if t == 0 {
            (&empty, &empty)
        } else {
            (&gold[t - 1], &predicted[t - 1])
        };
        for &slot in &slots {
            if predicted[t].goal(slot) == gold[t].goal(slot) {
                continue;
            }
            if gold[t].goal(slot) != prev_gold.goal(slot) {
                counts.modify_failure += 1;
            } else if prev_pred.goal(slot) != prev_gold.goal(slot) {
                counts.history_failure += 1;
            } else {
                counts.maintain_failure += 1;
            }
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub errors: ErrorCounts,
    pub predictions: Vec<Vec<BeliefState>>,
}

pub fn evaluate_predictions(dialogs: &[Dialog], predictions: Vec<Vec<BeliefState>>) -> Result<Evaluation> {
    if dialogs.len() != predictions.len() {
        return Err(Error::Shape("one prediction sequence per dialog is required".into()));
    }
    let mut flat_pred = Vec::new();
    let mut flat_gold = Vec::new();
    let mut errors = ErrorCounts::default();
    for (d, p) in dialogs.iter().zip(&predictions) {
        let gold: Vec<BeliefState> = d.turns.iter().map(|t| t.gold.clone()).collect();
        errors.add(&classify_errors(p, &gold)?);
        flat_pred.extend(p.iter().cloned());
        flat_gold.extend(gold);
    }
    Ok(Evaluation {
        metrics: compute_metrics(&flat_pred, &flat_gold)?,
        errors,
        predictions,
    })
}

pub fn evaluate_model(model: &NbtModel, lexicon: &Lexicon, dialogs: &[Dialog]) -> Result<Evaluation> {
    let predictions = dialogs
        .iter()
        .map(|d| track_dialog(model, lexicon, d))
        .collect::<Result<Vec<_>>>()?;
    evaluate_predictions(dialogs, predictions)
}

/// A learning curve: named columns, one row per recorded iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Curve {
    pub fn new(columns: &[&str]) -> Self {
        Curve {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Shape(format!(
                "curve row of {} values for {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Column values of the last row.
    pub fn last(&self, column: &str) -> Option<f64> {
        let i = self.columns.iter().position(|c| c == column)?;
        self.rows.last().map(|r| r[i])
    }

    pub fn to_csv(&self) -> Result<String> {
        if self.rows.is_empty() {
            return Err(Error::InvalidArgument("curve has no rows".into()));
        }
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = self
                .columns
                .iter()
                .zip(row)
                .map(|(c, v)| {
                    if c == "iteration" || c == "epoch" {
                        format!("{}", *v as u64)
                    } else if v.is_nan() {
                        String::new()
                    } else {
                        format!("{v}")
                    }
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        Ok(out)
    }
}

pub fn export_curve(curve: &Curve, path: &Path) -> Result<()> {
    let text = curve.to_csv()?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Metrics averaged over independent runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub system: String,
    pub language: String,
    pub seed_count: usize,
    pub goal_mean: f64,
    pub request_mean: f64,
    pub goal_per_seed: Vec<f64>,
    pub request_per_seed: Vec<f64>,
    pub error_counts: ErrorCounts,
}

impl MetricsReport {
    pub fn from_runs(system: &str, language: &str, runs: &[Evaluation]) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::InvalidArgument("no runs to report".into()));
        }
        let goal_per_seed: Vec<f64> = runs.iter().map(|r| r.metrics.goal_accuracy).collect();
        let request_per_seed: Vec<f64> = runs.iter().map(|r| r.metrics.request_accuracy).collect();
        let mut error_counts = ErrorCounts::default();
        for r in runs {
            error_counts.add(&r.errors);
        }
        let n = runs.len() as f64;
        Ok(MetricsReport {
            system: system.to_string(),
            language: language.to_string(),
            seed_count: runs.len(),
            goal_mean: goal_per_seed.iter().sum::<f64>() / n,
            request_mean: request_per_seed.iter().sum::<f64>() / n,
            goal_per_seed,
            request_per_seed,
            error_counts,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
