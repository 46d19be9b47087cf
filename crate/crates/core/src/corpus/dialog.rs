use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{read_text, tokenize, Ontology, Utterance};

/// Stand-in token for turns whose transcript is empty.
pub const SILENCE_TOKEN: &str = "<silence>";

/// System acts of one turn: an optional request `t_q` and an optional
/// confirmation pair `(t_s, t_v)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct SystemActs {
    pub request: Option<String>,
    pub confirm: Option<(String, String)>,
}

impl SystemActs {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.request.is_none() && self.confirm.is_none()
    }
}

/// Goal constraints (slot to value; unassigned slots are absent) and the set
/// of active requests.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BeliefState {
    pub goals: BTreeMap<String, String>,
    pub requests: BTreeSet<String>,
}

impl BeliefState {
    pub fn goal(&self, slot: &str) -> Option<&str> {
        self.goals.get(slot).map(String::as_str)
    }

    pub fn goals_equal(&self, other: &BeliefState) -> bool {
        self.goals == other.goals
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialogTurn {
    pub system_acts: SystemActs,
    pub system_text: String,
    pub transcript: String,
    pub utterance: Utterance,
    /// Cumulative goals plus this turn's requests.
    pub gold: BeliefState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dialog {
    pub id: i64,
    pub turns: Vec<DialogTurn>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawActs {
    request: Option<String>,
    confirm_slot: Option<String>,
    confirm_value: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawTurn {
    system_acts: RawActs,
    system_text: String,
    transcript: String,
    belief_state: IndexMap<String, String>,
    requests: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawDialog {
    dialogue_idx: i64,
    turns: Vec<RawTurn>,
}

/// Tokenized transcript; an empty one becomes [`SILENCE_TOKEN`].
pub fn utterance_of(transcript: &str) -> Result<Utterance> {
    match tokenize(transcript) {
        Ok(u) => Ok(u),
        Err(Error::EmptyUtterance) => Utterance::new(vec![SILENCE_TOKEN.to_string()]),
        Err(e) => Err(e),
    }
}

fn convert(raw: RawDialog, ontology: &Ontology) -> Result<Dialog> {
    let id = raw.dialogue_idx;
    let mut turns = Vec::with_capacity(raw.turns.len());
    for (t, rt) in raw.turns.into_iter().enumerate() {
        let ctx = |msg: String| Error::Ontology(format!("dialog {id} turn {t}: {msg}"));
        let acts = SystemActs {
            request: rt.system_acts.request,
            confirm: match (rt.system_acts.confirm_slot, rt.system_acts.confirm_value) {
                (Some(s), Some(v)) => Some((s, v)),
                (None, None) => None,
                _ => return Err(ctx("confirm_slot and confirm_value must appear together".into())),
            },
        };
        if let Some(q) = &acts.request {
            if ontology.slot_index(q).is_none() && ontology.request_index(q).is_none() {
                return Err(ctx(format!("system request names unknown slot `{q}`")));
            }
        }
        if let Some((s, v)) = &acts.confirm {
            if ontology.value_index(s, v).is_none() {
                return Err(ctx(format!("system confirms unknown pair {s}={v}")));
            }
        }
        let mut gold = BeliefState::default();
        for (slot, value) in rt.belief_state {
            if ontology.slot_index(&slot).is_none() {
                return Err(ctx(format!("unknown slot `{slot}`")));
            }
            if ontology.value_index(&slot, &value).is_none() {
                return Err(ctx(format!("value `{value}` not in ontology for slot `{slot}`")));
            }
            gold.goals.insert(slot, value);
        }
        for r in rt.requests {
            if ontology.request_index(&r).is_none() {
                return Err(ctx(format!("unknown requestable slot `{r}`")));
            }
            gold.requests.insert(r);
        }
        turns.push(DialogTurn {
            system_acts: acts,
            system_text: rt.system_text,
            utterance: utterance_of(&rt.transcript)?,
            transcript: rt.transcript,
            gold,
        });
    }
    Ok(Dialog { id, turns })
}

pub fn parse_dialogs(text: &str, ontology: &Ontology, origin: &Path) -> Result<Vec<Dialog>> {
    let raw: Vec<RawDialog> =
        serde_json::from_str(text).map_err(|e| Error::format(origin, format!("dialog JSON: {e}")))?;
    raw.into_iter().map(|d| convert(d, ontology)).collect()
}

pub fn load_dialogs(path: &Path, ontology: &Ontology) -> Result<Vec<Dialog>> {
    parse_dialogs(&read_text(path)?, ontology, path)
}

/// Serializes to the dialog JSON schema; goals are written in ontology slot
/// order.
pub fn dialogs_to_json(dialogs: &[Dialog], ontology: &Ontology) -> String {
    let raw: Vec<RawDialog> = dialogs
        .iter()
        .map(|d| RawDialog {
            dialogue_idx: d.id,
            turns: d
                .turns
                .iter()
                .map(|t| RawTurn {
                    system_acts: RawActs {
                        request: t.system_acts.request.clone(),
                        confirm_slot: t.system_acts.confirm.as_ref().map(|c| c.0.clone()),
                        confirm_value: t.system_acts.confirm.as_ref().map(|c| c.1.clone()),
                    },
                    system_text: t.system_text.clone(),
                    transcript: t.transcript.clone(),
                    belief_state: ontology
                        .slots()
                        .filter_map(|s| t.gold.goal(s).map(|v| (s.to_string(), v.to_string())))
                        .collect(),
                    requests: ontology
                        .requestable
                        .iter()
                        .filter(|r| t.gold.requests.contains(*r))
                        .cloned()
                        .collect(),
                })
                .collect(),
        })
        .collect();
    serde_json::to_string_pretty(&raw).expect("dialogs serialize")
}

pub fn save_dialogs(path: &Path, dialogs: &[Dialog], ontology: &Ontology) -> Result<()> {
    std::fs::write(path, dialogs_to_json(dialogs, ontology)).map_err(|e| Error::io(path, e))
}
