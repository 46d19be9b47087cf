//! Command-line front end: `gen`, `train`, `transfer`, `eval` and `track`.
//!
//! Settings come from built-in defaults, then an optional JSON file of flat
//! dotted keys (`{"train.epochs": 20, "transfer.tau": 1.0}`), then flags.
//! Every subcommand writes a `settings.json` in the same dotted form, so a
//! run can be repeated with `--config <out>/settings.json`.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::baselines::{ontology_match_track, word_by_word_translate, OntologyMatcher, RequestSynonyms};
use crate::corpus::{
    load_dialogs, load_dictionary, load_embeddings, load_mapping, load_ontology, load_parallel, utterance_of,
    BeliefState, Dialog, EmbeddingTable, Ontology, OntologyMapping, SystemActs,
};
use crate::error::Error;
use crate::eval::{evaluate_model, evaluate_predictions, export_curve, Evaluation, MetricsReport, Tracker};
use crate::experiment::{ExperimentConfig, Pipeline, Regime, System};
use crate::model::{Lexicon, ModelConfig, NbtModel};
use crate::synth::{generate_toy_task, SynthConfig, ToyTask};
use crate::train::{train_teacher, TrainConfig};
use crate::transfer::{transfer_train, TransferConfig, TransferMode, TransferResources};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, missing inputs or an invalid config file.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_FAILURE,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "xlnbt", version, about = "Cross-lingual neural belief tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic bilingual task and its manifest.
    Gen(GenArgs),
    /// Train a tracker on annotated dialogs.
    Train(TrainArgs),
    /// Transfer a trained tracker to another language.
    Transfer(TransferArgs),
    /// Score a system and print a metrics report.
    Eval(EvalArgs),
    /// Track a dialog typed on standard input.
    Track(TrackArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON object of dotted settings keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// `supervised` (default) or `wbw` to train on dictionary-translated dialogs.
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    dialogs: Option<PathBuf>,
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long)]
    embeddings_src: Option<PathBuf>,
    #[arg(long)]
    embeddings_tgt: Option<PathBuf>,
    #[arg(long)]
    mapping: Option<PathBuf>,
    #[arg(long)]
    dictionary: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Debug, Args)]
struct TransferArgs {
    #[command(flatten)]
    common: Common,
    /// Teacher checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// `c` (parallel corpus) or `d` (dictionary).
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// `copy-teacher` or `random`.
    #[arg(long)]
    student_init: Option<String>,
    /// Source-language training dialogs.
    #[arg(long)]
    dialogs: Option<PathBuf>,
    /// Source ontology.
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long)]
    embeddings_src: Option<PathBuf>,
    #[arg(long)]
    embeddings_tgt: Option<PathBuf>,
    #[arg(long)]
    mapping: Option<PathBuf>,
    #[arg(long)]
    dictionary: Option<PathBuf>,
    #[arg(long)]
    parallel_src: Option<PathBuf>,
    #[arg(long)]
    parallel_tgt: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// ontology-match, wbw, no-transfer, xlnbt-c, xlnbt-d or supervised.
    #[arg(long)]
    system: Option<String>,
    /// Independent runs, one seed each, starting at the base seed.
    #[arg(long)]
    runs: Option<usize>,
    /// Trained model to score directly.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Test dialogs.
    #[arg(long)]
    dialogs: Option<PathBuf>,
    /// Ontology of the test dialogs.
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long)]
    embeddings_src: Option<PathBuf>,
    #[arg(long)]
    embeddings_tgt: Option<PathBuf>,
    #[arg(long)]
    mapping: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    student_init: Option<String>,
}

#[derive(Debug, Args)]
struct TrackArgs {
    #[command(flatten)]
    common: Common,
    /// Set to `ontology-match` to track without a model.
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long)]
    embeddings_src: Option<PathBuf>,
    #[arg(long)]
    embeddings_tgt: Option<PathBuf>,
}

/// File locations. Flags fill these; a config file may too.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory written by `gen`; `eval` runs on it instead of generating.
    pub task: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub dialogs: Option<PathBuf>,
    /// Validation dialogs for `train`; held out from `dialogs` if absent.
    pub valid_dialogs: Option<PathBuf>,
    /// Target test dialogs scored along the `transfer` curve.
    pub eval_dialogs: Option<PathBuf>,
    pub ontology: Option<PathBuf>,
    pub embeddings_src: Option<PathBuf>,
    pub embeddings_tgt: Option<PathBuf>,
    pub mapping: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub parallel_src: Option<PathBuf>,
    pub parallel_tgt: Option<PathBuf>,
}

/// Everything a subcommand can be configured with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Copied into every component seed not set explicitly.
    pub seed: Option<u64>,
    pub runs: usize,
    pub system: Option<System>,
    /// Which synthetic target embeddings `eval` uses.
    pub regime: Regime,
    /// Language of the training dialogs; read from the mapping if absent.
    pub language: Option<String>,
    pub target_language: Option<String>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub transfer: TransferConfig,
    pub synth: SynthConfig,
    pub paths: Paths,
}

impl Default for Settings {
    fn default() -> Self {
        Settings::with_experiment(ExperimentConfig::default())
    }
}

impl Settings {
    fn with_experiment(e: ExperimentConfig) -> Self {
        Settings {
            seed: None,
            runs: 1,
            system: None,
            regime: Regime::Bilingual,
            language: None,
            target_language: None,
            model: e.model,
            train: e.train,
            transfer: e.transfer,
            synth: SynthConfig::default(),
            paths: Paths::default(),
        }
    }

    fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            model: self.model,
            train: self.train,
            transfer: self.transfer,
        }
    }

    /// The settings as a flat object of dotted keys.
    pub fn to_dotted(&self) -> Map<String, Value> {
        let mut out = Map::new();
        flatten("", serde_json::to_value(self).expect("settings serialize"), &mut out);
        out
    }
}

fn flatten(prefix: &str, v: Value, out: &mut Map<String, Value>) {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        leaf => {
            out.insert(prefix.to_string(), leaf);
        }
    }
}

/// Settings plus the keys that were set by a file or a flag.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub settings: Settings,
    pub explicit: BTreeSet<String>,
}

impl Resolved {
    fn is_set(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }
}

const SEED_KEYS: [&str; 3] = ["train.seed", "transfer.seed", "synth.seed"];

/// Applies dotted `overrides` in order on top of `base`.
pub fn resolve(base: &Settings, overrides: &[(String, Value)]) -> CliResult<Resolved> {
    let mut tree = serde_json::to_value(base).expect("settings serialize");
    let mut explicit = BTreeSet::new();
    for (key, value) in overrides {
        let mut node = &mut tree;
        for part in key.split('.') {
            node = node
                .as_object_mut()
                .and_then(|m| m.get_mut(part))
                .ok_or_else(|| usage(format!("unknown settings key `{key}`")))?;
        }
        *node = value.clone();
        explicit.insert(key.clone());
    }
    let mut settings: Settings =
        serde_json::from_value(tree).map_err(|e| usage(format!("invalid settings: {e}")))?;
    if let Some(seed) = settings.seed {
        for key in SEED_KEYS {
            if explicit.contains(key) {
                continue;
            }
            match key {
                "train.seed" => settings.train.seed = seed,
                "transfer.seed" => settings.transfer.seed = seed,
                _ => settings.synth.seed = seed,
            }
        }
    }
    Ok(Resolved { settings, explicit })
}

/// Reads a config file: one JSON object whose keys are dotted settings
/// paths.
pub fn read_config(path: &Path) -> CliResult<Vec<(String, Value)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(Error::io(path, e)))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: not JSON: {e}", path.display())))?;
    match value {
        Value::Object(m) => Ok(m.into_iter().collect()),
        _ => Err(usage(format!("{}: config must be a JSON object", path.display()))),
    }
}

/// Collects `(key, value)` overrides from flags.
#[derive(Default)]
struct Overrides(Vec<(String, Value)>);

impl Overrides {
    fn set<T: Into<Value>>(&mut self, key: &str, v: Option<T>) {
        if let Some(v) = v {
            self.0.push((key.to_string(), v.into()));
        }
    }

    fn path(&mut self, key: &str, p: &Option<PathBuf>) {
        self.set(key, p.as_ref().map(|p| p.to_string_lossy().into_owned()));
    }

    fn common(&mut self, c: &Common) {
        self.set("seed", c.seed);
        self.path("paths.out", &c.out);
    }
}

fn settings_for(common: &Common, base: &Settings, flags: Overrides) -> CliResult<Resolved> {
    let mut all = match &common.config {
        Some(p) => read_config(p)?,
        None => Vec::new(),
    };
    all.extend(flags.0);
    resolve(base, &all)
}

fn need<'a>(p: &'a Option<PathBuf>, flag: &str, what: &str) -> CliResult<&'a Path> {
    p.as_deref().ok_or_else(|| usage(format!("{what} needs --{flag}")))
}

fn out_dir(s: &Settings) -> CliResult<Option<&Path>> {
    match s.paths.out.as_deref() {
        Some(d) => {
            std::fs::create_dir_all(d).map_err(|e| CliError::Runtime(Error::io(d, e)))?;
            Ok(Some(d))
        }
        None => Ok(None),
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Runtime(Error::io(path, e)))
}

fn write_settings(dir: &Path, s: &Settings) -> CliResult<()> {
    let text = serde_json::to_string_pretty(&Value::Object(s.to_dotted())).map_err(Error::from)?;
    write_file(&dir.join("settings.json"), &text)
}

fn parse_system(s: &str) -> CliResult<System> {
    s.parse::<System>().map_err(|e| usage(e.to_string()))
}

fn table(path: &Path) -> CliResult<Arc<EmbeddingTable>> {
    let (t, report) = load_embeddings(path)?;
    log::info!(
        "loaded {} vectors ({}-d) from {}, skipped {}",
        report.loaded,
        t.dim(),
        path.display(),
        report.skipped
    );
    Ok(Arc::new(t))
}

/// The model width always follows the embeddings unless set explicitly.
fn model_config(r: &Resolved, dim: usize) -> ModelConfig {
    let mut m = r.settings.model;
    if !r.is_set("model.hidden") {
        m.hidden = dim;
    }
    m
}

/// Source and target language for a mapping whose source side realizes
/// `ontology`.
fn languages(s: &Settings, mapping: &OntologyMapping, source: Option<&str>, ontology: &Ontology) -> CliResult<(String, String)> {
    let from = match (&s.language, source) {
        (Some(l), _) => l.clone(),
        (None, Some(l)) => l.to_string(),
        (None, None) => mapping
            .language_of(ontology)
            .ok_or_else(|| usage("cannot tell the ontology's language from the mapping; set `language`"))?,
    };
    let to = match &s.target_language {
        Some(l) => l.clone(),
        None => {
            let others: Vec<&str> = mapping.languages().filter(|l| *l != from).collect();
            match others.as_slice() {
                [one] => one.to_string(),
                _ => return Err(usage("the mapping has several other languages; set `target_language`")),
            }
        }
    };
    Ok((from, to))
}

fn cmd_gen(a: &GenArgs) -> CliResult<()> {
    let r = settings_for(&a.common, &Settings::default(), {
        let mut o = Overrides::default();
        o.common(&a.common);
        o
    })?;
    let dir = out_dir(&r.settings)?.ok_or_else(|| usage("gen needs --out"))?;
    let task = generate_toy_task(&r.settings.synth)?;
    let manifest = task.write(dir)?;
    write_settings(dir, &r.settings)?;
    log::info!("wrote {} files to {}", manifest.files.len() + 1, dir.display());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let mut o = Overrides::default();
    o.common(&a.common);
    o.set("system", a.system.clone());
    o.path("paths.dialogs", &a.dialogs);
    o.path("paths.ontology", &a.ontology);
    o.path("paths.embeddings_src", &a.embeddings_src);
    o.path("paths.embeddings_tgt", &a.embeddings_tgt);
    o.path("paths.mapping", &a.mapping);
    o.path("paths.dictionary", &a.dictionary);
    o.set("model.lambda", a.lambda);
    o.set("train.learning_rate", a.lr);
    o.set("train.epochs", a.epochs);
    o.set("train.batch_size", a.batch_size);
    let r = settings_for(&a.common, &Settings::default(), o)?;
    let s = &r.settings;
    let system = s.system.unwrap_or(System::Supervised);
    if !matches!(system, System::Supervised | System::WordByWord) {
        return Err(usage(format!("train builds supervised or wbw models, not {system}")));
    }
    let p = &s.paths;
    let ontology = load_ontology(need(&p.ontology, "ontology", "train")?)?;
    let dialogs = load_dialogs(need(&p.dialogs, "dialogs", "train")?, &ontology)?;
    let valid = match &p.valid_dialogs {
        Some(v) => Some(load_dialogs(v, &ontology)?),
        None => None,
    };
    let src = table(need(&p.embeddings_src, "embeddings-src", "train")?)?;

    let (lexicon, train, valid, language) = if system == System::WordByWord {
        let mapping = load_mapping(need(&p.mapping, "mapping", "train --system wbw")?)?;
        let dictionary = load_dictionary(need(&p.dictionary, "dictionary", "train --system wbw")?)?;
        let tgt = table(need(&p.embeddings_tgt, "embeddings-tgt", "train --system wbw")?)?;
        let (from, to) = languages(s, &mapping, None, &ontology)?;
        let translate =
            |d: &[Dialog]| word_by_word_translate(d, &dictionary, &src, &tgt, &mapping, &from, &to);
        let train = translate(&dialogs)?;
        let valid = valid.map(|v| translate(&v)).transpose()?;
        let lexicon = Lexicon::new(tgt.clone(), mapping.map_ontology(&ontology, &from, &to)?)?;
        (lexicon, train, valid, to)
    } else {
        let language = match (&s.language, &p.mapping) {
            (Some(l), _) => l.clone(),
            (None, Some(m)) => load_mapping(m)?.language_of(&ontology).unwrap_or_else(|| "src".into()),
            (None, None) => "src".into(),
        };
        (Lexicon::new(src, ontology)?, dialogs, valid, language)
    };
    let out = out_dir(s)?.ok_or_else(|| usage("train needs --out"))?;
    log::info!("training a {system} tracker on {} dialogs ({language})", train.len());
    let outcome = train_teacher(
        &train,
        valid.as_deref(),
        &lexicon,
        model_config(&r, lexicon.dim()),
        &s.train,
        &language,
    )?;
    log::info!(
        "best validation goal accuracy {:.4} after {} epochs",
        outcome.best_valid_goal,
        outcome.epochs_run
    );
    outcome.model.save(&out.join("model.ckpt"))?;
    export_curve(&outcome.curve, &out.join("curve.csv"))?;
    write_settings(out, s)?;
    Ok(())
}

fn cmd_transfer(a: &TransferArgs) -> CliResult<()> {
    let mut o = Overrides::default();
    o.common(&a.common);
    o.path("paths.checkpoint", &a.checkpoint);
    o.set("transfer.mode", a.mode.clone());
    o.set("transfer.alpha", a.alpha);
    o.set("transfer.tau", a.tau);
    o.set("transfer.learning_rate", a.lr);
    o.set("transfer.iterations", a.iterations);
    o.set("transfer.batch_size", a.batch_size);
    o.set("transfer.student_init", a.student_init.clone());
    o.path("paths.dialogs", &a.dialogs);
    o.path("paths.ontology", &a.ontology);
    o.path("paths.embeddings_src", &a.embeddings_src);
    o.path("paths.embeddings_tgt", &a.embeddings_tgt);
    o.path("paths.mapping", &a.mapping);
    o.path("paths.dictionary", &a.dictionary);
    o.path("paths.parallel_src", &a.parallel_src);
    o.path("paths.parallel_tgt", &a.parallel_tgt);
    let r = settings_for(&a.common, &Settings::default(), o)?;
    let s = &r.settings;
    let p = &s.paths;
    let teacher = NbtModel::load(need(&p.checkpoint, "checkpoint", "transfer")?)?;
    let source_ontology = load_ontology(need(&p.ontology, "ontology", "transfer")?)?;
    let mapping = load_mapping(need(&p.mapping, "mapping", "transfer")?)?;
    let source_dialogs = load_dialogs(need(&p.dialogs, "dialogs", "transfer")?, &source_ontology)?;
    let src = table(need(&p.embeddings_src, "embeddings-src", "transfer")?)?;
    let tgt = table(need(&p.embeddings_tgt, "embeddings-tgt", "transfer")?)?;
    let parallel = match s.transfer.mode {
        TransferMode::Corpus => Some(load_parallel(
            need(&p.parallel_src, "parallel-src", "transfer --mode c")?,
            need(&p.parallel_tgt, "parallel-tgt", "transfer --mode c")?,
        )?),
        TransferMode::Dictionary => None,
    };
    let dictionary = match s.transfer.mode {
        TransferMode::Dictionary => Some(load_dictionary(need(&p.dictionary, "dictionary", "transfer --mode d")?)?),
        TransferMode::Corpus => None,
    };
    let (from, to) = languages(s, &mapping, Some(&teacher.language), &source_ontology)?;
    let target_ontology = mapping.map_ontology(&source_ontology, &from, &to)?;
    let eval_dialogs = match &p.eval_dialogs {
        Some(e) => Some(load_dialogs(e, &target_ontology)?),
        None => None,
    };
    let source = Lexicon::new(src, source_ontology)?;
    let target = Lexicon::new(tgt, target_ontology)?;
    let out = out_dir(s)?.ok_or_else(|| usage("transfer needs --out"))?;
    let res = TransferResources {
        teacher: &teacher,
        source: &source,
        target: &target,
        mapping: &mapping,
        target_language: &to,
        source_dialogs: &source_dialogs,
        parallel: parallel.as_ref(),
        dictionary: dictionary.as_ref(),
        eval_dialogs: eval_dialogs.as_deref(),
    };
    log::info!("transferring {from} -> {to} in mode {:?}", s.transfer.mode);
    let outcome = transfer_train(&res, &s.transfer)?;
    outcome.student.save(&out.join("student.ckpt"))?;
    export_curve(&outcome.curve, &out.join("curve.csv"))?;
    write_settings(out, s)?;
    Ok(())
}

fn cmd_eval(a: &EvalArgs, sink: &mut dyn Write) -> CliResult<()> {
    let system = match &a.system {
        Some(name) => parse_system(name)?,
        None => return Err(usage("eval needs --system")),
    };
    let mut o = Overrides::default();
    o.common(&a.common);
    o.set("system", Some(system.name()));
    o.set("runs", a.runs);
    o.path("paths.checkpoint", &a.checkpoint);
    o.path("paths.dialogs", &a.dialogs);
    o.path("paths.ontology", &a.ontology);
    o.path("paths.embeddings_src", &a.embeddings_src);
    o.path("paths.embeddings_tgt", &a.embeddings_tgt);
    o.path("paths.mapping", &a.mapping);
    o.set("transfer.alpha", a.alpha);
    o.set("transfer.tau", a.tau);
    o.set("transfer.student_init", a.student_init.clone());
    o.set("model.lambda", a.lambda);
    o.set("train.epochs", a.epochs);
    o.set("transfer.iterations", a.iterations);
    let transfers = matches!(system, System::XlnbtC | System::XlnbtD);
    let (lr_key, batch_key) = if transfers {
        ("transfer.learning_rate", "transfer.batch_size")
    } else {
        ("train.learning_rate", "train.batch_size")
    };
    o.set(lr_key, a.lr);
    o.set(batch_key, a.batch_size);

    let on_files = a.dialogs.is_some() || a.checkpoint.is_some();
    let r = if on_files {
        settings_for(&a.common, &Settings::default(), o)?
    } else {
        // The synthetic task trains with its own defaults, sized to its
        // embedding width.
        let probe = settings_for(&a.common, &Settings::default(), Overrides(o.0.clone()))?;
        let base = Settings::with_experiment(ExperimentConfig::toy(probe.settings.synth.dim));
        settings_for(&a.common, &base, o)?
    };
    let s = &r.settings;
    if s.runs == 0 {
        return Err(usage("--runs must be at least 1"));
    }
    let report = if s.paths.dialogs.is_some() || s.paths.checkpoint.is_some() {
        eval_files(&r, system)?
    } else {
        eval_synthetic(&r, system)?
    };
    let json = report.to_json();
    if let Some(dir) = out_dir(s)? {
        write_file(&dir.join("report.json"), &json)?;
        write_settings(dir, s)?;
    }
    writeln!(sink, "{json}").map_err(|e| CliError::Runtime(Error::io("<stdout>", e)))?;
    Ok(())
}

/// Scores a checkpoint, or ontology matching, on a dialog file.
fn eval_files(r: &Resolved, system: System) -> CliResult<MetricsReport> {
    let s = &r.settings;
    let p = &s.paths;
    if s.runs != 1 {
        return Err(usage("--runs applies to trained systems; a file evaluation is a single run"));
    }
    let ontology = load_ontology(need(&p.ontology, "ontology", "eval")?)?;
    let dialogs = load_dialogs(need(&p.dialogs, "dialogs", "eval")?, &ontology)?;
    let mapping = p.mapping.as_deref().map(load_mapping).transpose()?;
    let mut language = s
        .target_language
        .clone()
        .or_else(|| mapping.as_ref().and_then(|m| m.language_of(&ontology)));
    let evaluation = if system == System::OntologyMatch {
        if p.checkpoint.is_some() {
            return Err(usage("ontology-match takes no --checkpoint"));
        }
        let synonyms = RequestSynonyms::new();
        let preds = dialogs.iter().map(|d| ontology_match_track(d, &ontology, &synonyms)).collect();
        evaluate_predictions(&dialogs, preds)?
    } else {
        let ckpt = need(&p.checkpoint, "checkpoint", &format!("eval --system {system} on --dialogs"))?;
        let model = NbtModel::load(ckpt)?;
        let emb = p
            .embeddings_tgt
            .as_ref()
            .or(p.embeddings_src.as_ref())
            .ok_or_else(|| usage("eval needs --embeddings-tgt or --embeddings-src"))?;
        let lexicon = Lexicon::new(table(emb)?, ontology)?;
        language.get_or_insert_with(|| model.language.clone());
        evaluate_model(&model, &lexicon, &dialogs)?
    };
    Ok(MetricsReport::from_runs(
        system.name(),
        language.as_deref().unwrap_or("und"),
        &[evaluation],
    )?)
}

/// Trains and scores `system` on the synthetic task once per seed, runs in
/// parallel.
fn eval_synthetic(r: &Resolved, system: System) -> CliResult<MetricsReport> {
    let s = &r.settings;
    let loaded = s.paths.task.as_deref().map(ToyTask::load).transpose()?;
    let runs: Vec<crate::error::Result<(String, Evaluation)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..s.runs as u64)
            .map(|i| {
                let loaded = loaded.as_ref();
                scope.spawn(move || {
                    let cfg = s.experiment().with_seed(0);
                    let cfg = ExperimentConfig {
                        train: TrainConfig {
                            seed: s.train.seed + i,
                            ..cfg.train
                        },
                        transfer: TransferConfig {
                            seed: s.transfer.seed + i,
                            ..cfg.transfer
                        },
                        ..cfg
                    };
                    let generated;
                    let task = match loaded {
                        Some(t) => t,
                        None => {
                            generated = generate_toy_task(&SynthConfig {
                                seed: s.synth.seed + i,
                                ..s.synth.clone()
                            })?;
                            &generated
                        }
                    };
                    let pipeline = Pipeline::from_toy(task, s.regime)?;
                    let teacher = if system.needs_teacher() {
                        let t = pipeline.train_source_teacher(&cfg)?;
                        log::info!("run {i}: teacher source goal {:.4}", pipeline.source_test(&t)?.metrics.goal_accuracy);
                        Some(t)
                    } else {
                        None
                    };
                    let run = pipeline.run(system, teacher.as_ref(), &cfg)?;
                    log::info!("run {i}: {system} goal {:.4}", run.evaluation.metrics.goal_accuracy);
                    Ok((pipeline.target_language, run.evaluation))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
    });
    let mut language = String::new();
    let mut evaluations = Vec::with_capacity(runs.len());
    for run in runs {
        let (l, e) = run?;
        language = l;
        evaluations.push(e);
    }
    Ok(MetricsReport::from_runs(system.name(), &language, &evaluations)?)
}

/// A turn-by-turn tracker behind the REPL.
pub enum Session<'a> {
    Model {
        tracker: Tracker<'a>,
        ontology: &'a Ontology,
    },
    Match(OntologyMatcher<'a>, &'a Ontology),
}

impl<'a> Session<'a> {
    pub fn model(model: &'a NbtModel, lexicon: &'a Lexicon) -> crate::error::Result<Self> {
        Ok(Session::Model {
            tracker: Tracker::new(model, lexicon)?,
            ontology: lexicon.ontology(),
        })
    }

    pub fn ontology_match(ontology: &'a Ontology, synonyms: &'a RequestSynonyms) -> Self {
        Session::Match(OntologyMatcher::new(ontology, synonyms), ontology)
    }

    pub fn ontology(&self) -> &Ontology {
        match self {
            Session::Model { ontology, .. } | Session::Match(_, ontology) => ontology,
        }
    }

    pub fn reset(&mut self) {
        match self {
            Session::Model { tracker, .. } => tracker.reset(),
            Session::Match(m, _) => m.reset(),
        }
    }

    pub fn step(&mut self, acts: &SystemActs, text: &str) -> crate::error::Result<BeliefState> {
        let u = utterance_of(text)?;
        match self {
            Session::Model { tracker, .. } => Ok(tracker.step(acts, &u)?.0),
            Session::Match(m, _) => Ok(m.step(&u)),
        }
    }
}

/// Parses a system-act line: empty, `-` or `none` for no acts, otherwise
/// `request(slot)` and/or `confirm(slot=value)` separated by `;`.
pub fn parse_acts(line: &str, ontology: &Ontology) -> std::result::Result<SystemActs, String> {
    let mut acts = SystemActs::none();
    let line = line.trim();
    if line.is_empty() || line == "-" || line.eq_ignore_ascii_case("none") {
        return Ok(acts);
    }
    for item in line.split(';').map(str::trim).filter(|i| !i.is_empty()) {
        let (kind, arg) = item
            .strip_suffix(')')
            .and_then(|i| i.split_once('('))
            .ok_or_else(|| format!("expected request(slot) or confirm(slot=value), got `{item}`"))?;
        match kind.trim() {
            "request" => {
                let slot = arg.trim();
                if ontology.slot_index(slot).is_none() && ontology.request_index(slot).is_none() {
                    return Err(format!("unknown slot `{slot}`"));
                }
                if acts.request.replace(slot.to_string()).is_some() {
                    return Err("more than one request".into());
                }
            }
            "confirm" => {
                let (slot, value) = arg
                    .split_once('=')
                    .ok_or_else(|| format!("confirm needs slot=value, got `{arg}`"))?;
                let (slot, value) = (slot.trim(), value.trim());
                if ontology.value_index(slot, value).is_none() {
                    return Err(format!("unknown pair {slot}={value}"));
                }
                if acts.confirm.replace((slot.to_string(), value.to_string())).is_some() {
                    return Err("more than one confirmation".into());
                }
            }
            other => return Err(format!("unknown act `{other}`")),
        }
    }
    Ok(acts)
}

/// Reads alternating act lines and user utterances from `input` and prints
/// the belief state after each turn as one JSON line. `:reset` starts a new
/// dialog and `:quit` ends the session; either may appear on any line.
pub fn repl<R: BufRead, W: Write>(session: &mut Session, input: R, mut out: W, prompt: bool) -> std::io::Result<()> {
    enum Expect {
        Acts,
        Utterance(SystemActs),
        /// The acts were malformed; the utterance line is read and dropped.
        Skip,
    }
    let mut expect = Expect::Acts;
    let show = |out: &mut W, expect: &Expect| -> std::io::Result<()> {
        if prompt {
            let p = if matches!(expect, Expect::Acts) { "acts> " } else { "user> " };
            write!(out, "{p}")?;
            out.flush()?;
        }
        Ok(())
    };
    show(&mut out, &expect)?;
    for line in input.lines() {
        let line = line?;
        match line.trim() {
            ":quit" => return Ok(()),
            ":reset" => {
                session.reset();
                expect = Expect::Acts;
                writeln!(out, "reset")?;
                show(&mut out, &expect)?;
                continue;
            }
            _ => {}
        }
        expect = match expect {
            Expect::Acts => match parse_acts(&line, session.ontology()) {
                Ok(acts) => Expect::Utterance(acts),
                Err(msg) => {
                    writeln!(out, "malformed act annotation: {msg}; turn skipped")?;
                    Expect::Skip
                }
            },
            Expect::Utterance(acts) => {
                match session.step(&acts, &line) {
                    Ok(state) => writeln!(out, "{}", serde_json::to_string(&state).expect("state serializes"))?,
                    Err(e) => writeln!(out, "error: {e}; turn skipped")?,
                }
                Expect::Acts
            }
            Expect::Skip => Expect::Acts,
        };
        show(&mut out, &expect)?;
    }
    Ok(())
}

fn cmd_track(a: &TrackArgs, input: &mut dyn BufRead, out: &mut dyn Write, prompt: bool) -> CliResult<()> {
    let mut o = Overrides::default();
    o.common(&a.common);
    o.set("system", a.system.as_deref().map(parse_system).transpose()?.map(System::name));
    o.path("paths.checkpoint", &a.checkpoint);
    o.path("paths.ontology", &a.ontology);
    o.path("paths.embeddings_src", &a.embeddings_src);
    o.path("paths.embeddings_tgt", &a.embeddings_tgt);
    let r = settings_for(&a.common, &Settings::default(), o)?;
    let p = &r.settings.paths;
    let ontology = load_ontology(need(&p.ontology, "ontology", "track")?)?;
    let io_err = |e: std::io::Error| CliError::Runtime(Error::io("<stdio>", e));
    match r.settings.system {
        Some(System::OntologyMatch) => {
            let synonyms = RequestSynonyms::new();
            let mut session = Session::ontology_match(&ontology, &synonyms);
            repl(&mut session, input, out, prompt).map_err(io_err)
        }
        Some(System::WordByWord) | Some(System::Supervised) | Some(System::NoTransfer)
        | Some(System::XlnbtC) | Some(System::XlnbtD) | None => {
            let model = NbtModel::load(need(&p.checkpoint, "checkpoint", "track")?)?;
            let emb = p
                .embeddings_tgt
                .as_ref()
                .or(p.embeddings_src.as_ref())
                .ok_or_else(|| usage("track needs --embeddings-tgt or --embeddings-src"))?;
            let lexicon = Lexicon::new(table(emb)?, ontology.clone())?;
            let mut session = Session::model(&model, &lexicon)?;
            repl(&mut session, input, out, prompt).map_err(io_err)
        }
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Gen(_) => "gen",
        Command::Train(_) => "train",
        Command::Transfer(_) => "transfer",
        Command::Eval(_) => "eval",
        Command::Track(_) => "track",
    }
}

/// Runs one command line against the given standard streams and returns
/// the exit code. Logs and errors go to the process's stderr.
pub fn run_with<I, T>(args: I, input: &mut dyn BufRead, out: &mut dyn Write, prompt: bool) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let name = subcommand_name(&cli.command);
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Transfer(a) => cmd_transfer(a),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Track(a) => cmd_track(a, input, out, prompt),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                let mut cmd = Cli::command();
                cmd.build();
                if let Some(sub) = cmd.find_subcommand_mut(name) {
                    eprintln!("\n{}", sub.render_usage());
                }
            }
            e.exit_code()
        }
    }
}

/// Runs one command line against the process's standard streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    use std::io::IsTerminal;
    let stdin = std::io::stdin();
    let prompt = stdin.is_terminal();
    let mut input = stdin.lock();
    let mut out = std::io::stdout().lock();
    run_with(args, &mut input, &mut out, prompt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use indexmap::IndexMap;

    fn ontology() -> Ontology {
        let mut inf = IndexMap::new();
        inf.insert("food".to_string(), vec!["thai".to_string(), "north american".to_string()]);
        inf.insert("area".to_string(), vec!["north".to_string(), "south".to_string()]);
        Ontology::new(inf, vec!["phone".into(), "area".into()]).unwrap()
    }

    fn run_repl(session: &mut Session, text: &str) -> String {
        let mut out = Vec::new();
        repl(session, text.as_bytes(), &mut out, false).unwrap();
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn dotted_keys_override_defaults_in_order() {
        let r = resolve(
            &Settings::default(),
            &[
                ("train.epochs".into(), Value::from(3)),
                ("transfer.mode".into(), Value::from("c")),
                ("train.epochs".into(), Value::from(4)),
            ],
        )
        .unwrap();
        assert_eq!(r.settings.train.epochs, 4);
        assert_eq!(r.settings.transfer.mode, TransferMode::Corpus);
        assert!(r.is_set("train.epochs") && !r.is_set("train.batch_size"));
    }

    #[test]
    fn unknown_or_ill_typed_keys_are_usage_errors() {
        for (k, v) in [("train.epoch", Value::from(3)), ("nope", Value::from(1)), ("train.epochs", Value::from("x"))] {
            let e = resolve(&Settings::default(), &[(k.into(), v)]).unwrap_err();
            assert_eq!(e.exit_code(), EXIT_USAGE, "{k}");
        }
    }

    #[test]
    fn seed_fills_component_seeds_not_set_explicitly() {
        let r = resolve(
            &Settings::default(),
            &[("seed".into(), Value::from(11)), ("synth.seed".into(), Value::from(3))],
        )
        .unwrap();
        assert_eq!((r.settings.train.seed, r.settings.transfer.seed, r.settings.synth.seed), (11, 11, 3));
    }

    #[test]
    fn dotted_form_round_trips() {
        let mut s = Settings::default();
        s.transfer.tau = 10.0;
        s.paths.dialogs = Some("d.json".into());
        let flat: Vec<(String, Value)> = s.to_dotted().into_iter().collect();
        assert!(flat.iter().any(|(k, _)| k == "transfer.tau"));
        assert_eq!(resolve(&Settings::default(), &flat).unwrap().settings, s);
    }

    #[test]
    fn act_lines_parse() {
        let o = ontology();
        assert_eq!(parse_acts("", &o).unwrap(), SystemActs::none());
        assert_eq!(parse_acts(" none ", &o).unwrap(), SystemActs::none());
        let a = parse_acts("request(area); confirm(food=north american)", &o).unwrap();
        assert_eq!(a.request.as_deref(), Some("area"));
        assert_eq!(a.confirm, Some(("food".into(), "north american".into())));
        for bad in ["request area", "confirm(food)", "confirm(food=pizza)", "ask(area)", "request(x)", "request(area);request(food)"] {
            assert!(parse_acts(bad, &o).is_err(), "{bad}");
        }
    }

    #[test]
    fn ontology_match_repl_shows_a_verbatim_value() {
        let o = ontology();
        let syn = RequestSynonyms::new();
        let mut s = Session::ontology_match(&o, &syn);
        let text = run_repl(&mut s, "-\ni want thai food\n:quit\nnever read\n");
        assert_eq!(text.trim(), r#"{"goals":{"food":"thai"},"requests":[]}"#);
    }

    #[test]
    fn reset_matches_a_fresh_session() {
        let o = ontology();
        let syn = RequestSynonyms::new();
        let turn = "-\nthai in the north please\n";
        let fresh = run_repl(&mut Session::ontology_match(&o, &syn), turn);
        let mut s = Session::ontology_match(&o, &syn);
        let text = run_repl(&mut s, &format!("-\nsouth\n:reset\n{turn}"));
        let last = text.lines().last().unwrap();
        assert_eq!(last, fresh.trim());
        assert!(text.contains(r#""area":"south""#));
    }

    #[test]
    fn malformed_acts_skip_the_turn() {
        let o = ontology();
        let syn = RequestSynonyms::new();
        let mut s = Session::ontology_match(&o, &syn);
        let text = run_repl(&mut s, "confirm(food)\nthai\n-\nsouth\n");
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("malformed act annotation"));
        // the skipped utterance left no trace
        assert_eq!(lines[1], r#"{"goals":{"area":"south"},"requests":[]}"#);
    }

    #[test]
    fn empty_session_quits_cleanly() {
        let o = ontology();
        let syn = RequestSynonyms::new();
        assert_eq!(run_repl(&mut Session::ontology_match(&o, &syn), ":quit\n"), "");
        assert_eq!(run_repl(&mut Session::ontology_match(&o, &syn), ""), "");
    }

    #[test]
    fn bad_command_lines_exit_with_usage() {
        let mut input: &[u8] = b"";
        let mut out = Vec::new();
        assert_eq!(run_with(["xlnbt", "eval", "--bogus"], &mut input, &mut out, false), EXIT_USAGE);
        assert_eq!(run_with(["xlnbt"], &mut input, &mut out, false), EXIT_USAGE);
        assert_eq!(run_with(["xlnbt", "eval", "--system", "nmt"], &mut input, &mut out, false), EXIT_USAGE);
        assert_eq!(run_with(["xlnbt", "gen"], &mut input, &mut out, false), EXIT_USAGE);
        assert_eq!(run_with(["xlnbt", "--version"], &mut input, &mut out, false), EXIT_OK);
    }
}
