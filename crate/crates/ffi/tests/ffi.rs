use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;
use std::sync::Arc;

use xlnbt::corpus::tokenize;
use xlnbt::eval::Tracker;
use xlnbt::model::{Lexicon, ModelConfig};
use xlnbt::synth::{generate_toy_task, SynthConfig};
use xlnbt::train::{train_teacher, TrainConfig};
use xlnbt_ffi::*;

struct Fixture {
    _dir: tempfile::TempDir,
    checkpoint: PathBuf,
    embeddings: PathBuf,
    ontology: PathBuf,
    utterances: Vec<String>,
}

fn fixture() -> Fixture {
    let task = generate_toy_task(&SynthConfig {
        train_dialogs: 16,
        valid_dialogs: 4,
        test_dialogs: 2,
        parallel_pairs: 20,
        dim: 8,
        ..Default::default()
    })
    .unwrap();
    let lexicon = Lexicon::new(Arc::new(task.source_embeddings.clone()), task.source_ontology.clone()).unwrap();
    let config = TrainConfig {
        epochs: 3,
        ..Default::default()
    };
    let model_config = ModelConfig {
        hidden: 8,
        ..Default::default()
    };
    let out = train_teacher(&task.source.train, Some(&task.source.valid), &lexicon, model_config, &config, "src").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let checkpoint = dir.path().join("model.ckpt");
    let embeddings = dir.path().join("emb.txt");
    let ontology = dir.path().join("ontology.json");
    out.model.save(&checkpoint).unwrap();
    task.source_embeddings.save(&embeddings).unwrap();
    task.source_ontology.save(&ontology).unwrap();
    let utterances = task.source.test[0].turns.iter().map(|t| t.transcript.clone()).collect();
    Fixture {
        _dir: dir,
        checkpoint,
        embeddings,
        ontology,
        utterances,
    }
}

fn c(s: impl AsRef<str>) -> CString {
    CString::new(s.as_ref()).unwrap()
}

fn cpath(p: &Path) -> CString {
    c(p.to_str().unwrap())
}

fn last_error() -> String {
    let p = xlnbt_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

unsafe fn load(f: &Fixture) -> *mut XlnbtModel {
    let mut model = ptr::null_mut();
    let st = xlnbt_model_load(cpath(&f.checkpoint).as_ptr(), cpath(&f.embeddings).as_ptr(), cpath(&f.ontology).as_ptr(), &mut model);
    assert_eq!(st, XlnbtStatus::Ok);
    assert!(!model.is_null());
    model
}

unsafe fn step(t: *mut XlnbtTracker, acts: &str, utterance: &str) -> Result<String, XlnbtStatus> {
    let mut out: *mut c_char = ptr::null_mut();
    let st = xlnbt_tracker_step(t, c(acts).as_ptr(), c(utterance).as_ptr(), &mut out);
    if st != XlnbtStatus::Ok {
        assert!(out.is_null());
        return Err(st);
    }
    let s = CStr::from_ptr(out).to_str().unwrap().to_string();
    xlnbt_string_free(out);
    Ok(s)
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(xlnbt_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_reported_not_dereferenced() {
    unsafe {
        let mut model = ptr::null_mut();
        let st = xlnbt_model_load(ptr::null(), ptr::null(), ptr::null(), &mut model);
        assert_eq!(st, XlnbtStatus::NullArgument);
        assert!(model.is_null());
        assert!(last_error().contains("checkpoint"));
        assert_eq!(xlnbt_tracker_new(ptr::null(), ptr::null_mut()), XlnbtStatus::NullArgument);
        assert_eq!(xlnbt_tracker_reset(ptr::null_mut()), XlnbtStatus::NullArgument);
        xlnbt_model_free(ptr::null_mut());
        xlnbt_tracker_free(ptr::null_mut());
        xlnbt_string_free(ptr::null_mut());
    }
}

#[test]
fn missing_files_are_io_errors() {
    let f = fixture();
    unsafe {
        let mut model = ptr::null_mut();
        let missing = c("/nonexistent/model.ckpt");
        let st = xlnbt_model_load(missing.as_ptr(), cpath(&f.embeddings).as_ptr(), cpath(&f.ontology).as_ptr(), &mut model);
        assert_eq!(st, XlnbtStatus::Io);
        assert!(model.is_null());
        assert!(last_error().contains("/nonexistent/model.ckpt"));
        // a text file where a checkpoint is expected
        let st = xlnbt_model_load(cpath(&f.ontology).as_ptr(), cpath(&f.embeddings).as_ptr(), cpath(&f.ontology).as_ptr(), &mut model);
        assert_ne!(st, XlnbtStatus::Ok);
        assert!(model.is_null());
    }
}

#[test]
fn steps_match_the_library_tracker() {
    let f = fixture();
    let model = xlnbt::model::NbtModel::load(&f.checkpoint).unwrap();
    let table = xlnbt::corpus::load_embeddings(&f.embeddings).unwrap().0;
    let lexicon = Lexicon::new(Arc::new(table), xlnbt::corpus::load_ontology(&f.ontology).unwrap()).unwrap();
    let mut reference = Tracker::new(&model, &lexicon).unwrap();
    let expected: Vec<String> = f
        .utterances
        .iter()
        .map(|u| {
            let (state, _) = reference.step(&Default::default(), &tokenize(u).unwrap()).unwrap();
            serde_json::to_string(&state).unwrap()
        })
        .collect();
    unsafe {
        let m = load(&f);
        let mut t = ptr::null_mut();
        assert_eq!(xlnbt_tracker_new(m, &mut t), XlnbtStatus::Ok);
        // the tracker keeps its model alive
        xlnbt_model_free(m);
        let got: Vec<String> = f.utterances.iter().map(|u| step(t, "-", u).unwrap()).collect();
        assert_eq!(got, expected);
        // reset replays the dialog identically
        assert_eq!(xlnbt_tracker_reset(t), XlnbtStatus::Ok);
        assert_eq!(step(t, "none", &f.utterances[0]).unwrap(), expected[0]);
        xlnbt_tracker_free(t);
    }
}

#[test]
fn malformed_acts_leave_history_untouched() {
    let f = fixture();
    unsafe {
        let m = load(&f);
        let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(xlnbt_tracker_new(m, &mut a), XlnbtStatus::Ok);
        assert_eq!(xlnbt_tracker_new(m, &mut b), XlnbtStatus::Ok);
        step(a, "", &f.utterances[0]).unwrap();
        step(b, "", &f.utterances[0]).unwrap();
        assert_eq!(step(a, "confirm(nope=x)", &f.utterances[1]), Err(XlnbtStatus::InvalidArgument));
        assert!(last_error().starts_with("malformed acts"));
        assert_eq!(step(a, "", &f.utterances[1]), step(b, "", &f.utterances[1]));
        let bad_utf8 = [0xffu8 as c_char, 0];
        let mut out = ptr::null_mut();
        let st = xlnbt_tracker_step(a, c("").as_ptr(), bad_utf8.as_ptr(), &mut out);
        assert_eq!(st, XlnbtStatus::InvalidArgument);
        xlnbt_tracker_free(a);
        xlnbt_tracker_free(b);
        xlnbt_model_free(m);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/xlnbt.h")).unwrap();
    for name in [
        "xlnbt_version",
        "xlnbt_last_error_message",
        "xlnbt_model_load",
        "xlnbt_model_free",
        "xlnbt_tracker_new",
        "xlnbt_tracker_step",
        "xlnbt_tracker_reset",
        "xlnbt_tracker_free",
        "xlnbt_string_free",
        "typedef struct XlnbtModel XlnbtModel",
        "XLNBT_STATUS_INVALID_ARGUMENT = 2",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"xlnbt.h\"\nint main(void) { XlnbtModel *m = 0; return xlnbt_model_load(0, 0, 0, &m) == XLNBT_STATUS_OK; }\n",
    )
    .unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    match std::process::Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
    {
        Ok(status) => assert!(status.success(), "{cc} rejected the header"),
        Err(e) => eprintln!("skipping: no C compiler ({e})"),
    }
}
