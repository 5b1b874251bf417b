//! Shared inputs for the benchmarks, loaded from the shipped fixtures.

use std::path::{Path, PathBuf};

use beads_core::annotation::AnnotationSet;
use beads_core::corpus::{Corpus, RawTranscript};
use beads_core::store::Store;

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture_store() -> Store {
    Store::open(fixtures_dir().join("store")).expect("fixture store opens")
}

pub fn raw_transcript(debate_id: &str) -> RawTranscript {
    let path = fixtures_dir().join("raw").join(format!("{debate_id}.txt"));
    let text = std::fs::read_to_string(&path).expect("raw fixture readable");
    RawTranscript::from_text(debate_id, "fixture", &text).expect("valid raw fixture")
}

/// Gold and mock sets for the first debate, with their corpus.
pub fn agreement_inputs() -> (AnnotationSet, AnnotationSet, Corpus) {
    let store = fixture_store();
    let (gold, corpus) = store.load_set("gold_tb").expect("gold set loads");
    let (mock, _) = store.load_set("mock_tb").expect("mock set loads");
    (gold, mock, corpus)
}
