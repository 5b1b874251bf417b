mod support;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use beads_core::agreement::compare;
use beads_core::analytics::{tag_frequencies, FrequencyOptions};
use beads_core::annotation::{load_set, parse_jsonl, to_jsonl};
use beads_core::autotag::{autotag_corpus, MockEndpoint, PromptTemplate, RuleTable, RunConfig, RunSpec};
use beads_core::corpus::{clean, load_corpus, save_corpus, NoiseRules, RawTranscript};
use beads_core::store::Store;
use serde_json::Value;
use support::fixture_gen;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn committed_fixtures_match_generator() {
    let dir = tempfile::tempdir().unwrap();
    fixture_gen::write_fixtures(dir.path());
    for sub in ["raw", "store"] {
        let fresh = files_under(&dir.path().join(sub));
        let committed = files_under(&fixtures().join(sub));
        assert_eq!(fresh.keys().collect::<Vec<_>>(), committed.keys().collect::<Vec<_>>());
        for (k, v) in &fresh {
            assert!(committed[k] == *v, "{sub}/{} is stale; rerun the gen_fixtures example", k.display());
        }
    }
}

#[test]
fn cleaning_golden() {
    let raw = std::fs::read_to_string(fixtures().join("cleaning/raw.txt")).unwrap();
    let expected = std::fs::read_to_string(fixtures().join("cleaning/expected.txt")).unwrap();
    let rules = NoiseRules::bundled();
    let once = clean(&RawTranscript::from_text("g", "", &raw).unwrap(), &rules);
    assert_eq!(once.lines.join("\n") + "\n", expected);
    let removed: Vec<_> = once.removed.iter().map(|r| (r.line_no, r.rule.as_str())).collect();
    assert_eq!(
        removed,
        [
            (1, "header"),
            (2, "header"),
            (4, "timestamp"),
            (6, "stage-direction"),
            (9, "stage-direction"),
            (11, "timestamp"),
            (12, "stage-direction"),
            (15, "header"),
            (17, "stage-direction"),
            (19, "timestamp"),
            (20, "header"),
        ]
    );
    let twice = clean(&RawTranscript::from_text("g", "", &expected).unwrap(), &rules);
    assert_eq!(twice.lines, once.lines);
    assert!(twice.removed.is_empty());
}

/// Counts primary tags per speaker straight from the JSON files.
fn raw_counts(store: &Path, debate: &str, set: &str) -> BTreeMap<(String, String), u64> {
    let corpus: Value =
        serde_json::from_str(&std::fs::read_to_string(store.join(format!("corpora/{debate}.json"))).unwrap()).unwrap();
    let mods: Vec<&str> =
        corpus["moderators"].as_array().map(|a| a.iter().map(|m| m.as_str().unwrap()).collect()).unwrap_or_default();
    let mut speaker_of = BTreeMap::new();
    for turn in corpus["turns"].as_array().unwrap() {
        for u in turn["units"].as_array().unwrap() {
            speaker_of
                .insert(u["unit_id"].as_str().unwrap().to_string(), turn["speaker"].as_str().unwrap().to_string());
        }
    }
    let mut counts = BTreeMap::new();
    let text = std::fs::read_to_string(store.join(format!("sets/{set}.jsonl"))).unwrap();
    for line in text.lines().skip(1) {
        let rec: Value = serde_json::from_str(line).unwrap();
        let speaker = &speaker_of[rec["unit_id"].as_str().unwrap()];
        if mods.contains(&speaker.as_str()) {
            continue;
        }
        *counts.entry((rec["primary_tag"].as_str().unwrap().to_string(), speaker.clone())).or_default() += 1;
    }
    counts
}

#[test]
fn gold_counts_agree_with_file_oracle() {
    let root = fixtures().join("store");
    let store = Store::open(&root).unwrap();
    for (debate, set, expect) in
        [("tb2024", "gold_tb", fixture_gen::GOLD_TB), ("th2024", "gold_th", fixture_gen::GOLD_TH)]
    {
        let (s, c) = store.load_set(set).unwrap();
        let table = tag_frequencies(&s, &c, FrequencyOptions::default()).unwrap();
        let oracle = raw_counts(&root, debate, set);
        let mut from_table = BTreeMap::new();
        for (tag, per) in &table.counts {
            for (sp, n) in per {
                from_table.insert((tag.to_string(), sp.clone()), *n);
            }
        }
        assert_eq!(from_table, oracle);
        for (speaker, tags) in expect {
            for (tag, n) in *tags {
                assert_eq!(oracle[&(tag.to_string(), speaker.to_string())], *n as u64, "{set} {tag} {speaker}");
            }
        }
    }
}

#[test]
fn mock_set_disagrees_on_thirty_percent() {
    let store = Store::open(fixtures().join("store")).unwrap();
    let (gold, corpus) = store.load_set("gold_tb").unwrap();
    let (mock, _) = store.load_set("mock_tb").unwrap();
    let naive = gold.iter().filter(|g| mock.get(&g.unit_id).is_some_and(|m| m.primary_tag == g.primary_tag)).count();
    let r = compare(&gold, &mock, &corpus).unwrap();
    assert_eq!(r.compared_units, 360);
    assert_eq!(naive, 252);
    assert_eq!(r.exact_matches, naive);
    assert_eq!(r.discrepancies.len(), fixture_gen::MOCK_TB_MISMATCHES);
    assert!(r.overlap_rate > r.exact_match_rate);
}

#[test]
fn context_changes_verdicts() {
    let store = Store::open(fixtures().join("store")).unwrap();
    let corpus = store.load_corpus("context5").unwrap();
    let reg = store.registry();
    let client = MockEndpoint::new(RuleTable::bundled(reg).unwrap());
    let run_at = |radius| {
        let spec = RunSpec { set_id: format!("r{radius}"), annotator_id: "mock".into(), radius };
        let run =
            autotag_corpus(&client, &PromptTemplate::bundled(), reg, &corpus, &spec, &RunConfig::default()).unwrap();
        fixture_gen::CONTEXT_ROWS
            .iter()
            .map(|(_, _, _, target, _)| {
                let u = corpus.units().find(|u| u.unit.text == *target).expect("target present");
                run.set.get(&u.unit.unit_id).unwrap().primary_tag.to_string()
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(run_at(1), ["DIS", "ANS", "AEX", "CH", "REB"]);
    assert_eq!(run_at(0), ["S", "S", "OQ", "S", "S"]);
}

#[test]
fn every_fixture_round_trips() {
    let store = Store::open(fixtures().join("store")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for id in store.list_corpora().unwrap() {
        let c = store.load_corpus(&id).unwrap();
        let p = dir.path().join(format!("{id}.json"));
        save_corpus(&c, &p).unwrap();
        assert_eq!(load_corpus(&p).unwrap(), c);
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(store.corpus_path(&id)).unwrap());
    }
    for id in store.list_set_ids().unwrap() {
        let (s, c) = store.load_set(&id).unwrap();
        let text = to_jsonl(&s);
        assert_eq!(text, std::fs::read_to_string(store.set_path(&id)).unwrap());
        assert_eq!(parse_jsonl(&text, store.registry(), &c).unwrap(), s);
        assert_eq!(load_set(&store.set_path(&id), store.registry(), &c).unwrap(), s);
    }
}
