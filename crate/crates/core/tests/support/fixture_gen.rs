//! Builds the shipped fixture tree. Shared by `examples/gen_fixtures.rs` and
//! the test that checks the committed copy is current.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use beads_core::annotation::{Annotation, AnnotationSet, Provenance, SetHeader};
use beads_core::corpus::{ingest, Corpus, NoiseRules, RawTranscript, Segmenter};
use beads_core::schema::TagCode;
use beads_core::store::Store;
use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FIXTURE_TIME: &str = "2024-11-01T12:00:00Z";

/// Per-speaker primary-tag counts of the two gold sets.
pub const GOLD_TB: &[(&str, &[(&str, usize)])] = &[
    ("TRUMP", &[("SE", 43), ("CH", 38), ("PB", 29), ("AEX", 17), ("AF", 32), ("PER", 21), ("PD", 14)]),
    ("BIDEN", &[("SE", 35), ("CH", 31), ("PB", 22), ("AEX", 9), ("AF", 24), ("PER", 18), ("PD", 10)]),
];
pub const GOLD_TH: &[(&str, &[(&str, usize)])] = &[
    ("TRUMP", &[("SE", 40), ("CH", 37), ("PB", 22), ("AEX", 13), ("AF", 34), ("PER", 12), ("PD", 7)]),
    ("HARRIS", &[("SE", 33), ("CH", 28), ("PB", 14), ("AEX", 6), ("AF", 28), ("PER", 7), ("PD", 3)]),
];
pub const TB_MODERATOR_UNITS: usize = 17;
pub const TH_MODERATOR_UNITS: usize = 16;
/// Units of `mock_tb` whose primary tag differs from `gold_tb`.
pub const MOCK_TB_MISMATCHES: usize = 108;

/// (speaker of previous, previous, speaker of target, target, next)
pub const CONTEXT_ROWS: [(&str, &str, &str, &str, &str); 5] = [
    (
        "TRUMP",
        "Your healthcare plan is leaving millions uninsured.",
        "HARRIS",
        "Yes, but that is not entirely true.",
        "Let me explain why that claim is misleading.",
    ),
    (
        "MODERATOR",
        "What specific steps did you take to strengthen the economy?",
        "TRUMP",
        "We implemented tariffs to protect American jobs.",
        "These tariffs created new manufacturing opportunities.",
    ),
    (
        "HARRIS",
        "We'll fix immigration by investing more in surveillance.",
        "TRUMP",
        "Can you explain how that's going to work?",
        "That sounds good, but there's no clarity on execution.",
    ),
    (
        "TRUMP",
        "You opened the borders and let crime run rampant.",
        "HARRIS",
        "That's not true.",
        "You're making that up just to scare people.",
    ),
    (
        "TRUMP",
        "Your administration abandoned local businesses during the pandemic.",
        "HARRIS",
        "We've provided support for small businesses.",
        "In fact, we issued thousands of recovery grants.",
    ),
];

const SUBJECTS: &[&str] = &[
    "We",
    "They",
    "Our country",
    "The economy",
    "Working families",
    "This administration",
    "The border",
    "Our allies",
    "Small towns",
    "The middle class",
    "Every veteran",
    "Young people",
    "Our schools",
    "The next president",
    "Farmers",
    "Seniors",
];
const VERBS: &[&str] = &[
    "will protect",
    "must deliver",
    "cannot ignore",
    "should demand",
    "would lose",
    "will rebuild",
    "will need",
    "should get",
    "will keep asking for",
    "will never accept",
    "can still win",
    "were denied",
];
const OBJECTS: &[&str] = &[
    "better jobs",
    "lower prices",
    "real security",
    "a serious plan",
    "stronger borders",
    "honest answers",
    "fair trade",
    "more support",
    "safer streets",
    "affordable housing",
    "clean water",
    "good schools",
    "working hospitals",
    "a balanced budget",
    "respect abroad",
];
const TAILS: &[&str] = &[
    "",
    "",
    " right now",
    " this year",
    " in every state",
    " for the next generation",
    " without delay",
    " and everyone knows it",
    " after four long years",
];
const TOPICS: &[&str] = &[
    "inflation",
    "the border",
    "health care",
    "foreign policy",
    "climate",
    "housing costs",
    "child care",
    "the national debt",
    "crime",
    "trade",
    "energy prices",
    "veterans",
    "education",
    "democracy",
    "abortion",
    "the economy",
    "taxes",
];

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let s = SUBJECTS[rng.random_range(0..SUBJECTS.len())];
    let v = VERBS[rng.random_range(0..VERBS.len())];
    let o = OBJECTS[rng.random_range(0..OBJECTS.len())];
    let t = TAILS[rng.random_range(0..TAILS.len())];
    format!("{s} {v} {o}{t}.")
}

fn split_evenly(total: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|i| total / parts + usize::from(i < total % parts)).collect()
}

/// Writes one turn, wrapping every three sentences onto a continuation line.
fn push_turn(out: &mut Vec<String>, speaker: &str, sentences: &[String]) {
    for (i, chunk) in sentences.chunks(3).enumerate() {
        let text = chunk.join(" ");
        out.push(if i == 0 { format!("{speaker}: {text}") } else { text });
    }
}

struct DebatePlan<'a> {
    seed: u64,
    title: &'a str,
    moderators: [&'a str; 2],
    candidates: [&'a str; 2],
    units: [usize; 2],
    moderator_units: usize,
}

fn debate_raw(plan: &DebatePlan) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let rounds = plan.moderator_units;
    // two turns per candidate per round
    let shares: Vec<Vec<usize>> = plan.units.iter().map(|&n| split_evenly(n, rounds * 2)).collect();
    let mut lines = vec![plan.title.to_string(), String::new()];
    for round in 0..rounds {
        if round % 3 == 0 {
            lines.push(format!("{}:{:02}", 21 + round / 10, (round * 7) % 60));
        }
        if round == rounds / 2 {
            lines.push("(COMMERCIAL BREAK)".into());
            lines.push(String::new());
            lines.push("SECOND HALF".into());
        }
        let topic = TOPICS[round % TOPICS.len()];
        lines.push(format!("{}: What would you do about {topic}?", plan.moderators[round % 2]));
        let first = round % 2;
        for part in 0..2 {
            for k in 0..2 {
                let c = (first + k) % 2;
                let n = shares[c][round * 2 + part];
                let sents: Vec<String> = (0..n).map(|_| sentence(&mut rng)).collect();
                if !sents.is_empty() {
                    push_turn(&mut lines, plan.candidates[c], &sents);
                }
                if rng.random_range(0..6) == 0 {
                    lines.push(["(CROSSTALK)", "[APPLAUSE]", "(LAUGHTER)"][rng.random_range(0..3)].to_string());
                }
            }
        }
        lines.push(String::new());
    }
    lines.push("END OF TRANSCRIPT".into());
    lines.join("\n") + "\n"
}

fn context5_raw() -> String {
    let mut lines = vec!["CONTEXT EXAMPLES".to_string()];
    for (prev_speaker, prev, speaker, target, next) in CONTEXT_ROWS {
        lines.push(format!("{prev_speaker}: {prev}"));
        lines.push(format!("{speaker}: {target} {next}"));
    }
    lines.join("\n") + "\n"
}

fn fixed_time() -> DateTime<Utc> {
    FIXTURE_TIME.parse().expect("valid fixture time")
}

fn code(s: &str) -> TagCode {
    TagCode::parse(s).expect("valid code")
}

fn new_set(set_id: &str, corpus: &Corpus, annotator: &str, provenance: Provenance) -> AnnotationSet {
    AnnotationSet::from_header(SetHeader {
        set_id: set_id.into(),
        debate_id: corpus.debate_id().into(),
        annotator_id: annotator.into(),
        provenance,
        created_at: Some(fixed_time()),
    })
    .expect("valid header")
}

fn annotation(unit: &beads_core::corpus::UnitId, tag: &str, annotator: &str, provenance: Provenance) -> Annotation {
    let mut a = Annotation::new(unit.clone(), code(tag), annotator, provenance);
    a.created_at = fixed_time();
    a
}

fn gold_set(
    store: &Store,
    set_id: &str,
    corpus: &Corpus,
    counts: &[(&str, &[(&str, usize)])],
    seed: u64,
) -> AnnotationSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = new_set(set_id, corpus, "expert", Provenance::Human);
    let mut pools: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (speaker, tags) in counts {
        let mut pool: Vec<&str> = tags.iter().flat_map(|(t, n)| std::iter::repeat(*t).take(*n)).collect();
        pool.shuffle(&mut rng);
        pools.insert(speaker, pool);
    }
    for u in corpus.units() {
        let tag = if corpus.is_moderator(u.speaker) {
            "OQ"
        } else {
            pools.get_mut(u.speaker).and_then(Vec::pop).unwrap_or_else(|| panic!("too many units for {}", u.speaker))
        };
        set.upsert(annotation(&u.unit.unit_id, tag, "expert", Provenance::Human), store.registry(), corpus)
            .expect("gold annotation valid");
    }
    assert!(pools.values().all(Vec::is_empty), "unit counts do not match the tag counts");
    set
}

const ALTERNATIVES: [&str; 6] = ["S", "DIS", "REB", "CH", "SE", "AF"];

fn mock_set(store: &Store, gold: &AnnotationSet, corpus: &Corpus, seed: u64) -> AnnotationSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let units: Vec<_> = gold.iter().map(|a| a.unit_id.clone()).collect();
    let mut picked: Vec<usize> = (0..units.len()).collect();
    picked.shuffle(&mut rng);
    let mut wrong: Vec<usize> = picked[..MOCK_TB_MISMATCHES].to_vec();
    wrong.sort();
    let mut set = new_set("mock_tb", corpus, "fixture-model", Provenance::Model);
    for (i, unit) in units.iter().enumerate() {
        let gold_tag = gold.get(unit).expect("gold unit").primary_tag.clone();
        let mut a = match wrong.binary_search(&i) {
            Err(_) => annotation(unit, gold_tag.as_str(), "fixture-model", Provenance::Model),
            Ok(k) => {
                let alt = ALTERNATIVES.iter().cycle().skip(k).find(|t| **t != gold_tag.as_str()).expect("alternative");
                let mut a = annotation(unit, alt, "fixture-model", Provenance::Model);
                if k % 3 == 0 {
                    a.secondary_tags = vec![gold_tag];
                }
                a
            }
        };
        a.rationale = Some("fixture".into());
        set.upsert(a, store.registry(), corpus).expect("mock annotation valid");
    }
    set
}

fn ingest_into(store: &Store, raw_dir: &Path, debate_id: &str, label: &str, text: &str, moderators: &[&str]) -> Corpus {
    std::fs::write(raw_dir.join(format!("{debate_id}.txt")), text).expect("write raw transcript");
    let raw = RawTranscript::from_text(debate_id, label, text).expect("raw transcript");
    let mods: Vec<String> = moderators.iter().map(|m| m.to_string()).collect();
    let (corpus, removed) = ingest(&raw, &NoiseRules::bundled(), &Segmenter::default(), &mods).expect("ingest");
    store.save_corpus(&corpus, &removed).expect("save corpus");
    corpus
}

fn speaker_units(corpus: &Corpus, speaker: &str) -> usize {
    corpus.units().filter(|u| u.speaker == speaker).count()
}

/// Writes `raw/` and `store/` under `root`.
pub fn write_fixtures(root: &Path) {
    let raw_dir = root.join("raw");
    std::fs::create_dir_all(&raw_dir).expect("create raw dir");
    let store = Store::open_or_create(root.join("store")).expect("open store");

    let total = |c: &[(&str, &[(&str, usize)])], i: usize| c[i].1.iter().map(|(_, n)| n).sum::<usize>();

    let tb_plan = DebatePlan {
        seed: 20_240_627,
        title: "PRESIDENTIAL DEBATE FIXTURE 1",
        moderators: ["TAPPER", "BASH"],
        candidates: ["TRUMP", "BIDEN"],
        units: [total(GOLD_TB, 0), total(GOLD_TB, 1)],
        moderator_units: TB_MODERATOR_UNITS,
    };
    let tb = ingest_into(
        &store,
        &raw_dir,
        "tb2024",
        "synthetic fixture, first debate",
        &debate_raw(&tb_plan),
        &tb_plan.moderators,
    );
    assert_eq!(speaker_units(&tb, "TRUMP"), tb_plan.units[0]);
    assert_eq!(speaker_units(&tb, "BIDEN"), tb_plan.units[1]);
    assert_eq!(tb.len(), tb_plan.units[0] + tb_plan.units[1] + TB_MODERATOR_UNITS);

    let th_plan = DebatePlan {
        seed: 20_240_910,
        title: "PRESIDENTIAL DEBATE FIXTURE 2",
        moderators: ["MUIR", "DAVIS"],
        candidates: ["HARRIS", "TRUMP"],
        units: [total(GOLD_TH, 1), total(GOLD_TH, 0)],
        moderator_units: TH_MODERATOR_UNITS,
    };
    let th = ingest_into(
        &store,
        &raw_dir,
        "th2024",
        "synthetic fixture, second debate",
        &debate_raw(&th_plan),
        &th_plan.moderators,
    );
    assert_eq!(speaker_units(&th, "HARRIS"), th_plan.units[0]);
    assert_eq!(speaker_units(&th, "TRUMP"), th_plan.units[1]);

    let t1 = ingest_into(&store, &raw_dir, "context5", "context examples", &context5_raw(), &["MODERATOR"]);
    assert_eq!(t1.len(), 15);

    let gold_tb = gold_set(&store, "gold_tb", &tb, GOLD_TB, 7);
    let gold_th = gold_set(&store, "gold_th", &th, GOLD_TH, 8);
    let mock_tb = mock_set(&store, &gold_tb, &tb, 9);
    for set in [&gold_tb, &gold_th, &mock_tb] {
        store.save_set(set).expect("save set");
    }
}
