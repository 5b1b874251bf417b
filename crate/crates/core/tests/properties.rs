use beads_core::agreement::{cohen_kappa, compare, AgreementError, ConfusionMatrix};
use beads_core::analytics::{tag_frequencies, CountMode, FrequencyOptions};
use beads_core::annotation::{Annotation, AnnotationSet, Provenance};
use beads_core::corpus::{ingest, Corpus, NoiseRules, RawTranscript, Segmenter};
use beads_core::schema::{load_registry, TagCode, TagRegistry};
use proptest::prelude::*;

const POOL: [&str; 5] = ["S", "CH", "AF", "SE", "PD"];

/// (primary index, secondary mask) per unit, or None when unannotated.
type Plan = Vec<Option<(usize, u8)>>;

fn corpus(n: usize) -> Corpus {
    let text: String = (0..n).map(|i| format!("{}: Unit number {i} here.\n", ["AA", "BB", "CC"][i % 3])).collect();
    let raw = RawTranscript::from_text("p", "", &text).unwrap();
    ingest(&raw, &NoiseRules::bundled(), &Segmenter::default(), &[]).unwrap().0
}

fn build(id: &str, plan: &Plan, c: &Corpus, reg: &TagRegistry, relabel: &[usize; 5], order: &[usize]) -> AnnotationSet {
    let mut s = AnnotationSet::new(id, "p", id, Provenance::Human).unwrap();
    let units: Vec<_> = c.units().map(|u| u.unit.unit_id.clone()).collect();
    for &i in order {
        let Some((p, mask)) = plan[i] else { continue };
        let tag = |k: usize| TagCode::parse(POOL[relabel[k]]).unwrap();
        let secondary: Vec<TagCode> = (0..5).filter(|k| *k != p && mask & (1 << k) != 0).map(tag).collect();
        s.upsert(Annotation::new(units[i].clone(), tag(p), id, Provenance::Human).with_secondary(secondary), reg, c)
            .unwrap();
    }
    s
}

fn plan_strategy() -> impl Strategy<Value = (Plan, Plan)> {
    (1usize..=20).prop_flat_map(|n| {
        let unit = prop::option::weighted(0.85, (0usize..5, 0u8..32));
        (prop::collection::vec(unit.clone(), n), prop::collection::vec(unit, n))
    })
}

/// Textbook kappa from explicit proportions.
fn oracle_kappa(pairs: &[(usize, usize)]) -> f64 {
    let n = pairs.len() as f64;
    let p_o = pairs.iter().filter(|(a, b)| a == b).count() as f64 / n;
    let p_e: f64 = (0..5)
        .map(|t| {
            let r = pairs.iter().filter(|(a, _)| *a == t).count() as f64 / n;
            let c = pairs.iter().filter(|(_, b)| *b == t).count() as f64 / n;
            r * c
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        1.0
    } else {
        (p_o - p_e) / (1.0 - p_e)
    }
}

fn registry() -> &'static TagRegistry {
    static REG: std::sync::OnceLock<TagRegistry> = std::sync::OnceLock::new();
    REG.get_or_init(|| load_registry(None).unwrap())
}

const IDENTITY: [usize; 5] = [0, 1, 2, 3, 4];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn agreement_matches_brute_force((g, o) in plan_strategy()) {
        let reg = registry();
        let c = corpus(g.len());
        let order: Vec<usize> = (0..g.len()).collect();
        let gold = build("g", &g, &c, reg, &IDENTITY, &order);
        let other = build("o", &o, &c, reg, &IDENTITY, &order);

        let mut pairs = Vec::new();
        let mut overlap = 0usize;
        for (a, b) in g.iter().zip(&o) {
            if let (Some((pa, ma)), Some((pb, mb))) = (a, b) {
                pairs.push((*pa, *pb));
                let set_a = ma | (1 << pa);
                let set_b = mb | (1 << pb);
                if set_a & set_b != 0 {
                    overlap += 1;
                }
            }
        }
        match compare(&gold, &other, &c) {
            Err(AgreementError::EmptyIntersection) => prop_assert!(pairs.is_empty()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
            Ok(r) => {
                let n = pairs.len();
                let matches = pairs.iter().filter(|(a, b)| a == b).count();
                prop_assert_eq!(r.compared_units, n);
                prop_assert_eq!(r.exact_match_rate, matches as f64 / n as f64);
                prop_assert_eq!(r.overlap_rate, overlap as f64 / n as f64);
                prop_assert!(r.exact_match_rate <= r.overlap_rate);
                prop_assert_eq!(r.discrepancies.len(), n - matches);
                prop_assert_eq!(r.confusion.total() as usize, n);
                prop_assert!((r.kappa - oracle_kappa(&pairs)).abs() < 1e-9, "{} vs {}", r.kappa, oracle_kappa(&pairs));
                prop_assert!((-1.0..=1.0).contains(&r.kappa));
                prop_assert!(r.discrepancies.windows(2).all(|w| w[0].unit_id < w[1].unit_id));
                // row marginals are gold's primary counts over common units
                for (i, label) in r.confusion.labels().iter().enumerate() {
                    let k = POOL.iter().position(|p| *p == label.as_str()).unwrap();
                    prop_assert_eq!(r.confusion.row_totals()[i] as usize, pairs.iter().filter(|(a, _)| *a == k).count());
                }
                let selfr = compare(&gold, &gold, &c).unwrap();
                prop_assert_eq!(selfr.kappa, 1.0);
                prop_assert_eq!(selfr.exact_match_rate, 1.0);
            }
        }
    }

    #[test]
    fn relabeling_preserves_rates((g, o) in plan_strategy(), perm in Just(IDENTITY).prop_shuffle()) {
        let reg = registry();
        let c = corpus(g.len());
        let order: Vec<usize> = (0..g.len()).collect();
        let a = compare(&build("g", &g, &c, reg, &IDENTITY, &order), &build("o", &o, &c, reg, &IDENTITY, &order), &c);
        let b = compare(&build("g", &g, &c, reg, &perm, &order), &build("o", &o, &c, reg, &perm, &order), &c);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.exact_match_rate, b.exact_match_rate);
                prop_assert!((a.kappa - b.kappa).abs() < 1e-12);
            }
            (Err(AgreementError::EmptyIntersection), Err(AgreementError::EmptyIntersection)) => {}
            _ => prop_assert!(false, "outcomes differ"),
        }
    }

    #[test]
    fn kappa_bounds_on_random_matrices(cells in prop::collection::vec(0u64..50, 9)) {
        let labels: Vec<TagCode> = ["A", "B", "C"].iter().map(|l| TagCode::parse(l).unwrap()).collect();
        let counts: Vec<Vec<u64>> = cells.chunks(3).map(|r| r.to_vec()).collect();
        let m = ConfusionMatrix::from_counts(labels, counts.clone()).unwrap();
        match cohen_kappa(&m) {
            Err(_) => prop_assert_eq!(m.total(), 0),
            Ok(k) => {
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&k));
                let diagonal = (0..3).all(|i| (0..3).all(|j| i == j || counts[i][j] == 0));
                prop_assert_eq!(k == 1.0, diagonal);
            }
        }
    }

    #[test]
    fn primary_counts_partition_units(plan in prop::collection::vec(prop::option::of((0usize..5, 0u8..32)), 1..20)) {
        let reg = registry();
        let c = corpus(plan.len());
        let order: Vec<usize> = (0..plan.len()).collect();
        let s = build("g", &plan, &c, reg, &IDENTITY, &order);
        let t = tag_frequencies(&s, &c, FrequencyOptions::default()).unwrap();
        for sp in &t.speakers {
            let sum: u64 = t.counts.values().map(|m| m.get(sp).copied().unwrap_or(0)).sum();
            prop_assert_eq!(sum, t.annotated_units_by_speaker[sp]);
            prop_assert!(sum <= t.total_units_by_speaker[sp]);
        }
        let all = tag_frequencies(&s, &c, FrequencyOptions { mode: CountMode::IncludeSecondary, ..Default::default() }).unwrap();
        let tags_total: u64 = all.counts.values().flat_map(|m| m.values()).sum();
        prop_assert_eq!(tags_total as usize, s.iter().map(|a| 1 + a.secondary_tags.len()).sum::<usize>());
    }

    #[test]
    fn frequencies_ignore_insertion_order(
        plan in prop::collection::vec(prop::option::of((0usize..5, 0u8..32)), 1..20),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let reg = registry();
        let c = corpus(plan.len());
        let order: Vec<usize> = (0..plan.len()).collect();
        let mut shuffled = order.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = tag_frequencies(&build("g", &plan, &c, reg, &IDENTITY, &order), &c, FrequencyOptions::default()).unwrap();
        let b = tag_frequencies(&build("g", &plan, &c, reg, &IDENTITY, &shuffled), &c, FrequencyOptions::default()).unwrap();
        prop_assert_eq!(a, b);
    }
}
