//! Independent oracles over generated datasets: chain following, table
//! lookup, leakage scans and split properties.

use std::collections::{BTreeMap, BTreeSet};

use statrs::distribution::{ChiSquared, ContinuousCDF};

use gmem_core::tasks::{self, Dataset, SyntheticExample, TaskConfig, TaskKind, ANSWER, MARK, QUERY};

fn cfg(kind: TaskKind, hops: usize, distractors: usize, gap: usize) -> TaskConfig {
    TaskConfig {
        kind,
        hops,
        distractors,
        gap,
        train_examples: 300,
        test_examples: 100,
        ..TaskConfig::default()
    }
}

/// All `(subject, relation) → objects` triples written in the fact segments.
fn fact_table(ex: &SyntheticExample, c: &TaskConfig) -> BTreeMap<(usize, usize), Vec<usize>> {
    let a = c.alphabet();
    let mut table: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for seg in &ex.segments[..ex.segments.len() - 1] {
        if seg.iter().all(|&t| a.is_filler(t)) {
            continue;
        }
        assert_eq!(seg.len() % 3, 0, "fact segment {seg:?} is not made of triples");
        for f in seg.chunks(3) {
            assert!(a.is_entity(f[0]) && a.is_relation(f[1]) && a.is_entity(f[2]), "bad fact {f:?}");
            table.entry((f[0], f[1])).or_default().push(f[2]);
        }
    }
    table
}

/// Follows `subject r1 r2 ...` through the table; `None` on a missing or
/// ambiguous link.
fn follow(table: &BTreeMap<(usize, usize), Vec<usize>>, start: usize, relations: &[usize]) -> Option<usize> {
    relations.iter().try_fold(start, |e, r| match table.get(&(e, *r)).map(|v| v.as_slice()) {
        Some([only]) => Some(*only),
        _ => None,
    })
}

fn check_bridge(data: &Dataset, c: &TaskConfig) {
    let a = c.alphabet();
    for ex in &data.examples {
        let q = ex.query_segment();
        assert_eq!(q[0], QUERY);
        let relations = &q[2..2 + c.hops];
        assert_eq!(q[2 + c.hops], ANSWER);
        let table = fact_table(ex, c);
        assert_eq!(follow(&table, q[1], relations), Some(ex.answer_tokens[0]), "{}", ex.to_line());
        // no second path: every entity is used once per episode
        let ents: Vec<usize> = ex.segments[..ex.segments.len() - 1]
            .concat()
            .into_iter()
            .filter(|&t| a.is_entity(t))
            .collect();
        let distinct: BTreeSet<usize> = ents.iter().copied().collect();
        assert_eq!(distinct.len() + c.hops - 1, ents.len(), "entity reuse beyond the bridge chain");
    }
}

#[test]
fn chain_follower_reproduces_every_bridge_answer() {
    for (hops, distractors, gap) in [(1, 0, 1), (1, 4, 2), (2, 4, 2), (2, 2, 3), (3, 1, 4)] {
        let c = cfg(TaskKind::Bridge, hops, distractors, gap);
        let data = tasks::gen_bridge_recall(&c).unwrap();
        assert_eq!(data.examples.len(), 400);
        check_bridge(&data, &c);
    }
}

#[test]
fn table_lookup_reproduces_every_relation_answer() {
    let c = cfg(TaskKind::Relation, 1, 3, 2);
    let data = tasks::gen_relation_recall(&c).unwrap();
    for ex in &data.examples {
        let q = ex.query_segment();
        let table = fact_table(ex, &c);
        assert_eq!(table.get(&(q[1], q[2])), Some(&vec![ex.answer_tokens[0]]));
    }
}

#[test]
fn held_out_pairs_never_queried_in_training() {
    let c = cfg(TaskKind::Relation, 1, 2, 1);
    let data = tasks::gen_relation_recall(&c).unwrap();
    let pair = |e: &SyntheticExample| (e.query_segment()[1], e.query_segment()[2]);
    let train: BTreeSet<_> = data.split("train").iter().map(pair).collect();
    let test: BTreeSet<_> = data.split("test").iter().map(pair).collect();
    assert!(train.is_disjoint(&test));
    let held = tasks::held_out_pairs(&c);
    assert!(test.is_subset(&held));
    // held-out pairs are not even shown as training distractor facts
    for ex in data.split("train") {
        for (k, _) in fact_table(&ex, &c) {
            assert!(!held.contains(&k));
        }
    }
}

#[test]
fn copy_answer_is_the_token_after_the_mark() {
    for gap in [0, 1, 3] {
        let c = TaskConfig {
            filler_len: if gap == 0 { 10 } else { 12 },
            ..cfg(TaskKind::LongCopy, 1, 0, gap)
        };
        let data = tasks::gen_long_copy(&c).unwrap();
        for ex in &data.examples {
            let src = &ex.segments[0];
            let at = src.iter().position(|&t| t == MARK).unwrap();
            assert_eq!(src[at + 1], ex.answer_tokens[0]);
            assert_eq!(ex.segments.len(), if gap == 0 { 1 } else { gap + 1 });
        }
    }
}

#[test]
fn answers_never_leak_into_the_query_prefix() {
    let configs = [
        cfg(TaskKind::Bridge, 2, 4, 2),
        cfg(TaskKind::Bridge, 1, 4, 3),
        cfg(TaskKind::Relation, 1, 4, 2),
        cfg(TaskKind::LongCopy, 1, 0, 2),
    ];
    for c in configs {
        let data = tasks::generate_task(&c).unwrap();
        for ex in &data.examples {
            let q = ex.query_segment();
            let first = *ex.answer_positions.iter().min().unwrap();
            for a in &ex.answer_tokens {
                assert!(!q[..first].contains(a), "leak in {}", ex.to_line());
            }
            for (&p, &a) in ex.answer_positions.iter().zip(&ex.answer_tokens) {
                assert_eq!(q[p], a);
            }
        }
    }
}

#[test]
fn identical_config_gives_identical_bytes_and_seed_changes_them() {
    let c = cfg(TaskKind::Bridge, 2, 4, 2);
    let a = tasks::generate_task(&c).unwrap().to_text();
    assert_eq!(a, tasks::generate_task(&c).unwrap().to_text());
    let other = TaskConfig { seed: c.seed + 1, ..c };
    assert_ne!(a, tasks::generate_task(&other).unwrap().to_text());
    assert_eq!(Dataset::parse(&a).unwrap().to_text(), a);
}

#[test]
fn answers_cover_the_entity_vocabulary_evenly() {
    let c = TaskConfig {
        train_examples: 4000,
        test_examples: 0,
        ..cfg(TaskKind::Bridge, 2, 4, 2)
    };
    let data = tasks::generate_task(&c).unwrap();
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for ex in &data.examples {
        *counts.entry(ex.answer_tokens[0]).or_default() += 1;
    }
    assert_eq!(counts.len(), c.entities);
    let expected = 4000.0 / c.entities as f64;
    let chi2: f64 = counts.values().map(|&n| (n as f64 - expected).powi(2) / expected).sum();
    let limit = ChiSquared::new((c.entities - 1) as f64).unwrap().inverse_cdf(0.999);
    assert!(chi2 < limit, "chi2 {chi2} >= {limit}");
}
