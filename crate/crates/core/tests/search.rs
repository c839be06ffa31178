use augsearch::search::{search, SearchConfig, SearchError, SearchTree, StopReason};
use augsearch::test_support::{hashed_score, planted_score};
use augsearch::transforms::{Magnitude, Probability};
use augsearch::{AugmentationSequence, Rng, TransformKind, TransformSpec};
use std::collections::{BTreeSet, HashSet};
use std::sync::Mutex;
use TransformKind::*;

fn reduced(kinds: &[TransformKind], n: usize) -> SearchConfig {
    SearchConfig {
        sequence_length: n,
        kinds: kinds.to_vec(),
        ..SearchConfig::default()
    }
}

/// Every legal sequence, built without the library's choice enumeration.
fn all_sequences(kinds: &[TransformKind], n: usize) -> Vec<AugmentationSequence> {
    let mut specs = Vec::new();
    for &k in kinds {
        let mags: &[Magnitude] = if matches!(k, Identity | Invert) {
            &[Magnitude::Low]
        } else {
            &Magnitude::ALL
        };
        for &m in mags {
            for p in Probability::ALL {
                specs.push(TransformSpec::new(k, m, p));
            }
        }
    }
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<TransformSpec>| {
                specs
                    .iter()
                    .filter(|s| s.kind == Identity || prefix.iter().all(|p| p.kind != s.kind))
                    .map(|s| {
                        let mut v = prefix.clone();
                        v.push(*s);
                        v
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
    }
    out.into_iter()
        .map(|v| AugmentationSequence::new(v).unwrap())
        .collect()
}

#[test]
fn sampled_sequences_are_legal_and_full_length() {
    let cfg = SearchConfig::default();
    let mut tree = SearchTree::new(cfg).unwrap();
    let mut rng = Rng::new(3);
    for i in 0..10_000 {
        let p = tree.sample_path(&mut rng);
        assert_eq!(p.sequence.len(), 8);
        assert!(AugmentationSequence::new(p.sequence.specs().to_vec()).is_ok());
        tree.update(&p, hashed_score(&p.sequence, i % 7)).unwrap();
    }
}

#[test]
fn fresh_tree_samples_spread_over_first_slot() {
    let mut counts = std::collections::HashMap::new();
    for seed in 0..3000 {
        let mut tree = SearchTree::new(SearchConfig::default()).unwrap();
        let p = tree.sample_path(&mut Rng::new(seed));
        *counts.entry(p.sequence.specs()[0].kind).or_insert(0) += 1;
    }
    // 60 distinct first choices; Identity and Invert have 3 each, others 6.
    for k in TransformKind::ALL {
        let expected = if matches!(k, Identity | Invert) {
            3000.0 * 3.0 / 60.0
        } else {
            3000.0 * 6.0 / 60.0
        };
        let got = counts[&k] as f64;
        assert!(
            (got - expected).abs() < 5.0 * expected.sqrt(),
            "{k}: {got} vs {expected}"
        );
    }
}

#[test]
fn constant_scorer_with_patience_one_stops_after_two() {
    let cfg = SearchConfig {
        plateau_patience: 1,
        ..SearchConfig::default()
    };
    let r = search(&|_: &AugmentationSequence| 0.5, &cfg, 1, &mut |_| {}).unwrap();
    assert_eq!(r.log.len(), 2);
    assert_eq!(r.stop, StopReason::Plateau);
}

#[test]
fn tree_invariants_hold_after_search() {
    let cfg = SearchConfig {
        plateau_patience: 10_000,
        max_iterations: 600,
        sequence_length: 4,
        ..SearchConfig::default()
    };
    let r = search(
        &|s: &AugmentationSequence| hashed_score(s, 1),
        &cfg,
        1,
        &mut |_| {},
    )
    .unwrap();
    let t = &r.tree;
    assert_eq!(t.node(0).visits as usize, r.iterations);
    for id in 0..t.node_count() {
        let n = t.node(id);
        assert_eq!(n.pending, 0);
        let q = n.q();
        assert!((0.0..=1.0).contains(&q));
        let below: u64 = n.children.iter().map(|&c| t.node(c).visits).sum();
        // A node ends exactly one path (the one that expanded it) unless it
        // is the root or a full-length leaf.
        match n.depth {
            0 => assert_eq!(n.visits, below),
            4 => assert!(n.children.is_empty()),
            _ => assert_eq!(n.visits, below + 1, "node {id}"),
        }
        let used: BTreeSet<_> = t
            .prefix(id)
            .iter()
            .map(|s| s.kind)
            .filter(|k| *k != Identity)
            .collect();
        for &c in &n.children {
            let k = t.node(c).spec.unwrap().kind;
            assert!(
                k == Identity || !used.contains(&k),
                "node {id} offers used kind {k}"
            );
        }
    }
}

#[test]
fn cache_prevents_rescoring() {
    let calls = Mutex::new(Vec::new());
    let scorer = |s: &AugmentationSequence| {
        calls.lock().unwrap().push(s.clone());
        hashed_score(s, 5)
    };
    let cfg = SearchConfig {
        plateau_patience: 10_000,
        max_iterations: 400,
        ..reduced(&[Cutout, Invert], 2)
    };
    let r = search(&scorer, &cfg, 1, &mut |_| {}).unwrap();
    let calls = calls.into_inner().unwrap();
    let unique: HashSet<_> = calls.iter().collect();
    assert_eq!(calls.len(), unique.len());
    assert_eq!(calls.len(), r.log.len());
    assert_eq!(r.stop, StopReason::Exhausted);
    assert_eq!(unique.len(), all_sequences(&[Cutout, Invert], 2).len());
}

#[test]
fn result_matches_log() {
    let cfg = SearchConfig {
        max_iterations: 300,
        ..SearchConfig::default()
    };
    let r = search(
        &|s: &AugmentationSequence| hashed_score(s, 9),
        &cfg,
        1,
        &mut |_| {},
    )
    .unwrap();
    let min = r.log.iter().map(|e| e.score).fold(f64::INFINITY, f64::min);
    assert_eq!(r.best_score, min);
    assert_eq!(r.tree.cached(&r.best_sequence), Some(min));
    for w in r.log.windows(2) {
        assert!(w[1].best_so_far <= w[0].best_so_far);
    }
}

#[test]
fn single_worker_is_reproducible() {
    let cfg = SearchConfig {
        max_iterations: 200,
        seed: 4,
        ..SearchConfig::default()
    };
    let run = || {
        search(
            &|s: &AugmentationSequence| hashed_score(s, 2),
            &cfg,
            1,
            &mut |_| {},
        )
        .unwrap()
        .log
    };
    assert_eq!(run(), run());
}

#[test]
fn parallel_workers_never_duplicate_work() {
    let calls = Mutex::new(Vec::new());
    let scorer = |s: &AugmentationSequence| {
        calls.lock().unwrap().push(s.clone());
        std::thread::sleep(std::time::Duration::from_micros(200));
        hashed_score(s, 3)
    };
    let cfg = SearchConfig {
        plateau_patience: 10_000,
        max_iterations: 2_000,
        ..reduced(&[Cutout, Invert, Scale], 2)
    };
    let mut seen = 0;
    let r = search(&scorer, &cfg, 4, &mut |_| seen += 1).unwrap();
    let calls = calls.into_inner().unwrap();
    let unique: HashSet<_> = calls.iter().collect();
    assert_eq!(calls.len(), unique.len());
    assert_eq!(seen, r.log.len());
    let best = all_sequences(&[Cutout, Invert, Scale], 2)
        .iter()
        .map(|s| hashed_score(s, 3))
        .fold(f64::INFINITY, f64::min);
    assert_eq!(r.best_score, best);
    for id in 0..r.tree.node_count() {
        assert_eq!(r.tree.node(id).pending, 0);
    }
}

#[derive(Debug)]
struct Broken;
impl std::fmt::Display for Broken {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("scorer broke")
    }
}
impl std::error::Error for Broken {}

struct FailsOnThird(Mutex<usize>);
impl augsearch::search::Scorer for FailsOnThird {
    fn score(
        &self,
        s: &AugmentationSequence,
    ) -> Result<f64, Box<dyn std::error::Error + Send + Sync>> {
        let mut n = self.0.lock().unwrap();
        *n += 1;
        if *n == 3 {
            return Err(Box::new(Broken));
        }
        Ok(hashed_score(s, 0))
    }
}

#[test]
fn scorer_failure_keeps_partial_log() {
    let err = search(
        &FailsOnThird(Mutex::new(0)),
        &SearchConfig::default(),
        1,
        &mut |_| {},
    )
    .unwrap_err();
    match err {
        SearchError::Scorer { log, source, .. } => {
            assert_eq!(log.len(), 2);
            assert_eq!(source.to_string(), "scorer broke");
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn bad_configs_rejected() {
    for cfg in [
        SearchConfig {
            reward_baseline: 0.0,
            ..SearchConfig::default()
        },
        SearchConfig {
            plateau_patience: 0,
            ..SearchConfig::default()
        },
        SearchConfig {
            kinds: vec![Cutout, Cutout],
            ..SearchConfig::default()
        },
        reduced(&[Cutout, Scale], 3),
    ] {
        assert!(matches!(SearchTree::new(cfg), Err(SearchError::Config(_))));
    }
}

#[test]
fn brute_force_optimum_on_tiny_space() {
    let kinds = [Cutout, Invert, WhiteNoise];
    let space = all_sequences(&kinds, 2);
    for seed in 0..20 {
        let best = space
            .iter()
            .map(|s| hashed_score(s, seed))
            .fold(f64::INFINITY, f64::min);
        let cfg = SearchConfig {
            seed,
            plateau_patience: 100_000,
            max_iterations: 100_000,
            ..reduced(&kinds, 2)
        };
        let r = search(
            &|s: &AugmentationSequence| hashed_score(s, seed),
            &cfg,
            1,
            &mut |_| {},
        )
        .unwrap();
        assert_eq!(r.best_score, best, "seed {seed}");
    }
}

#[test]
fn planted_target_found_quickly() {
    let kinds = [Cutout, Scale, WhiteNoise, SaltNoise];
    let space = all_sequences(&kinds, 3);
    let mut hits = 0;
    for seed in 0..20u64 {
        let target = &space[Rng::new(seed + 100).below(space.len() as u64) as usize];
        let cfg = SearchConfig {
            seed,
            reward_baseline: 3.0,
            exploration_c: 0.5,
            plateau_patience: 500,
            max_iterations: 5_000,
            ..reduced(&kinds, 3)
        };
        let r = search(
            &|s: &AugmentationSequence| planted_score(s, target),
            &cfg,
            1,
            &mut |_| {},
        )
        .unwrap();
        if r.log.iter().take(500).any(|e| e.score == 0.0) {
            hits += 1;
        }
    }
    assert!(hits >= 19, "{hits}/20");
}

#[test]
fn beats_random_search_on_planted_space() {
    let kinds = [Cutout, Scale, WhiteNoise, SaltNoise];
    let space = all_sequences(&kinds, 3);
    let k = 200;
    let (mut tree_best, mut random_best) = (Vec::new(), Vec::new());
    for seed in 0..20u64 {
        let target = &space[Rng::new(seed + 500).below(space.len() as u64) as usize];
        let cfg = SearchConfig {
            seed,
            exploration_c: 0.5,
            reward_baseline: 3.0,
            plateau_patience: 10_000,
            max_iterations: 10_000,
            ..reduced(&kinds, 3)
        };
        let mut evals = 0;
        let scorer = |s: &AugmentationSequence| planted_score(s, target);
        let r = search(&scorer, &cfg, 1, &mut |_| evals += 1).unwrap();
        assert!(evals >= k || r.stop == StopReason::Exhausted);
        tree_best.push(
            r.log
                .iter()
                .take(k)
                .map(|e| e.score)
                .fold(f64::INFINITY, f64::min),
        );
        let mut rng = Rng::new(seed);
        random_best.push(
            (0..k)
                .map(|_| planted_score(&space[rng.below(space.len() as u64) as usize], target))
                .fold(f64::INFINITY, f64::min),
        );
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        (v[9] + v[10]) / 2.0
    };
    let (t, r) = (median(&mut tree_best), median(&mut random_best));
    assert!(t <= r, "tree {t} vs random {r}");
}
