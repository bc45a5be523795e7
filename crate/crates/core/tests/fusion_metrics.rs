use std::collections::BTreeMap;

use memadapter::fusion::{fuse_max, fuse_states, retrieve_fused, FusionError};
use memadapter::graph::{verify_subset, Edge, MemoryGraph, Node, NodeId};
use memadapter::metrics::{
    contains_answer, evaluate, exact_match, mem_length, memory_utilization, normalize_answer, rouge1, token_f1,
    unique_ratio, AnswerPair, MemoryRecord, MetricsError,
};
use memadapter::retriever::{generate_subgraph, QueryEmbedding, RetrieverDims, RetrieverModel, VocabMode, Vocabulary};
use memadapter::space::{align_forward, AlignmentModule, MemoryState, ParadigmRegistry};
use memadapter::UnifiedVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uv(v: &[f64]) -> UnifiedVector {
    UnifiedVector(v.to_vec())
}

#[test]
fn fuse_max_examples() {
    assert_eq!(fuse_max(&[uv(&[1.0, 2.0]), uv(&[3.0, 0.0])]).unwrap().values, uv(&[3.0, 2.0]));
    assert_eq!(fuse_max(&[uv(&[-1.0, -2.0]), uv(&[-3.0, -1.0])]).unwrap().values, uv(&[-1.0, -1.0]));
    assert_eq!(fuse_max(&[uv(&[0.25, -9.0])]).unwrap().values, uv(&[0.25, -9.0]));
    assert!(matches!(fuse_max(&[]), Err(FusionError::Empty)));
    assert!(matches!(fuse_max(&[uv(&[1.0]), uv(&[1.0, 1.0])]), Err(FusionError::DimensionMismatch { .. })));
}

fn vectors(dim: usize, max: usize) -> impl Strategy<Value = Vec<UnifiedVector>> {
    prop::collection::vec(prop::collection::vec(-1e3f64..1e3, dim).prop_map(UnifiedVector), 1..max)
}

proptest! {
    #[test]
    fn fuse_max_is_idempotent(v in prop::collection::vec(-1e3f64..1e3, 1..16)) {
        let v = UnifiedVector(v);
        prop_assert_eq!(fuse_max(&[v.clone(), v.clone()]).unwrap().values, v);
    }

    #[test]
    fn adding_an_input_never_lowers_a_coordinate(vs in vectors(6, 6), extra in prop::collection::vec(-1e3f64..1e3, 6)) {
        let before = fuse_max(&vs).unwrap().values;
        let mut more = vs.clone();
        more.push(UnifiedVector(extra));
        let after = fuse_max(&more).unwrap();
        prop_assert!(after.values.values().iter().zip(before.values()).all(|(a, b)| a >= b));
        prop_assert_eq!(after.provenance.len(), vs.len() + 1);
    }

    #[test]
    fn fuse_max_ignores_order_and_grouping(vs in vectors(5, 8), seed in any::<u64>()) {
        let mut shuffled = vs.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
        let whole = fuse_max(&vs).unwrap().values;
        prop_assert_eq!(&fuse_max(&shuffled).unwrap().values, &whole);
        let split = vs.len() / 2;
        if split > 0 {
            let left = fuse_max(&vs[..split]).unwrap().values;
            let right = fuse_max(&vs[split..]).unwrap().values;
            prop_assert_eq!(fuse_max(&[left, right]).unwrap().values, whole);
        }
    }
}

struct Setup {
    registry: ParadigmRegistry,
    modules: BTreeMap<memadapter::ParadigmId, AlignmentModule>,
    retriever: RetrieverModel,
    vocab: Vocabulary,
    full: MemoryGraph,
}

fn setup(seed: u64) -> Setup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut registry = ParadigmRegistry::new(8).unwrap();
    let mut modules = BTreeMap::new();
    for (name, dim) in [("anchor", 6), ("second", 5), ("third", 7)] {
        let id = registry.register_paradigm(name, dim, seed).unwrap();
        modules.insert(id, AlignmentModule::random(dim, 10, 4, &mut rng));
    }
    let n = |k: u64, d: &str| Node::new(NodeId::from_index(k), d).unwrap();
    let e = |a: u64, b: u64, r: &str| Edge::new(NodeId::from_index(a), NodeId::from_index(b), r).unwrap();
    let full = MemoryGraph::new(
        vec![n(1, "red fox"), n(2, "forest"), n(3, "owl"), n(4, "barn")],
        vec![e(1, 2, "lives in"), e(3, 4, "lives in"), e(3, 1, "hunts")],
    )
    .unwrap();
    let vocab = Vocabulary::from_graphs([&full], [], VocabMode::Open);
    let retriever =
        RetrieverModel::random(RetrieverDims { vocab: vocab.len(), model: 12, query: 3, unified: 4 }, &mut rng);
    Setup { registry, modules, retriever, vocab, full }
}

fn state(s: &Setup, name: &str, rng: &mut ChaCha8Rng) -> MemoryState {
    let paradigm = s.registry.id(name).unwrap();
    let raw = (0..s.registry.dim(&paradigm).unwrap()).map(|_| rng.random_range(-2.0..2.0)).collect();
    MemoryState { paradigm, raw }
}

#[test]
fn single_state_fusion_equals_plain_retrieval() {
    let s = setup(31);
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..25 {
        let st = state(&s, "anchor", &mut rng);
        let q = QueryEmbedding((0..3).map(|_| rng.random_range(-1.0..1.0)).collect());
        let h = align_forward(&s.modules[&st.paradigm], &st).unwrap();
        let plain = generate_subgraph(&s.retriever, &s.vocab, &s.full, &q, &h, 200).unwrap();
        let fused = retrieve_fused(&[st], &s.modules, &s.retriever, &s.vocab, &s.full, &q, 200).unwrap();
        assert_eq!(fused, plain);
        assert!(verify_subset(&fused, &s.full).accepted);
    }
}

#[test]
fn fused_retrieval_ignores_state_order() {
    let s = setup(33);
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..25 {
        let states = vec![state(&s, "anchor", &mut rng), state(&s, "second", &mut rng), state(&s, "third", &mut rng)];
        let q = QueryEmbedding((0..3).map(|_| rng.random_range(-1.0..1.0)).collect());
        let forward = retrieve_fused(&states, &s.modules, &s.retriever, &s.vocab, &s.full, &q, 200).unwrap();
        let reversed: Vec<MemoryState> = states.iter().rev().cloned().collect();
        assert_eq!(retrieve_fused(&reversed, &s.modules, &s.retriever, &s.vocab, &s.full, &q, 200).unwrap(), forward);
        assert!(verify_subset(&forward, &s.full).accepted);
    }
}

#[test]
fn fusing_states_needs_a_module_per_paradigm() {
    let s = setup(35);
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let st = state(&s, "second", &mut rng);
    let mut modules = s.modules.clone();
    modules.remove(&st.paradigm);
    assert!(matches!(fuse_states(&[st], &modules), Err(FusionError::MissingModule(_))));
}

fn pair(pred: &str, golds: &[&str]) -> AnswerPair {
    AnswerPair::new(pred, golds.iter().copied())
}

fn record(text: &str, answer: &str, gold: bool) -> MemoryRecord {
    MemoryRecord { retrieved_text: text.into(), gold_answer: answer.into(), has_gold_evidence: gold }
}

#[test]
fn normalization_examples() {
    assert_eq!(normalize_answer("The Paris."), "paris");
    assert_eq!(normalize_answer("  HELLO  world "), "hello world");
    assert_eq!(normalize_answer("a an the"), "");
}

#[test]
fn answer_metric_examples() {
    assert_eq!(exact_match(&pair("Paris", &["paris"])), 1);
    assert_eq!(exact_match(&pair("London", &["Paris"])), 0);
    assert_eq!(exact_match(&pair("the Eiffel Tower", &["Eiffel Tower"])), 1);
    assert_eq!(exact_match(&pair("Rome", &["Paris", "rome"])), 1);

    assert!((token_f1(&pair("x b c", &["b c d"])) - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(token_f1(&pair("blue whale", &["blue whale"])), 1.0);
    assert_eq!(token_f1(&pair("red", &["blue"])), 0.0);
    assert_eq!(token_f1(&pair("the", &["a"])), 1.0);
    assert_eq!(token_f1(&pair("", &["blue"])), 0.0);

    assert_eq!(rouge1(&pair("blue whale", &["blue whale"])), 1.0);
    assert!((rouge1(&pair("cat cat", &["cat"])) - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(rouge1(&pair("", &["cat"])), 0.0);
}

#[test]
fn memory_metric_examples() {
    assert_eq!(mem_length(&[record("abc", "", false)]).unwrap(), 3.0);
    assert_eq!(mem_length(&[record("ab", "", false), record("abcd", "", false)]).unwrap(), 3.0);
    assert_eq!(mem_length(&[record("é日", "", false)]).unwrap(), 2.0);
    assert!(matches!(mem_length(&[]), Err(MetricsError::Empty)));

    assert_eq!(unique_ratio(&[record("a b a c", "", false)]).unwrap(), 0.75);
    assert_eq!(unique_ratio(&[record("x x x x", "", false)]).unwrap(), 0.25);
    assert_eq!(unique_ratio(&[record("p q r", "", false), record("", "", false)]).unwrap(), 1.0);
    assert!(unique_ratio(&[record("  ", "", false)]).is_err());

    let hits = [true, false, true, false, true];
    let records: Vec<MemoryRecord> = hits
        .iter()
        .map(|&hit| record(if hit { "N1: paris city" } else { "N1: rome" }, "Paris", true))
        .chain(std::iter::once(record("paris", "paris", false)))
        .collect();
    assert_eq!(memory_utilization(&records).unwrap(), 0.6);
    assert_eq!(memory_utilization(&[record("nothing", "paris", true)]).unwrap(), 0.0);
    assert!(matches!(memory_utilization(&[record("x", "x", false)]), Err(MetricsError::NoGoldEvidence)));

    assert!(!contains_answer("N1: new city\nN2: york", "new york"));
    assert!(contains_answer("N1: New York city", "new york"));
}

#[test]
fn evaluate_reports_all_metrics() {
    let answers = [pair("Paris", &["paris"]), pair("London", &["Paris"])];
    let records = [record("paris is here", "paris", true), record("rome rome", "paris", true)];
    let report = evaluate(&answers, &records).unwrap();
    assert_eq!(report.n, 2);
    assert_eq!(report.em, 0.5);
    assert_eq!(report.f1, 0.5);
    assert_eq!(report.utilization, 0.5);
    assert_eq!(report.mem_length, 11.0);
    assert_eq!(report.unique_ratio, 0.75);
    assert!(evaluate(&[], &records).is_err());
}
