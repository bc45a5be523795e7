use std::io::Cursor;

use memadapter::graph::{verify_subset, ViolationKind};
use memadapter::harness::checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, section, CheckpointError, Tensor, MAGIC,
};
use memadapter::harness::config::EngineConfig;
use memadapter::harness::corpus::corpus_to_jsonl;
use memadapter::harness::{generate_synthetic_corpus, parse_corpus, CorpusError, SynthParams};
use memadapter::seed::{component_rng, fnv1a64, subseed};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FULL: &str = "[FULL_GRAPH]\n<NODES>\nN1: alice\nN2: acme\n<EDGES>\nN1 -> N2: works at";
const GOLD: &str = "[EVIDENCE_SUBGRAPH]\n<NODES>\nN1: alice\n<EDGES>\n[CONFIDENCE]\n0.9";

fn line(id: &str, gold: &str) -> String {
    serde_json::json!({
        "id": id,
        "query": "who is alice",
        "gold_answer": "alice",
        "full_graph_text": FULL,
        "gold_subgraph_text": gold,
        "segment_count": 4,
    })
    .to_string()
}

#[test]
fn corpus_lines_load_in_order() {
    let text = [line("a", GOLD), line("b", GOLD), line("c", GOLD)].join("\n");
    let corpus = parse_corpus(Cursor::new(text)).unwrap();
    assert_eq!(corpus.iter().map(|c| c.id.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
    assert_eq!(corpus[0].segment_count, 4);
}

#[test]
fn missing_field_names_the_line() {
    let mut second: serde_json::Value = serde_json::from_str(&line("b", GOLD)).unwrap();
    second.as_object_mut().unwrap().remove("query");
    let text = format!("{}\n{}\n", line("a", GOLD), second);
    let err = parse_corpus(Cursor::new(text)).unwrap_err();
    assert_eq!(err.to_string(), "line 2: missing field query");
}

#[test]
fn invalid_gold_subgraph_is_rejected_at_load() {
    let added = GOLD.replace("N1: alice\n", "N1: alice\nN9: mallory\n");
    let text = format!("{}\n{}", line("a", GOLD), line("bad-2", &added));
    match parse_corpus(Cursor::new(text)).unwrap_err() {
        CorpusError::Violation { id, violations } => {
            assert_eq!(id, "bad-2");
            assert!(violations.iter().any(|(k, _)| *k == ViolationKind::UnknownNode));
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn duplicate_ids_are_rejected() {
    let text = format!("{}\n{}", line("a", GOLD), line("a", GOLD));
    assert!(matches!(parse_corpus(Cursor::new(text)), Err(CorpusError::DuplicateId { line: 2, .. })));
}

#[test]
fn minimal_synthetic_instance() {
    let params = SynthParams { nodes: (1, 1), edges: (0, 0), min_hops: 0, max_hops: 0, ..SynthParams::default() };
    let corpus = generate_synthetic_corpus(1, 7, &params).unwrap();
    assert_eq!(corpus.len(), 1);
    let (full, gold) = corpus[0].validate().unwrap();
    assert_eq!(full.nodes().len(), 1);
    assert!(full.edges().is_empty());
    assert_eq!(gold.graph, full);
}

#[test]
fn synthetic_corpus_is_deterministic() {
    let params = SynthParams::default();
    let a = corpus_to_jsonl(&generate_synthetic_corpus(50, 3, &params).unwrap());
    let b = corpus_to_jsonl(&generate_synthetic_corpus(50, 3, &params).unwrap());
    assert_eq!(a, b);
    let c = corpus_to_jsonl(&generate_synthetic_corpus(50, 4, &params).unwrap());
    assert_ne!(a, c);
}

#[test]
fn default_corpus_passes_load_time_validation() {
    let corpus = generate_synthetic_corpus(2500, 42, &SynthParams::default()).unwrap();
    assert_eq!(corpus.len(), 2500);
    let reloaded = parse_corpus(Cursor::new(corpus_to_jsonl(&corpus))).unwrap();
    assert_eq!(reloaded, corpus);
    for inst in &reloaded {
        let (full, gold) = inst.validate().unwrap();
        assert!(verify_subset(&gold, &full).accepted, "{}", inst.id);
        assert_eq!(inst.content_vector.as_ref().map(Vec::len), Some(64));
    }
}

#[test]
fn infeasible_synthetic_shapes_are_rejected() {
    let params = SynthParams { nodes: (3, 2), ..SynthParams::default() };
    assert!(generate_synthetic_corpus(1, 1, &params).is_err());
    assert!(generate_synthetic_corpus(0, 1, &SynthParams::default()).is_err());
}

fn random_sections(rng: &mut ChaCha8Rng) -> Vec<(String, Tensor)> {
    (0..rng.random_range(1..6))
        .map(|i| {
            let shape = vec![rng.random_range(1..5), rng.random_range(1..7)];
            let data = (0..shape[0] * shape[1]).map(|_| f32::from_bits(rng.next_u32() & 0x7f7f_ffff)).collect();
            (format!("t{i}"), Tensor::new(shape, data))
        })
        .collect()
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let dir = tempfile::tempdir().unwrap();
    for k in 0..20 {
        let sections = random_sections(&mut rng);
        let path = dir.path().join(format!("c{k}.ckpt"));
        save_checkpoint(&sections, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.len(), sections.len());
        for ((n1, t1), (n2, t2)) in sections.iter().zip(&back) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape, t2.shape);
            assert!(t1.data.iter().zip(&t2.data).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        assert!(section(&back, "t0").is_ok());
        assert!(matches!(section(&back, "nope"), Err(CheckpointError::MissingSection(_))));
    }
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let bytes = encode_checkpoint(&random_sections(&mut rng)).unwrap();
    assert_eq!(&bytes[..8], MAGIC);

    let mut flipped = bytes.clone();
    let last = flipped.len() - 1;
    flipped[last] ^= 0x01;
    assert!(matches!(decode_checkpoint(&flipped), Err(CheckpointError::Checksum { .. })));

    let mut renamed = bytes.clone();
    renamed[..8].copy_from_slice(b"MEMALNCX");
    assert!(matches!(decode_checkpoint(&renamed), Err(CheckpointError::BadMagic(_))));

    assert!(matches!(decode_checkpoint(&bytes[..5]), Err(CheckpointError::Truncated(_))));
}

#[test]
fn config_round_trips_through_toml() {
    let config = EngineConfig::default();
    assert_eq!(EngineConfig::from_toml(&config.to_toml()).unwrap(), config);
    let partial = EngineConfig::from_toml("seed = 9\n[distill]\nepochs = 30\n").unwrap();
    assert_eq!(partial.seed, 9);
    assert_eq!(partial.distill.epochs, 30);
    assert_eq!(partial.distill.kl_temperature, 2.0);
    let resolved = partial.resolved().unwrap();
    assert_eq!((resolved.align.seed, resolved.distill.seed), (9, 9));
    assert!(EngineConfig::from_toml("seed = \"nine\"").is_err());
}

#[test]
fn component_seeds_follow_the_hash_scheme() {
    assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
    assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    assert_eq!(subseed(42, "retriever"), fnv1a64(b"retriever") ^ 42);
    assert_ne!(subseed(42, "retriever"), subseed(42, "align"));
    let mut a = component_rng(5, "x");
    let mut b = ChaCha8Rng::seed_from_u64(subseed(5, "x"));
    assert_eq!(a.next_u64(), b.next_u64());
}
