mod common;

use memadapter::graph::{
    delinearize, emit, linearize, parse_evidence, parse_full_graph, verify_subset, EmitError, EmitMode,
    LinearizeError, ParseErrorKind, ViolationKind,
};
use memadapter::retriever::vocab::{BOS, EDGES, EOL, EOS, HDR, NODES};
use memadapter::{EvidenceSubgraph, GraphTokenSequence, MemoryGraph, VocabMode, Vocabulary};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BRIDGE: &str = "[FULL_GRAPH]\n<NODES>\nN1: bridge\nN2: steel\n<EDGES>\nN1 -> N2: built from";

fn evidence(body: &str, confidence: &str) -> String {
    format!("[EVIDENCE_SUBGRAPH]\n{body}\n[CONFIDENCE]\n{confidence}\n")
}

#[test]
fn parses_the_two_node_example() {
    let g = parse_full_graph(BRIDGE).unwrap();
    assert_eq!(g.nodes().len(), 2);
    assert_eq!(g.edges().len(), 1);
    let e = &g.edges()[0];
    assert_eq!((e.source.as_str(), e.target.as_str(), e.relation.as_str()), ("N1", "N2", "built from"));
}

#[test]
fn single_node_without_edges() {
    let g = parse_full_graph("[FULL_GRAPH]\n<NODES>\nN1: x\n<EDGES>").unwrap();
    assert_eq!(g.nodes().len(), 1);
    assert!(g.edges().is_empty());
}

#[test]
fn missing_delimiter_reports_line_three() {
    let err = parse_full_graph("[FULL_GRAPH]\n<NODES>\nN1 x\n<EDGES>").unwrap_err();
    assert_eq!((err.line, err.kind), (3, ParseErrorKind::MalformedNodeLine));
}

#[test]
fn lines_are_trimmed_and_blank_lines_skipped() {
    let g = parse_full_graph("  [FULL_GRAPH]\n\n<NODES>\n   N1: a  b: c   \n<EDGES>\n\tN1 -> N1: self: loop\n").unwrap();
    assert_eq!(g.nodes()[0].description, "a  b: c");
    assert_eq!(g.edges()[0].relation, "self: loop");
}

#[test]
fn structural_errors_carry_kinds() {
    let cases = [
        ("<NODES>\nN1: a\n<EDGES>", ParseErrorKind::MissingHeader),
        ("[FULL_GRAPH]\nN1: a\n<EDGES>", ParseErrorKind::MissingNodesMarker),
        ("[FULL_GRAPH]\n<NODES>\nN1: a", ParseErrorKind::MissingEdgesMarker),
        ("[FULL_GRAPH]\n<NODES>\nN1: a\nN1: b\n<EDGES>", ParseErrorKind::DuplicateNode),
        ("[FULL_GRAPH]\n<NODES>\nN1: a\n<EDGES>\nN1 -> N2: r", ParseErrorKind::UndeclaredNode),
        ("[FULL_GRAPH]\n<NODES>\nN1: a\n<EDGES>\nN1 N1: r", ParseErrorKind::MalformedEdgeLine),
        ("[FULL_GRAPH]\n<NODES>\nN01: a\n<EDGES>", ParseErrorKind::InvalidNodeId),
    ];
    for (text, kind) in cases {
        assert_eq!(parse_full_graph(text).unwrap_err().kind, kind, "{text:?}");
    }
    let err = parse_full_graph("[FULL_GRAPH]\n<NODES>\nN1: a\nN1 -> N1: r\n<EDGES>").unwrap_err();
    assert_eq!(err.line, 4);
}

#[test]
fn evidence_confidence_examples() {
    let body = "<NODES>\nN1: bridge\nN2: steel\n<EDGES>\nN1 -> N2: built from";
    assert_eq!(parse_evidence(&evidence(body, "0.85")).unwrap().confidence(), 0.85);
    assert_eq!(parse_evidence(&evidence(body, "1.0")).unwrap().confidence(), 1.0);
    let err = parse_evidence(&evidence(body, "1.5")).unwrap_err();
    assert_eq!(err.kind, ParseErrorKind::ConfidenceOutOfRange);
    assert_eq!(parse_evidence(&evidence(body, "high")).unwrap_err().kind, ParseErrorKind::InvalidConfidence);
    let missing = format!("[EVIDENCE_SUBGRAPH]\n{body}\n");
    assert_eq!(parse_evidence(&missing).unwrap_err().kind, ParseErrorKind::MissingConfidence);
}

#[test]
fn emit_examples() {
    let g = parse_full_graph(BRIDGE).unwrap();
    let text = emit(&g, EmitMode::Full, None).unwrap();
    assert!(text.starts_with("[FULL_GRAPH]\n<NODES>\n"));
    assert_eq!(text, format!("{BRIDGE}\n"));
    assert_eq!(emit(&MemoryGraph::empty(), EmitMode::Full, None).unwrap(), "[FULL_GRAPH]\n<NODES>\n<EDGES>\n");
    assert_eq!(emit(&g, EmitMode::Evidence, None), Err(EmitError::MissingConfidence));
    assert_eq!(
        emit(&g, EmitMode::Evidence, Some(0.85)).unwrap(),
        "[EVIDENCE_SUBGRAPH]\n<NODES>\nN1: bridge\nN2: steel\n<EDGES>\nN1 -> N2: built from\n[CONFIDENCE]\n0.85\n"
    );
}

#[test]
fn verify_examples() {
    let full = parse_full_graph(BRIDGE).unwrap();
    let same = verify_subset(&EvidenceSubgraph::new(full.clone(), 1.0).unwrap(), &full);
    assert!(same.accepted && same.violations.is_empty());

    let ghost = parse_evidence(&evidence("<NODES>\nN9: ghost\n<EDGES>", "0.5")).unwrap();
    let report = verify_subset(&ghost, &full);
    assert!(!report.accepted);
    assert_eq!(report.violations[0].kind, ViolationKind::UnknownNode);
    assert_eq!(report.violations[0].element, "N9: ghost");

    let wrong = parse_evidence(&evidence("<NODES>\nN1: bridge\nN2: steel\n<EDGES>\nN1 -> N2: built of", "0.5")).unwrap();
    let report = verify_subset(&wrong, &full);
    assert!(!report.accepted);
    assert_eq!(report.violations.len(), 1);
    assert_eq!(report.violations[0].kind, ViolationKind::RelationMismatch);
}

#[test]
fn accepted_lines_appear_verbatim_in_the_full_document() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..200 {
        let full = common::random_graph(&mut rng, 8, 10);
        let sub = EvidenceSubgraph::new(common::random_subgraph(&mut rng, &full), 0.5).unwrap();
        assert!(verify_subset(&sub, &full).accepted);
        let doc = emit(&full, EmitMode::Full, None).unwrap();
        let lines: Vec<&str> = doc.lines().collect();
        for n in sub.graph.nodes() {
            assert!(lines.contains(&n.line().as_str()));
        }
        for e in sub.graph.edges() {
            assert!(lines.contains(&e.line().as_str()));
        }
    }
}

#[test]
fn linearize_examples() {
    let vocab = Vocabulary::new(VocabMode::Closed);
    let seq = linearize(&MemoryGraph::empty(), &vocab, None).unwrap();
    assert_eq!(seq.tokens, vec![BOS, HDR, NODES, EOL, EDGES, EOL, EOS]);

    let g = parse_full_graph("[FULL_GRAPH]\n<NODES>\nN1: a\n<EDGES>").unwrap();
    let vocab = Vocabulary::from_graphs([&g], [], VocabMode::Closed);
    let n1 = vocab.word_id("N1").unwrap();
    let seq = linearize(&g, &vocab, None).unwrap();
    assert_eq!(seq.tokens.iter().filter(|&&t| t == n1).count(), 1);

    let other = parse_full_graph("[FULL_GRAPH]\n<NODES>\nN1: b\n<EDGES>").unwrap();
    assert!(matches!(linearize(&other, &vocab, None), Err(LinearizeError::Vocab(_))));
}

#[test]
fn delinearize_rejects_streams_outside_the_grammar() {
    let vocab = Vocabulary::new(VocabMode::Closed);
    let seq = |tokens: Vec<u32>| GraphTokenSequence { tokens };
    assert!(matches!(delinearize(&seq(vec![BOS, EOS]), &vocab), Err(LinearizeError::EmptyBody)));
    assert!(matches!(
        delinearize(&seq(vec![BOS, HDR, EDGES, EOL, NODES, EOL, EOS]), &vocab),
        Err(LinearizeError::MarkerOrder { .. })
    ));
    assert!(delinearize(&seq(vec![BOS, HDR, NODES, EOL, EDGES]), &vocab).is_err());
    let empty = delinearize(&seq(vec![BOS, HDR, NODES, EOL, EDGES, EOL, EOS]), &vocab).unwrap();
    assert!(empty.graph.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn text_round_trip(seed in any::<u64>()) {
        let g = common::random_graph(&mut ChaCha8Rng::seed_from_u64(seed), 10, 14);
        let text = emit(&g, EmitMode::Full, None).unwrap();
        let parsed = parse_full_graph(&text).unwrap();
        prop_assert_eq!(&parsed, &g);
        prop_assert_eq!(emit(&parsed, EmitMode::Full, None).unwrap(), text);
    }

    #[test]
    fn token_round_trip(seed in any::<u64>(), confidence in 0.0f64..=1.0) {
        let g = common::random_graph(&mut ChaCha8Rng::seed_from_u64(seed), 10, 14);
        let doc = emit(&g, EmitMode::Evidence, Some(confidence)).unwrap();
        let vocab = Vocabulary::from_graphs([&g], [doc.lines().last().unwrap()], VocabMode::Closed);
        let back = delinearize(&linearize(&g, &vocab, Some(confidence)).unwrap(), &vocab).unwrap();
        prop_assert_eq!(&back.graph, &g);
        prop_assert_eq!(back.confidence(), confidence);
    }
}
