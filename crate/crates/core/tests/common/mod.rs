//! Random graph generators shared by the integration tests.

#![allow(dead_code)]

use memadapter::{Edge, MemoryGraph, Node, NodeId};
use rand::seq::IndexedRandom;
use rand::Rng;

const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
const ODD_WORDS: [&str; 7] = [":", "->", "<NODES>", "N7", "x:y", "[CONFIDENCE]", "é"];

pub fn random_word<R: Rng>(rng: &mut R) -> String {
    if rng.random_bool(0.08) {
        return ODD_WORDS.choose(rng).unwrap().to_string();
    }
    let len = rng.random_range(1..=6);
    (0..len).map(|_| *LETTERS.choose(rng).unwrap() as char).collect()
}

/// Nonempty single-line text without surrounding spaces. Words are joined
/// by one space, occasionally two.
pub fn random_text<R: Rng>(rng: &mut R, max_words: usize) -> String {
    let n = rng.random_range(1..=max_words);
    let mut out = String::new();
    for i in 0..n {
        if i > 0 {
            out.push_str(if rng.random_bool(0.1) { "  " } else { " " });
        }
        out.push_str(&random_word(rng));
    }
    out
}

/// A valid graph with distinct ids in random order and possibly repeated
/// edges.
pub fn random_graph<R: Rng>(rng: &mut R, max_nodes: usize, max_edges: usize) -> MemoryGraph {
    let n = rng.random_range(0..=max_nodes);
    let mut ids: Vec<u64> = Vec::new();
    while ids.len() < n {
        let k = rng.random_range(1..=(4 * max_nodes as u64).max(2));
        if !ids.contains(&k) {
            ids.push(k);
        }
    }
    let nodes: Vec<Node> =
        ids.iter().map(|&k| Node::new(NodeId::from_index(k), random_text(rng, 4)).unwrap()).collect();
    let mut edges = Vec::new();
    if !nodes.is_empty() {
        for _ in 0..rng.random_range(0..=max_edges) {
            let s = nodes.choose(rng).unwrap().id.clone();
            let t = nodes.choose(rng).unwrap().id.clone();
            edges.push(Edge::new(s, t, random_text(rng, 3)).unwrap());
        }
    }
    MemoryGraph::new(nodes, edges).unwrap()
}

/// A random subgraph of `full`: some of its nodes and some of the edges
/// between them.
pub fn random_subgraph<R: Rng>(rng: &mut R, full: &MemoryGraph) -> MemoryGraph {
    let nodes: Vec<Node> = full.nodes().iter().filter(|_| rng.random_bool(0.6)).cloned().collect();
    let kept = |id: &NodeId| nodes.iter().any(|n| &n.id == id);
    let edges: Vec<Edge> = full
        .edges()
        .iter()
        .filter(|e| kept(&e.source) && kept(&e.target))
        .filter(|_| rng.random_bool(0.7))
        .cloned()
        .collect();
    MemoryGraph::new(nodes, edges).unwrap()
}
