//! Greedy decoding under a grammar and subset mask.
//!
//! A node line is chosen by its id token; the rest of the line is forced to
//! the full graph's exact tokens. An edge line is chosen token by token
//! among full-graph edges whose endpoints are already emitted. Each node and
//! each distinct edge is emitted at most once. Every choice is also checked
//! against the remaining length budget, so decoding can always close the
//! document when `max_len` allows one at all.

use std::collections::{HashMap, HashSet, VecDeque};

use super::model::RetrieverModel;
use super::query::QueryEmbedding;
use super::vocab::{self, TokenId, Vocabulary};
use super::RetrieverError;
use crate::graph::{delinearize_parts, edge_tokens, node_tokens, EvidenceSubgraph, GraphTokenSequence, MemoryGraph};
use crate::space::UnifiedVector;

/// Shortest possible document: `BOS HDR NODES EOL EDGES EOL EOS`.
pub const MIN_DOCUMENT_LEN: usize = 7;

struct NodeLine {
    id: TokenId,
    tokens: Vec<TokenId>,
}

struct EdgeLine {
    src: usize,
    dst: usize,
    dst_tok: TokenId,
    relation: Vec<TokenId>,
}

#[derive(Clone)]
enum Phase {
    Nodes,
    Edges,
    EdgeTarget { src: usize },
    Relation { cands: Vec<usize>, pos: usize },
    Confidence,
    Done,
}

struct Decoder {
    nodes: Vec<NodeLine>,
    edges: Vec<EdgeLine>,
    confidence: Vec<TokenId>,
    node_emitted: Vec<bool>,
    edge_emitted: Vec<bool>,
}

/// Legal next token with the phase it leads to and the tokens it forces.
struct Choice {
    token: TokenId,
    forced: Vec<TokenId>,
    next: Phase,
    mark_node: Option<usize>,
    mark_edge: Option<usize>,
}

fn clean(tokens: Vec<TokenId>) -> Option<Vec<TokenId>> {
    (!tokens.contains(&vocab::UNK)).then_some(tokens)
}

impl Decoder {
    fn new(full: &MemoryGraph, vocab: &Vocabulary) -> Self {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut nodes = Vec::new();
        let mut usable = Vec::new();
        for (i, n) in full.nodes().iter().enumerate() {
            index.insert(n.id.as_str(), i);
            match node_tokens(n, vocab).ok().and_then(clean) {
                Some(tokens) => {
                    usable.push(true);
                    nodes.push(NodeLine { id: tokens[0], tokens });
                }
                None => {
                    usable.push(false);
                    nodes.push(NodeLine { id: vocab::UNK, tokens: Vec::new() });
                }
            }
        }
        let mut seen = HashSet::new();
        let mut edges = Vec::new();
        for e in full.edges() {
            let (src, dst) = (index[e.source.as_str()], index[e.target.as_str()]);
            if !usable[src] || !usable[dst] || !seen.insert((src, dst, e.relation.as_str())) {
                continue;
            }
            if let Some(t) = edge_tokens(e, vocab).ok().and_then(clean) {
                edges.push(EdgeLine { src, dst, dst_tok: t[2], relation: t[4..t.len() - 1].to_vec() });
            }
        }
        let node_emitted = usable.iter().map(|u| !u).collect();
        let edge_emitted = vec![false; edges.len()];
        let confidence = vocab.confidence_tokens().into_iter().map(|(t, _)| t).collect();
        Self { nodes, edges, confidence, node_emitted, edge_emitted }
    }

    fn open_edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.edges.len()).filter(|&e| {
            let edge = &self.edges[e];
            !self.edge_emitted[e] && self.node_emitted[edge.src] && self.node_emitted[edge.dst]
        })
    }

    /// Fewest tokens, `EOS` included, that finish the document from `phase`.
    fn finish_cost(&self, phase: &Phase) -> usize {
        match phase {
            Phase::Nodes => 3,
            Phase::Edges => 1,
            Phase::EdgeTarget { src } => self
                .open_edges()
                .filter(|&e| self.edges[e].src == *src)
                .map(|e| self.edges[e].relation.len() + 4)
                .min()
                .unwrap_or(usize::MAX / 2),
            Phase::Relation { cands, pos } => {
                cands.iter().map(|&e| self.edges[e].relation.len() - pos + 2).min().unwrap_or(usize::MAX / 2)
            }
            Phase::Confidence => 3,
            Phase::Done => 0,
        }
    }

    fn choices(&self, phase: &Phase) -> Vec<Choice> {
        let mut out = Vec::new();
        let simple = |token, forced: Vec<TokenId>, next| Choice { token, forced, next, mark_node: None, mark_edge: None };
        match phase {
            Phase::Nodes => {
                for (i, n) in self.nodes.iter().enumerate() {
                    if !self.node_emitted[i] {
                        out.push(Choice {
                            token: n.id,
                            forced: n.tokens[1..].to_vec(),
                            next: Phase::Nodes,
                            mark_node: Some(i),
                            mark_edge: None,
                        });
                    }
                }
                out.push(simple(vocab::EDGES, vec![vocab::EOL], Phase::Edges));
            }
            Phase::Edges => {
                let mut sources = Vec::new();
                for e in self.open_edges() {
                    if !sources.contains(&self.edges[e].src) {
                        sources.push(self.edges[e].src);
                    }
                }
                for src in sources {
                    out.push(simple(self.nodes[src].id, vec![vocab::ARROW], Phase::EdgeTarget { src }));
                }
                if !self.confidence.is_empty() {
                    out.push(simple(vocab::CONF, Vec::new(), Phase::Confidence));
                }
                out.push(simple(vocab::EOS, Vec::new(), Phase::Done));
            }
            Phase::EdgeTarget { src } => {
                let mut by_dst: Vec<(usize, Vec<usize>)> = Vec::new();
                for e in self.open_edges().filter(|&e| self.edges[e].src == *src) {
                    let dst = self.edges[e].dst;
                    match by_dst.iter_mut().find(|(d, _)| *d == dst) {
                        Some((_, c)) => c.push(e),
                        None => by_dst.push((dst, vec![e])),
                    }
                }
                for (dst, cands) in by_dst {
                    let tok = self.edges[cands[0]].dst_tok;
                    debug_assert_eq!(tok, self.nodes[dst].id);
                    out.push(simple(tok, vec![vocab::COLON], Phase::Relation { cands, pos: 0 }));
                }
            }
            Phase::Relation { cands, pos } => {
                let mut words: Vec<(TokenId, Vec<usize>)> = Vec::new();
                for &e in cands {
                    let rel = &self.edges[e].relation;
                    if *pos == rel.len() {
                        out.push(Choice { token: vocab::EOL, forced: Vec::new(), next: Phase::Edges, mark_node: None, mark_edge: Some(e) });
                    } else {
                        match words.iter_mut().find(|(w, _)| *w == rel[*pos]) {
                            Some((_, c)) => c.push(e),
                            None => words.push((rel[*pos], vec![e])),
                        }
                    }
                }
                for (w, c) in words {
                    out.push(simple(w, Vec::new(), Phase::Relation { cands: c, pos: pos + 1 }));
                }
            }
            Phase::Confidence => {
                for &t in &self.confidence {
                    out.push(simple(t, vec![vocab::EOL, vocab::EOS], Phase::Done));
                }
            }
            Phase::Done => {}
        }
        out
    }
}

/// Greedy constrained decoding of an evidence subgraph of `full_graph`.
///
/// The result always passes subset verification against `full_graph`. A
/// document without a confidence block gets confidence 1.0.
pub fn generate_subgraph(
    model: &RetrieverModel,
    vocab: &Vocabulary,
    full_graph: &MemoryGraph,
    q: &QueryEmbedding,
    h: &UnifiedVector,
    max_len: usize,
) -> Result<EvidenceSubgraph, RetrieverError> {
    let seq = generate_tokens(model, vocab, full_graph, q, h, max_len)?;
    let (graph, confidence) = delinearize_parts(&seq, vocab)?;
    let sub = EvidenceSubgraph::new(graph, confidence.unwrap_or(1.0)).map_err(crate::graph::LinearizeError::from)?;
    debug_assert!(crate::graph::verify_subset(&sub, full_graph).accepted);
    Ok(sub)
}

/// The decoded token stream, `BOS` through `EOS`.
pub fn generate_tokens(
    model: &RetrieverModel,
    vocab: &Vocabulary,
    full_graph: &MemoryGraph,
    q: &QueryEmbedding,
    h: &UnifiedVector,
    max_len: usize,
) -> Result<GraphTokenSequence, RetrieverError> {
    if model.dims().vocab != vocab.len() {
        return Err(RetrieverError::Dimension { what: "vocabulary", expected: model.dims().vocab, found: vocab.len() });
    }
    if max_len < MIN_DOCUMENT_LEN {
        return Err(RetrieverError::MaxLenExhausted(max_len));
    }
    let mut dec = Decoder::new(full_graph, vocab);
    let mut tokens = vec![vocab::BOS];
    let mut state = model.initial_state(q, h)?;
    let (mut logits, s) = model.step(&state, vocab::BOS)?;
    state = s;
    let mut forced: VecDeque<TokenId> = VecDeque::from([vocab::HDR, vocab::NODES, vocab::EOL]);
    let mut phase = Phase::Nodes;

    loop {
        let token = if let Some(t) = forced.pop_front() {
            t
        } else {
            let remaining = max_len - tokens.len();
            let choices = dec.choices(&phase);
            let mut best: Option<(f64, usize)> = None;
            for (i, c) in choices.iter().enumerate() {
                let cost = 1 + c.forced.len() + dec.finish_cost(&c.next);
                if cost > remaining {
                    continue;
                }
                let score = logits[c.token as usize];
                if best.map_or(true, |(s, _)| score > s) {
                    best = Some((score, i));
                }
            }
            let Some((_, i)) = best else {
                return Err(if remaining == 0 {
                    RetrieverError::MaxLenExhausted(max_len)
                } else {
                    RetrieverError::DeadEnd(tokens.len())
                });
            };
            let choice = choices.into_iter().nth(i).expect("index from enumerate");
            if let Some(n) = choice.mark_node {
                dec.node_emitted[n] = true;
            }
            if let Some(e) = choice.mark_edge {
                dec.edge_emitted[e] = true;
            }
            forced.extend(choice.forced);
            phase = choice.next;
            choice.token
        };
        tokens.push(token);
        if token == vocab::EOS {
            break;
        }
        (logits, state) = model.step(&state, token)?;
    }
    Ok(GraphTokenSequence { tokens })
}
