//! Structure-preserving token linearization.
//!
//! ```text
//! BOS [EVIDENCE_SUBGRAPH] <NODES> EOL
//!     (id : word* EOL)*
//! <EDGES> EOL
//!     (id -> id : word* EOL)*
//! ([CONFIDENCE] value EOL)?
//! EOS
//! ```
//!
//! Descriptions and relations are split on single spaces, so runs of spaces
//! survive as empty-string words and the mapping is exactly invertible.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{Edge, EvidenceSubgraph, GraphError, MemoryGraph, Node, NodeId};
use super::text::format_confidence;
use crate::retriever::vocab::{self, TokenId, VocabError, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GraphTokenSequence {
    pub tokens: Vec<TokenId>,
}

impl GraphTokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum LinearizeError {
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("sequence must start with BOS and end with EOS")]
    MissingSentinels,
    #[error("sequence has no body between BOS and EOS")]
    EmptyBody,
    #[error("sequence ends early at position {0}")]
    Truncated(usize),
    #[error("position {pos}: expected {expected}, found {found}")]
    MarkerOrder { pos: usize, expected: &'static str, found: String },
    #[error("position {0}: line lacks a node id token")]
    MissingNodeId(usize),
    #[error("position {0}: unknown or out-of-range token")]
    UnknownToken(usize),
    #[error("position {0}: empty description or relation")]
    EmptyText(usize),
    #[error("position {pos}: invalid confidence {text:?}")]
    InvalidConfidence { pos: usize, text: String },
    #[error("tokens after EOS at position {0}")]
    TrailingTokens(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub fn split_words(text: &str) -> std::str::Split<'_, char> {
    text.split(' ')
}

fn push_words(out: &mut Vec<TokenId>, text: &str, vocab: &Vocabulary) -> Result<(), VocabError> {
    for w in split_words(text) {
        out.push(vocab.encode_word(w)?);
    }
    Ok(())
}

/// Tokens of one node line, `id : words EOL`.
pub fn node_tokens(node: &Node, vocab: &Vocabulary) -> Result<Vec<TokenId>, VocabError> {
    let mut out = vec![vocab.encode_word(node.id.as_str())?, vocab::COLON];
    push_words(&mut out, &node.description, vocab)?;
    out.push(vocab::EOL);
    Ok(out)
}

/// Tokens of one edge line, `src -> dst : words EOL`.
pub fn edge_tokens(edge: &Edge, vocab: &Vocabulary) -> Result<Vec<TokenId>, VocabError> {
    let mut out = vec![
        vocab.encode_word(edge.source.as_str())?,
        vocab::ARROW,
        vocab.encode_word(edge.target.as_str())?,
        vocab::COLON,
    ];
    push_words(&mut out, &edge.relation, vocab)?;
    out.push(vocab::EOL);
    Ok(out)
}

pub fn linearize(
    graph: &MemoryGraph,
    vocab: &Vocabulary,
    confidence: Option<f64>,
) -> Result<GraphTokenSequence, LinearizeError> {
    let mut tokens = vec![vocab::BOS, vocab::HDR, vocab::NODES, vocab::EOL];
    for node in graph.nodes() {
        tokens.extend(node_tokens(node, vocab)?);
    }
    tokens.push(vocab::EDGES);
    tokens.push(vocab::EOL);
    for edge in graph.edges() {
        tokens.extend(edge_tokens(edge, vocab)?);
    }
    if let Some(c) = confidence {
        tokens.push(vocab::CONF);
        tokens.push(vocab.encode_word(&format_confidence(c))?);
        tokens.push(vocab::EOL);
    }
    tokens.push(vocab::EOS);
    Ok(GraphTokenSequence { tokens })
}

struct Reader<'a> {
    tokens: &'a [TokenId],
    pos: usize,
    vocab: &'a Vocabulary,
}

fn describe(vocab: &Vocabulary, id: TokenId) -> String {
    match vocab.token(id) {
        Some(t) if Vocabulary::is_special(id) => t.to_string(),
        Some(t) => format!("word {t:?}"),
        None => format!("token #{id}"),
    }
}

impl<'a> Reader<'a> {
    fn peek(&self) -> Result<TokenId, LinearizeError> {
        self.tokens.get(self.pos).copied().ok_or(LinearizeError::Truncated(self.pos))
    }

    fn next(&mut self) -> Result<TokenId, LinearizeError> {
        let t = self.peek()?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, want: TokenId, name: &'static str) -> Result<(), LinearizeError> {
        let pos = self.pos;
        let got = self.next()?;
        if got == want {
            Ok(())
        } else {
            Err(LinearizeError::MarkerOrder { pos, expected: name, found: describe(self.vocab, got) })
        }
    }

    fn word(&mut self) -> Result<Option<&'a str>, LinearizeError> {
        let pos = self.pos;
        let t = self.peek()?;
        if t == vocab::UNK {
            return Err(LinearizeError::UnknownToken(pos));
        }
        if Vocabulary::is_special(t) {
            return Ok(None);
        }
        self.pos += 1;
        self.vocab.word(t).map(Some).ok_or(LinearizeError::UnknownToken(pos))
    }

    fn node_id(&mut self) -> Result<NodeId, LinearizeError> {
        let pos = self.pos;
        match self.word()? {
            Some(w) => Ok(NodeId::new(w)?),
            None => Err(LinearizeError::MissingNodeId(pos)),
        }
    }

    /// Words up to and including the closing EOL, joined by single spaces.
    fn text_until_eol(&mut self) -> Result<String, LinearizeError> {
        let start = self.pos;
        let mut words = Vec::new();
        while let Some(w) = self.word()? {
            words.push(w);
        }
        self.expect(vocab::EOL, "<eol>")?;
        let text = words.join(" ");
        if text.is_empty() {
            return Err(LinearizeError::EmptyText(start));
        }
        Ok(text)
    }
}

/// Inverse of [`linearize`]: the graph plus the confidence, if the stream
/// carries a confidence block.
pub fn delinearize_parts(
    seq: &GraphTokenSequence,
    vocab: &Vocabulary,
) -> Result<(MemoryGraph, Option<f64>), LinearizeError> {
    let tokens = &seq.tokens;
    if tokens.first() != Some(&vocab::BOS) || tokens.last() != Some(&vocab::EOS) || tokens.len() < 2 {
        return Err(LinearizeError::MissingSentinels);
    }
    if tokens.len() == 2 {
        return Err(LinearizeError::EmptyBody);
    }
    if let Some(bad) = tokens.iter().position(|&t| t as usize >= vocab.len()) {
        return Err(LinearizeError::UnknownToken(bad));
    }
    let mut r = Reader { tokens, pos: 1, vocab };
    r.expect(vocab::HDR, "[EVIDENCE_SUBGRAPH]")?;
    r.expect(vocab::NODES, "<NODES>")?;
    r.expect(vocab::EOL, "<eol>")?;

    let mut nodes = Vec::new();
    loop {
        if r.peek()? == vocab::EDGES {
            r.pos += 1;
            r.expect(vocab::EOL, "<eol>")?;
            break;
        }
        let id = r.node_id()?;
        r.expect(vocab::COLON, ":")?;
        let description = r.text_until_eol()?;
        nodes.push(Node::new(id, description)?);
    }

    let mut edges = Vec::new();
    let mut confidence = None;
    loop {
        let pos = r.pos;
        match r.peek()? {
            vocab::EOS => {
                r.pos += 1;
                break;
            }
            vocab::CONF => {
                r.pos += 1;
                let vpos = r.pos;
                let text = r.word()?.ok_or(LinearizeError::InvalidConfidence { pos: vpos, text: String::new() })?;
                let value: f64 = text
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite() && (0.0..=1.0).contains(v))
                    .ok_or_else(|| LinearizeError::InvalidConfidence { pos: vpos, text: text.to_string() })?;
                confidence = Some(value);
                r.expect(vocab::EOL, "<eol>")?;
                r.expect(vocab::EOS, "<eos>")?;
                break;
            }
            t if Vocabulary::is_special(t) && t != vocab::UNK => {
                return Err(LinearizeError::MarkerOrder { pos, expected: "edge line", found: describe(vocab, t) });
            }
            _ => {
                let source = r.node_id()?;
                r.expect(vocab::ARROW, "->")?;
                let target = r.node_id()?;
                r.expect(vocab::COLON, ":")?;
                let relation = r.text_until_eol()?;
                edges.push(Edge::new(source, target, relation)?);
            }
        }
    }
    if r.pos != tokens.len() {
        return Err(LinearizeError::TrailingTokens(r.pos));
    }
    Ok((MemoryGraph::new(nodes, edges)?, confidence))
}

/// Inverse of [`linearize`]. A stream without a confidence block yields
/// confidence 1.0.
pub fn delinearize(seq: &GraphTokenSequence, vocab: &Vocabulary) -> Result<EvidenceSubgraph, LinearizeError> {
    let (graph, confidence) = delinearize_parts(seq, vocab)?;
    Ok(EvidenceSubgraph::new(graph, confidence.unwrap_or(1.0))?)
}
