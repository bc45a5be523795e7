//! Token vocabulary for graph linearization.
//!
//! Ids `0..10` are reserved for sentinels and the structural markers; words
//! start at [`FIRST_WORD`]. Words live in their own namespace, so a
//! description containing the literal text `<NODES>` or `:` gets an ordinary
//! word id distinct from the marker.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{split_words, MemoryGraph};

pub type TokenId = u32;

pub const BOS: TokenId = 0;
pub const EOS: TokenId = 1;
pub const UNK: TokenId = 2;
pub const HDR: TokenId = 3;
pub const NODES: TokenId = 4;
pub const EDGES: TokenId = 5;
pub const CONF: TokenId = 6;
pub const COLON: TokenId = 7;
pub const ARROW: TokenId = 8;
pub const EOL: TokenId = 9;
pub const FIRST_WORD: TokenId = 10;

const SPECIAL_NAMES: [&str; FIRST_WORD as usize] = [
    "<bos>",
    "<eos>",
    "<unk>",
    "[EVIDENCE_SUBGRAPH]",
    "<NODES>",
    "<EDGES>",
    "[CONFIDENCE]",
    ":",
    "->",
    "<eol>",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VocabMode {
    /// Unknown words map to `<unk>`.
    Open,
    /// Unknown words are an error.
    Closed,
}

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("word {0:?} is not in the closed vocabulary")]
    OutOfVocabulary(String),
    #[error("token table line {line}: {msg}")]
    Table { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    mode: VocabMode,
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

#[derive(Serialize, Deserialize)]
struct TableHeader {
    mode: VocabMode,
    size: usize,
}

#[derive(Serialize, Deserialize)]
struct TableRow {
    id: TokenId,
    token: String,
    special: bool,
}

impl Vocabulary {
    pub fn new(mode: VocabMode) -> Self {
        Self {
            mode,
            tokens: SPECIAL_NAMES.iter().map(|s| s.to_string()).collect(),
            index: HashMap::new(),
        }
    }

    /// Builds a vocabulary from the words of `graphs` (ids, descriptions and
    /// relations) plus `extra` words, in first-seen order.
    pub fn from_graphs<'a>(
        graphs: impl IntoIterator<Item = &'a MemoryGraph>,
        extra: impl IntoIterator<Item = &'a str>,
        mode: VocabMode,
    ) -> Self {
        let mut vocab = Self::new(mode);
        for g in graphs {
            vocab.add_graph(g);
        }
        for w in extra {
            vocab.add_word(w);
        }
        vocab
    }

    pub fn add_graph(&mut self, graph: &MemoryGraph) {
        for node in graph.nodes() {
            self.add_word(node.id.as_str());
            for w in split_words(&node.description) {
                self.add_word(w);
            }
        }
        for edge in graph.edges() {
            self.add_word(edge.source.as_str());
            self.add_word(edge.target.as_str());
            for w in split_words(&edge.relation) {
                self.add_word(w);
            }
        }
    }

    pub fn add_word(&mut self, word: &str) -> TokenId {
        if let Some(&id) = self.index.get(word) {
            return id;
        }
        let id = self.tokens.len() as TokenId;
        self.tokens.push(word.to_string());
        self.index.insert(word.to_string(), id);
        id
    }

    pub fn mode(&self) -> VocabMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: VocabMode) {
        self.mode = mode;
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn word_id(&self, word: &str) -> Option<TokenId> {
        self.index.get(word).copied()
    }

    /// Looks up a word, applying the open/closed policy.
    pub fn encode_word(&self, word: &str) -> Result<TokenId, VocabError> {
        match (self.word_id(word), self.mode) {
            (Some(id), _) => Ok(id),
            (None, VocabMode::Open) => Ok(UNK),
            (None, VocabMode::Closed) => Err(VocabError::OutOfVocabulary(word.to_string())),
        }
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Word text for a word id; `None` for specials and unknown ids.
    pub fn word(&self, id: TokenId) -> Option<&str> {
        if id < FIRST_WORD {
            None
        } else {
            self.token(id)
        }
    }

    pub fn is_special(id: TokenId) -> bool {
        id < FIRST_WORD
    }

    /// Word tokens that read as a confidence value in `[0, 1]`.
    pub fn confidence_tokens(&self) -> Vec<(TokenId, f64)> {
        (FIRST_WORD..self.tokens.len() as TokenId)
            .filter_map(|id| {
                let v: f64 = self.tokens[id as usize].parse().ok()?;
                (v.is_finite() && (0.0..=1.0).contains(&v)).then_some((id, v))
            })
            .collect()
    }

    /// Writes the JSON-lines token table: a header line, then one line per id.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), VocabError> {
        let header = TableHeader { mode: self.mode, size: self.tokens.len() };
        writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))?;
        for (id, token) in self.tokens.iter().enumerate() {
            let row = TableRow { id: id as TokenId, token: token.clone(), special: id < FIRST_WORD as usize };
            writeln!(w, "{}", serde_json::to_string(&row).expect("row serializes"))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, VocabError> {
        let mut lines = r.lines().enumerate();
        let header: TableHeader = match lines.next() {
            Some((_, line)) => serde_json::from_str(&line?)
                .map_err(|e| VocabError::Table { line: 1, msg: e.to_string() })?,
            None => return Err(VocabError::Table { line: 1, msg: "empty token table".into() }),
        };
        let mut vocab = Self::new(header.mode);
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: TableRow = serde_json::from_str(&line)
                .map_err(|e| VocabError::Table { line: lineno, msg: e.to_string() })?;
            let expected = if (row.id as usize) < vocab.tokens.len() {
                // Reserved rows must match the fixed layout.
                if row.id < FIRST_WORD && row.special && vocab.tokens[row.id as usize] == row.token {
                    continue;
                }
                return Err(VocabError::Table { line: lineno, msg: format!("unexpected row for id {}", row.id) });
            } else {
                vocab.tokens.len() as TokenId
            };
            if row.id != expected || row.special {
                return Err(VocabError::Table { line: lineno, msg: format!("expected word id {expected}, found {}", row.id) });
            }
            if vocab.index.contains_key(&row.token) {
                return Err(VocabError::Table { line: lineno, msg: format!("duplicate token {:?}", row.token) });
            }
            vocab.add_word(&row.token);
        }
        if vocab.tokens.len() != header.size {
            return Err(VocabError::Table {
                line: 1,
                msg: format!("header declares {} tokens, table has {}", header.size, vocab.tokens.len()),
            });
        }
        Ok(vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_full_graph;

    #[test]
    fn reserved_layout_and_word_namespace() {
        let mut v = Vocabulary::new(VocabMode::Closed);
        assert_eq!(v.len(), FIRST_WORD as usize);
        let colon_word = v.add_word(":");
        assert!(colon_word >= FIRST_WORD);
        assert_ne!(colon_word, COLON);
        assert_eq!(v.word_id(":"), Some(colon_word));
        assert_eq!(v.token(NODES), Some("<NODES>"));
    }

    #[test]
    fn open_and_closed_policies() {
        let mut v = Vocabulary::new(VocabMode::Open);
        v.add_word("a");
        assert_eq!(v.encode_word("zzz").unwrap(), UNK);
        v.set_mode(VocabMode::Closed);
        assert!(matches!(v.encode_word("zzz"), Err(VocabError::OutOfVocabulary(_))));
    }

    #[test]
    fn token_table_round_trip() {
        let g = parse_full_graph("[FULL_GRAPH]\n<NODES>\nN1: bridge  x\nN2: <NODES>\n<EDGES>\nN1 -> N2: built from").unwrap();
        let v = Vocabulary::from_graphs([&g], ["0.85"], VocabMode::Closed);
        let back = Vocabulary::read_jsonl(v.to_jsonl().as_bytes()).unwrap();
        assert_eq!(back, v);
        assert_eq!(v.confidence_tokens().len(), 1);
    }

    #[test]
    fn corrupt_table_rejected() {
        let v = Vocabulary::from_graphs([], ["a", "b"], VocabMode::Open);
        let text = v.to_jsonl().replace("\"b\"", "\"a\"");
        assert!(Vocabulary::read_jsonl(text.as_bytes()).is_err());
    }
}
