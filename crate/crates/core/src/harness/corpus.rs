//! JSON-lines corpus of QA instances with their graphs.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{parse_evidence, parse_full_graph, verify_subset, EvidenceSubgraph, MemoryGraph, ParseError, ViolationKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusInstance {
    pub id: String,
    pub query: String,
    pub gold_answer: String,
    pub full_graph_text: String,
    pub gold_subgraph_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_vector: Option<Vec<f64>>,
    pub segment_count: usize,
}

const REQUIRED: [&str; 6] = ["id", "query", "gold_answer", "full_graph_text", "gold_subgraph_text", "segment_count"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: malformed JSON: {msg}")]
    Json { line: usize, msg: String },
    #[error("line {line}: missing field {field}")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("instance {id}: {what} does not parse: {source}")]
    Parse { id: String, what: &'static str, source: ParseError },
    #[error("instance {id}: gold subgraph is not a subgraph of the full graph: {}", describe(.violations))]
    Violation { id: String, violations: Vec<(ViolationKind, String)> },
}

fn describe(v: &[(ViolationKind, String)]) -> String {
    v.iter()
        .map(|(k, e)| format!("{} ({e})", serde_json::to_value(k).ok().and_then(|x| x.as_str().map(str::to_string)).unwrap_or_default()))
        .collect::<Vec<_>>()
        .join(", ")
}

impl CorpusInstance {
    pub fn full_graph(&self) -> Result<MemoryGraph, CorpusError> {
        parse_full_graph(&self.full_graph_text).map_err(|source| CorpusError::Parse {
            id: self.id.clone(),
            what: "full_graph_text",
            source,
        })
    }

    pub fn gold_subgraph(&self) -> Result<EvidenceSubgraph, CorpusError> {
        parse_evidence(&self.gold_subgraph_text).map_err(|source| CorpusError::Parse {
            id: self.id.clone(),
            what: "gold_subgraph_text",
            source,
        })
    }

    /// Parses both graphs and checks the subset relation.
    pub fn validate(&self) -> Result<(MemoryGraph, EvidenceSubgraph), CorpusError> {
        let full = self.full_graph()?;
        let gold = self.gold_subgraph()?;
        let report = verify_subset(&gold, &full);
        if !report.accepted {
            return Err(CorpusError::Violation {
                id: self.id.clone(),
                violations: report.violations.into_iter().map(|v| (v.kind, v.element)).collect(),
            });
        }
        Ok((full, gold))
    }
}

/// Parses and validates a corpus from JSON lines. Blank lines are skipped;
/// line numbers in errors are 1-based.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<CorpusInstance>, CorpusError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line.map_err(|source| CorpusError::Io { path: format!("line {line_no}"), source })?;
        if text.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CorpusError::Json { line: line_no, msg: e.to_string() })?;
        let obj = value.as_object().ok_or(CorpusError::Json { line: line_no, msg: "expected an object".into() })?;
        if let Some(field) = REQUIRED.iter().find(|f| !obj.contains_key(**f)) {
            return Err(CorpusError::MissingField { line: line_no, field });
        }
        let inst: CorpusInstance =
            serde_json::from_value(value).map_err(|e| CorpusError::Json { line: line_no, msg: e.to_string() })?;
        if !ids.insert(inst.id.clone()) {
            return Err(CorpusError::DuplicateId { line: line_no, id: inst.id });
        }
        inst.validate()?;
        out.push(inst);
    }
    Ok(out)
}

pub fn load_corpus(path: &Path) -> Result<Vec<CorpusInstance>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    parse_corpus(BufReader::new(file))
}

/// One compact JSON object per line, in order.
pub fn write_corpus<W: Write>(mut w: W, corpus: &[CorpusInstance]) -> std::io::Result<()> {
    for inst in corpus {
        serde_json::to_writer(&mut w, inst)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn corpus_to_jsonl(corpus: &[CorpusInstance]) -> String {
    let mut buf = Vec::new();
    write_corpus(&mut buf, corpus).expect("writing to memory");
    String::from_utf8(buf).expect("JSON is UTF-8")
}
