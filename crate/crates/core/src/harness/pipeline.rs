//! Stage functions shared by the command-line tool and the tests.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::checkpoint::{section, CheckpointError, Tensor};
use super::config::{ConfigError, EngineConfig};
use super::corpus::{CorpusError, CorpusInstance};
use crate::align::{train_alignment, AlignError, AlignTrainReport};
use crate::fusion::{fuse_states, FusionError};
use crate::graph::{format_confidence, EvidenceSubgraph, MemoryGraph};
use crate::metrics::{evaluate, AnswerPair, EvalReport, MemoryRecord, MetricsError};
use crate::retriever::{
    generate_subgraph, train_retriever, DistillInstance, DistillReport, QueryEmbedder, RetrieverDims, RetrieverError,
    RetrieverModel, VocabMode, Vocabulary,
};
use crate::seed::{component_rng, subseed};
use crate::space::{
    align_forward, encode_state, segment_range, AlignmentModule, InstanceContent, MemoryState, ParadigmId,
    ParadigmRegistry, SpaceError, UnifiedVector,
};
use crate::tensor::Matrix;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Retriever(#[from] RetrieverError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{0}")]
    Invalid(String),
}

/// Shared state every stage needs: encoders, the frozen anchor module and
/// the query embedder, all derived from the configuration's seed.
#[derive(Debug, Clone)]
pub struct Engine {
    pub config: EngineConfig,
    pub registry: ParadigmRegistry,
    pub anchor: ParadigmId,
    pub anchor_module: AlignmentModule,
    pub embedder: QueryEmbedder,
}

/// Answer stand-in for an agent: the first word of the description of the
/// last edge's target, or of the last node when there are no edges.
pub fn read_answer(sub: &EvidenceSubgraph) -> String {
    let g = &sub.graph;
    let node = match g.edges().last() {
        Some(e) => g.node(e.target.as_str()),
        None => g.nodes().last(),
    };
    node.and_then(|n| n.description.split(' ').next()).unwrap_or("").to_string()
}

/// Node sets and edge sets are equal; order is ignored.
pub fn same_subgraph(a: &MemoryGraph, b: &MemoryGraph) -> bool {
    let nodes = |g: &MemoryGraph| g.nodes().iter().map(|n| n.line()).collect::<HashSet<_>>();
    let edges = |g: &MemoryGraph| g.edges().iter().map(|e| e.line()).collect::<HashSet<_>>();
    nodes(a) == nodes(b) && edges(a) == edges(b)
}

/// Vocabulary of every graph in the corpora plus the gold confidences.
pub fn build_vocab(corpora: &[&[CorpusInstance]]) -> Result<Vocabulary, PipelineError> {
    let mut vocab = Vocabulary::new(VocabMode::Closed);
    for corpus in corpora {
        for inst in corpus.iter() {
            let (full, gold) = inst.validate()?;
            vocab.add_graph(&full);
            vocab.add_graph(&gold.graph);
            vocab.add_word(&format_confidence(gold.confidence()));
        }
    }
    Ok(vocab)
}

/// Which segments each fusion paradigm sees at coverage `c`: segment `s`
/// belongs to `paradigms[s % k]` and is revealed when its per-instance
/// uniform draw is below `c`, so higher coverage only adds segments.
pub fn coverage_masks(config: &EngineConfig, inst: &CorpusInstance, coverage: f64) -> Vec<Vec<usize>> {
    let k = config.fusion.paradigms.len();
    let mut rng = component_rng(config.seed, &format!("coverage:{}", inst.id));
    let mut masks = vec![Vec::new(); k];
    for s in 0..inst.segment_count {
        let u: f64 = rng.random();
        if u < coverage {
            masks[s % k].push(s);
        }
    }
    masks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScore {
    pub exact_match: f64,
    pub report: EvalReport,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self, PipelineError> {
        let config = config.resolved()?;
        let registry = ParadigmRegistry::with_entries(config.dimensions.content_dim, &config.paradigm_entries())?;
        let anchor = registry.id(&config.anchor_paradigm)?;
        let d = &config.dimensions;
        let anchor_module = AlignmentModule::random(
            registry.dim(&anchor)?,
            d.align_hidden_dim,
            d.unified_dim,
            &mut component_rng(config.seed, "anchor-align"),
        );
        let embedder = QueryEmbedder::new(d.query_dim, subseed(config.seed, "query-embedder"));
        Ok(Self { config, registry, anchor, anchor_module, embedder })
    }

    pub fn paradigm(&self, name: &str) -> Result<ParadigmId, PipelineError> {
        Ok(self.registry.id(name)?)
    }

    /// The instance's content; a missing vector is drawn from a standard
    /// normal seeded by the instance id.
    pub fn content(&self, inst: &CorpusInstance) -> Result<InstanceContent, PipelineError> {
        let dim = self.config.dimensions.content_dim;
        let content_vector = match &inst.content_vector {
            Some(v) if v.len() == dim => v.clone(),
            Some(v) => {
                return Err(PipelineError::Invalid(format!(
                    "instance {}: content vector has {} values, expected {dim}",
                    inst.id,
                    v.len()
                )))
            }
            None => {
                let mut rng = component_rng(self.config.seed, &format!("content:{}", inst.id));
                (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
            }
        };
        if inst.segment_count == 0 || inst.segment_count > dim {
            return Err(PipelineError::Invalid(format!("instance {}: segment_count must be in 1..={dim}", inst.id)));
        }
        Ok(InstanceContent {
            id: inst.id.clone(),
            content_vector,
            gold_answer: inst.gold_answer.clone(),
            segment_count: inst.segment_count,
            segment_tags: Vec::new(),
        })
    }

    pub fn state(&self, inst: &CorpusInstance, paradigm: &ParadigmId, mask: Option<&[usize]>) -> Result<MemoryState, PipelineError> {
        Ok(encode_state(&self.registry, paradigm, &self.content(inst)?, mask)?)
    }

    pub fn anchor_vector(&self, inst: &CorpusInstance) -> Result<UnifiedVector, PipelineError> {
        Ok(align_forward(&self.anchor_module, &self.state(inst, &self.anchor, None)?)?)
    }

    pub fn retriever_dims(&self, vocab: &Vocabulary) -> RetrieverDims {
        let d = &self.config.dimensions;
        RetrieverDims { vocab: vocab.len(), model: d.model_dim, query: d.query_dim, unified: d.unified_dim }
    }

    pub fn distill_instances(&self, corpus: &[CorpusInstance]) -> Result<Vec<DistillInstance>, PipelineError> {
        corpus
            .iter()
            .map(|inst| {
                let (full_graph, gold) = inst.validate()?;
                Ok(DistillInstance {
                    id: inst.id.clone(),
                    query_text: inst.query.clone(),
                    query: self.embedder.embed(&inst.query),
                    full_graph,
                    gold,
                    anchor: self.anchor_vector(inst)?,
                })
            })
            .collect()
    }

    /// Stage 1: distillation of a freshly initialized retriever.
    pub fn train_retriever(
        &self,
        corpus: &[CorpusInstance],
        vocab: &Vocabulary,
    ) -> Result<(RetrieverModel, DistillReport), PipelineError> {
        let data = self.distill_instances(corpus)?;
        let init = RetrieverModel::random(self.retriever_dims(vocab), &mut component_rng(self.config.seed, "retriever-init"));
        Ok(train_retriever(init, &data, vocab, &self.config.distill)?)
    }

    /// Stage 2: contrastive alignment of one paradigm to the frozen anchor,
    /// on the first `align.demonstrations` instances.
    pub fn train_align(
        &self,
        corpus: &[CorpusInstance],
        paradigm: &str,
    ) -> Result<(AlignmentModule, AlignTrainReport), PipelineError> {
        let target = self.paradigm(paradigm)?;
        let n = self.config.align.demonstrations;
        if corpus.len() < n {
            return Err(PipelineError::Invalid(format!("alignment needs {n} demonstrations, corpus has {}", corpus.len())));
        }
        let demos = &corpus[..n];
        let anchor_states = demos.iter().map(|i| self.state(i, &self.anchor, None)).collect::<Result<Vec<_>, _>>()?;
        let target_states = demos.iter().map(|i| self.state(i, &target, None)).collect::<Result<Vec<_>, _>>()?;
        let init = AlignmentModule::random(
            self.registry.dim(&target)?,
            self.config.dimensions.align_hidden_dim,
            self.config.dimensions.unified_dim,
            &mut component_rng(self.config.seed, &format!("align-init:{paradigm}")),
        );
        let (module, mut report) = train_alignment(&self.anchor_module, init, &anchor_states, &target_states, &self.config.align)?;
        report.paradigm = paradigm.to_string();
        Ok((module, report))
    }

    fn max_len(&self) -> usize {
        self.config.distill.max_output_length
    }

    /// Retrieval from one paradigm's full memory. The anchor paradigm uses
    /// the frozen anchor module; others need their trained module.
    pub fn retrieve(
        &self,
        model: &RetrieverModel,
        vocab: &Vocabulary,
        inst: &CorpusInstance,
        paradigm: &str,
        module: Option<&AlignmentModule>,
    ) -> Result<EvidenceSubgraph, PipelineError> {
        let id = self.paradigm(paradigm)?;
        let module = if id == self.anchor {
            &self.anchor_module
        } else {
            module.ok_or_else(|| PipelineError::Invalid(format!("no alignment module for paradigm {paradigm}")))?
        };
        let h = align_forward(module, &self.state(inst, &id, None)?)?;
        let full = inst.full_graph()?;
        Ok(generate_subgraph(model, vocab, &full, &self.embedder.embed(&inst.query), &h, self.max_len())?)
    }

    /// The fusion paradigms' states at `coverage`, or only `only`'s state.
    pub fn fusion_states(
        &self,
        inst: &CorpusInstance,
        coverage: f64,
        only: Option<&str>,
    ) -> Result<Vec<MemoryState>, PipelineError> {
        let masks = coverage_masks(&self.config, inst, coverage);
        let mut states = Vec::new();
        for (name, mask) in self.config.fusion.paradigms.iter().zip(&masks) {
            if only.is_some_and(|o| o != name) {
                continue;
            }
            states.push(self.state(inst, &self.paradigm(name)?, Some(mask))?);
        }
        if states.is_empty() {
            return Err(PipelineError::Invalid(format!("{} is not a fusion paradigm", only.unwrap_or(""))));
        }
        Ok(states)
    }

    /// Fused retrieval over the fusion paradigms at `coverage`.
    pub fn fuse_retrieve(
        &self,
        model: &RetrieverModel,
        vocab: &Vocabulary,
        modules: &BTreeMap<ParadigmId, AlignmentModule>,
        inst: &CorpusInstance,
        coverage: f64,
        only: Option<&str>,
    ) -> Result<EvidenceSubgraph, PipelineError> {
        let states = self.fusion_states(inst, coverage, only)?;
        let fused = fuse_states(&states, modules)?;
        let full = inst.full_graph()?;
        Ok(generate_subgraph(model, vocab, &full, &self.embedder.embed(&inst.query), &fused.values, self.max_len())?)
    }

    /// Metrics of `retrieved[i]` against `corpus[i]`, plus the fraction of
    /// exact gold reconstructions.
    pub fn score(&self, corpus: &[CorpusInstance], retrieved: &[EvidenceSubgraph]) -> Result<RetrievalScore, PipelineError> {
        if corpus.len() != retrieved.len() {
            return Err(PipelineError::Invalid("one retrieval per instance is required".into()));
        }
        let mut answers = Vec::with_capacity(corpus.len());
        let mut records = Vec::with_capacity(corpus.len());
        let mut exact = 0usize;
        for (inst, sub) in corpus.iter().zip(retrieved) {
            let gold = inst.gold_subgraph()?;
            exact += usize::from(same_subgraph(&sub.graph, &gold.graph));
            answers.push(AnswerPair::new(read_answer(sub), [inst.gold_answer.clone()]));
            records.push(MemoryRecord {
                retrieved_text: sub.to_text(),
                gold_answer: inst.gold_answer.clone(),
                has_gold_evidence: true,
            });
        }
        Ok(RetrievalScore {
            exact_match: exact as f64 / corpus.len().max(1) as f64,
            report: evaluate(&answers, &records)?,
        })
    }
}

fn matrix_tensor(m: &Matrix) -> Tensor {
    Tensor::from_f64(vec![m.rows(), m.cols()], m.as_slice())
}

/// Checkpoint sections of an alignment module.
pub fn module_sections(m: &AlignmentModule) -> Vec<(String, Tensor)> {
    vec![
        ("w1".into(), matrix_tensor(&m.w1)),
        ("b1".into(), Tensor::from_f64(vec![m.b1.len()], &m.b1)),
        ("w2".into(), matrix_tensor(&m.w2)),
        ("b2".into(), Tensor::from_f64(vec![m.b2.len()], &m.b2)),
    ]
}

fn load_matrix(sections: &[(String, Tensor)], name: &str) -> Result<Matrix, PipelineError> {
    let t = section(sections, name)?;
    if t.shape.len() != 2 {
        return Err(PipelineError::Invalid(format!("section {name} must have rank 2")));
    }
    Ok(Matrix::from_vec(t.shape[0], t.shape[1], t.to_f64()))
}

pub fn module_from_sections(sections: &[(String, Tensor)]) -> Result<AlignmentModule, PipelineError> {
    let w1 = load_matrix(sections, "w1")?;
    let w2 = load_matrix(sections, "w2")?;
    let b1 = section(sections, "b1")?.to_f64();
    let b2 = section(sections, "b2")?.to_f64();
    if b1.len() != w1.rows() || w2.cols() != w1.rows() || b2.len() != w2.rows() {
        return Err(PipelineError::Invalid("alignment module tensors have inconsistent shapes".into()));
    }
    let mut m = AlignmentModule::zeros(w1.cols(), w1.rows(), w2.rows());
    (m.w1, m.b1, m.w2, m.b2) = (w1, b1, w2, b2);
    Ok(m)
}

/// Checkpoint sections of a retriever, with its dimensions in `dims`.
pub fn retriever_sections(model: &RetrieverModel) -> Vec<(String, Tensor)> {
    let d = model.dims();
    let mut out = vec![(
        "dims".to_string(),
        Tensor::new(vec![4], vec![d.vocab as f32, d.model as f32, d.query as f32, d.unified as f32]),
    )];
    for ((name, data), (rows, cols)) in crate::retriever::model::PARAM_NAMES.iter().zip(model.slices()).zip(model.shapes()) {
        out.push((name.to_string(), Tensor::from_f64(vec![rows, cols], data)));
    }
    out
}

pub fn retriever_from_sections(sections: &[(String, Tensor)]) -> Result<RetrieverModel, PipelineError> {
    let d = &section(sections, "dims")?.data;
    if d.len() != 4 {
        return Err(PipelineError::Invalid("dims section must hold 4 values".into()));
    }
    let dims = RetrieverDims { vocab: d[0] as usize, model: d[1] as usize, query: d[2] as usize, unified: d[3] as usize };
    let data = crate::retriever::model::PARAM_NAMES
        .iter()
        .map(|n| section(sections, n).map(|t| t.to_f64()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RetrieverModel::from_slices(dims, &data)?)
}

/// `(start, end)` coordinates of each segment, for reports.
pub fn segment_bounds(dim: usize, count: usize) -> Vec<(usize, usize)> {
    (0..count).map(|s| segment_range(dim, count, s)).map(|r| (r.start, r.end)).collect()
}
