use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::distill::{distill_loss, teacher_distribution, DistillConfig};
use super::model::RetrieverModel;
use super::query::QueryEmbedding;
use super::vocab::{TokenId, Vocabulary, UNK};
use super::RetrieverError;
use crate::graph::{linearize, verify_subset, EvidenceSubgraph, MemoryGraph};
use crate::optim::{AdamW, AdamWParams, CosineSchedule};
use crate::seed::{rng_from_seed, subseed};
use crate::space::UnifiedVector;

/// One supervised example: the conditioning inputs and the gold evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillInstance {
    pub id: String,
    pub query_text: String,
    pub query: QueryEmbedding,
    pub full_graph: MemoryGraph,
    pub gold: EvidenceSubgraph,
    pub anchor: UnifiedVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillReport {
    /// Mean per-instance loss of each epoch, measured during the epoch.
    pub epoch_losses: Vec<f64>,
    pub epoch_kl: Vec<f64>,
    pub epoch_ce: Vec<f64>,
    pub steps: u64,
    pub param_count: usize,
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

/// Checks every instance and linearizes its gold subgraph, confidence
/// included.
pub fn prepare_targets(
    corpus: &[DistillInstance],
    vocab: &Vocabulary,
    config: &DistillConfig,
) -> Result<Vec<Vec<TokenId>>, RetrieverError> {
    corpus
        .iter()
        .map(|inst| {
            let report = verify_subset(&inst.gold, &inst.full_graph);
            if !report.accepted {
                return Err(RetrieverError::Unverified {
                    id: inst.id.clone(),
                    kinds: report.violations.iter().map(|v| v.kind).collect(),
                });
            }
            let words = inst.query_text.split_whitespace().count();
            if words > config.max_input_length {
                return Err(RetrieverError::Instance {
                    id: inst.id.clone(),
                    msg: format!("query has {words} words, max_input_length is {}", config.max_input_length),
                });
            }
            let seq = linearize(&inst.gold.graph, vocab, Some(inst.gold.confidence()))?;
            if seq.len() > config.max_output_length {
                return Err(RetrieverError::Instance {
                    id: inst.id.clone(),
                    msg: format!("gold has {} tokens, max_output_length is {}", seq.len(), config.max_output_length),
                });
            }
            if seq.tokens.contains(&UNK) {
                return Err(RetrieverError::Instance { id: inst.id.clone(), msg: "gold contains out-of-vocabulary words".into() });
            }
            Ok(seq.tokens)
        })
        .collect()
}

/// Loss of one teacher-forced sequence, accumulating parameter gradients
/// into `grads` when given.
pub fn sequence_loss(
    model: &RetrieverModel,
    tokens: &[TokenId],
    inst: &DistillInstance,
    config: &DistillConfig,
    grads: Option<&mut RetrieverModel>,
) -> Result<super::DistillLoss, RetrieverError> {
    let vocab = model.dims().vocab;
    let fwd = model.forward_sequence(tokens, &inst.query, &inst.anchor)?;
    let teacher = (1..tokens.len())
        .map(|t| teacher_distribution(tokens, t, config.teacher_epsilon, vocab))
        .collect::<Result<Vec<_>, _>>()?;
    let out = distill_loss(&teacher, &fwd.logits, &tokens[1..], config)?;
    if let Some(g) = grads {
        model.backward_sequence(&fwd, &out.grad_logits, g);
    }
    Ok(out)
}

/// AdamW over the distillation loss with teacher forcing. Every gold
/// subgraph is verified against its full graph first; the first failing
/// instance aborts training.
pub fn train_retriever(
    model_init: RetrieverModel,
    corpus: &[DistillInstance],
    vocab: &Vocabulary,
    config: &DistillConfig,
) -> Result<(RetrieverModel, DistillReport), RetrieverError> {
    config.validate()?;
    let start = Instant::now();
    if vocab.len() != model_init.dims().vocab {
        return Err(RetrieverError::Dimension { what: "vocabulary", expected: model_init.dims().vocab, found: vocab.len() });
    }
    let targets = prepare_targets(corpus, vocab, config)?;
    let mut model = model_init;
    let mut grads = RetrieverModel::zeros(model.dims());
    let lengths: Vec<usize> = model.slices().iter().map(|s| s.len()).collect();
    let mut opt = AdamW::new(AdamWParams { weight_decay: config.weight_decay, ..Default::default() }, &lengths);
    let batch = config.effective_batch_size();
    let per_epoch = corpus.len().div_ceil(batch) as u64;
    let schedule = CosineSchedule::new(config.learning_rate, per_epoch * config.epochs as u64, config.warmup);
    let mut rng = rng_from_seed(subseed(config.seed, "retriever"));
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut report = DistillReport {
        epoch_losses: Vec::new(),
        epoch_kl: Vec::new(),
        epoch_ce: Vec::new(),
        steps: 0,
        param_count: model.param_count(),
        wall_clock_seconds: 0.0,
    };

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut kl_sum, mut ce_sum) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(batch) {
            grads.fill(0.0);
            for &i in chunk {
                let out = sequence_loss(&model, &targets[i], &corpus[i], config, Some(&mut grads))?;
                loss_sum += out.loss;
                kl_sum += out.kl;
                ce_sum += out.ce;
            }
            grads.scale(1.0 / chunk.len() as f64);
            let lr = schedule.lr_at(report.steps);
            opt.step(&mut model.slices_mut(), &grads.slices(), lr);
            report.steps += 1;
        }
        let n = corpus.len().max(1) as f64;
        report.epoch_losses.push(loss_sum / n);
        report.epoch_kl.push(kl_sum / n);
        report.epoch_ce.push(ce_sum / n);
    }
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok((model, report))
}
