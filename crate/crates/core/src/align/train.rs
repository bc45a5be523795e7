use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{cosine, infonce_loss, sample_negatives, AlignError};
use crate::optim::{AdamW, AdamWParams, CosineSchedule};
use crate::seed::{rng_from_seed, subseed};
use crate::space::{AlignGrads, AlignmentModule, MemoryState, SpaceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignConfig {
    /// Demonstration count `N`.
    pub demonstrations: usize,
    /// Negative sample size `C`.
    pub negatives: usize,
    pub batch_size: usize,
    /// InfoNCE temperature `τ`.
    #[serde(alias = "temperature")]
    pub contrastive_temperature: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub warmup_ratio: f64,
    pub mse_weight: f64,
    /// Trailing demonstrations kept out of training and used for the report.
    pub holdout: usize,
    pub seed: u64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            demonstrations: 2500,
            negatives: 255,
            batch_size: 32,
            contrastive_temperature: 0.07,
            epochs: 20,
            learning_rate: 1e-4,
            weight_decay: 0.01,
            warmup_ratio: 0.1,
            mse_weight: 0.1,
            holdout: 500,
            seed: 42,
        }
    }
}

impl AlignConfig {
    pub fn train_count(&self) -> usize {
        self.demonstrations.saturating_sub(self.holdout)
    }

    pub fn validate(&self) -> Result<(), AlignError> {
        let fail = |m: String| Err(AlignError::Config(m));
        let train = self.train_count();
        if self.holdout >= self.demonstrations {
            return fail(format!("holdout {} leaves no training demonstrations out of {}", self.holdout, self.demonstrations));
        }
        if self.negatives < 1 || self.negatives > train - 1 {
            return fail(format!("negatives must be in 1..={} (training pool {train}), got {}", train.saturating_sub(1), self.negatives));
        }
        if self.batch_size < 1 || self.batch_size > self.demonstrations {
            return fail(format!("batch size must be in 1..={}, got {}", self.demonstrations, self.batch_size));
        }
        if !(self.contrastive_temperature > 0.0) {
            return fail(format!("temperature must be positive, got {}", self.contrastive_temperature));
        }
        if self.mse_weight < 0.0 || !(0.0..=1.0).contains(&self.warmup_ratio) || !(self.learning_rate >= 0.0) {
            return fail("mse_weight, warmup_ratio and learning_rate must be non-negative (warmup_ratio ≤ 1)".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignEval {
    /// Fraction of evaluated instances whose nearest anchor vector (cosine)
    /// is their own.
    pub top1_accuracy: f64,
    pub same_instance_cosine: f64,
    pub different_instance_cosine: f64,
    pub count: usize,
}

impl AlignEval {
    pub fn cosine_gap(&self) -> f64 {
        self.same_instance_cosine - self.different_instance_cosine
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignTrainReport {
    pub paradigm: String,
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
    pub initial_eval: AlignEval,
    pub final_eval: AlignEval,
    pub anchor_digest_before: String,
    pub anchor_digest_after: String,
    /// Not persisted: timings differ from run to run.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl AlignTrainReport {
    pub fn heldout_accuracy(&self) -> f64 {
        self.final_eval.top1_accuracy
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn check_states(states: &[MemoryState], dim: usize) -> Result<(), AlignError> {
    let Some(first) = states.first() else { return Ok(()) };
    for (i, s) in states.iter().enumerate() {
        if s.paradigm != first.paradigm {
            return Err(AlignError::ParadigmMismatch {
                index: i,
                expected: first.paradigm.to_string(),
                found: s.paradigm.to_string(),
            });
        }
        if s.raw.len() != dim {
            return Err(SpaceError::DimensionMismatch { expected: dim, found: s.raw.len() }.into());
        }
    }
    Ok(())
}

/// Nearest-anchor matching and mean cosines over `range` of the state lists.
pub fn evaluate_alignment(
    anchor: &AlignmentModule,
    target: &AlignmentModule,
    anchor_states: &[MemoryState],
    target_states: &[MemoryState],
    range: std::ops::Range<usize>,
) -> Result<AlignEval, AlignError> {
    let anchors: Vec<Vec<f64>> = anchor_states[range.clone()]
        .iter()
        .map(|s| anchor.forward_raw(&s.raw))
        .collect::<Result<_, _>>()?;
    let targets: Vec<Vec<f64>> = target_states[range]
        .iter()
        .map(|s| target.forward_raw(&s.raw))
        .collect::<Result<_, _>>()?;
    let n = anchors.len();
    let (mut hits, mut same, mut diff) = (0usize, 0.0, 0.0);
    for (i, t) in targets.iter().enumerate() {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (j, a) in anchors.iter().enumerate() {
            let c = cosine(t, a);
            if c > best.0 {
                best = (c, j);
            }
            if i == j {
                same += c;
            } else {
                diff += c;
            }
        }
        hits += usize::from(best.1 == i);
    }
    Ok(AlignEval {
        top1_accuracy: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
        same_instance_cosine: if n == 0 { 0.0 } else { same / n as f64 },
        different_instance_cosine: if n < 2 { 0.0 } else { diff / (n * (n - 1)) as f64 },
        count: n,
    })
}

/// Trains `target_init` against the frozen `anchor` module.
///
/// Each epoch shuffles the training demonstrations into minibatches of
/// `batch_size`. For every instance `j` in a batch, `negatives` anchor states
/// other than `j` are drawn, the InfoNCE loss (plus `mse_weight` times the
/// mean squared difference between the two unified vectors) is evaluated,
/// and the batch-mean gradient drives one AdamW step under a warmup + cosine
/// schedule.
pub fn train_alignment(
    anchor: &AlignmentModule,
    target_init: AlignmentModule,
    anchor_states: &[MemoryState],
    target_states: &[MemoryState],
    config: &AlignConfig,
) -> Result<(AlignmentModule, AlignTrainReport), AlignError> {
    let started = Instant::now();
    config.validate()?;
    if anchor_states.len() != target_states.len() {
        return Err(AlignError::LengthMismatch { anchor: anchor_states.len(), target: target_states.len() });
    }
    if anchor_states.len() != config.demonstrations {
        return Err(AlignError::Config(format!(
            "config declares {} demonstrations but {} were given",
            config.demonstrations,
            anchor_states.len()
        )));
    }
    check_states(anchor_states, anchor.input_dim())?;
    check_states(target_states, target_init.input_dim())?;
    if anchor.output_dim() != target_init.output_dim() {
        return Err(SpaceError::DimensionMismatch { expected: anchor.output_dim(), found: target_init.output_dim() }.into());
    }

    let digest_before = anchor.digest();
    let n = config.demonstrations;
    let train_n = config.train_count();
    let eval_range = if config.holdout > 0 { train_n..n } else { 0..n };

    // The anchor is frozen, so its outputs are computed once.
    let anchor_vecs: Vec<Vec<f64>> = anchor_states
        .iter()
        .map(|s| anchor.forward_raw(&s.raw))
        .collect::<Result<_, _>>()?;

    let initial_eval = evaluate_alignment(anchor, &target_init, anchor_states, target_states, eval_range.clone())?;

    let mut target = target_init;
    let lengths: Vec<usize> = target.slices().iter().map(|s| s.len()).collect();
    let mut opt = AdamW::new(
        AdamWParams { weight_decay: config.weight_decay, ..Default::default() },
        &lengths,
    );
    let steps_per_epoch = train_n.div_ceil(config.batch_size) as u64;
    let schedule = CosineSchedule::new(config.learning_rate, steps_per_epoch * config.epochs as u64, config.warmup_ratio);
    let mut rng = rng_from_seed(subseed(config.seed, "contrastive-align"));
    let dim = target.output_dim() as f64;

    let mut order: Vec<usize> = (0..train_n).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut step = 0u64;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads = AlignGrads::zeros_like(&target);
            for &j in batch {
                let negs = sample_negatives(train_n, j, config.negatives, &mut rng)?;
                let neg_refs: Vec<&[f64]> = negs.iter().map(|&k| anchor_vecs[k].as_slice()).collect();
                let x = &target_states[j].raw;
                let cache = target.forward_cached(x);
                let h_a = &anchor_vecs[j];
                let nce = infonce_loss(h_a, &cache.out, &neg_refs, config.contrastive_temperature)?;
                let mut upstream = nce.grad_target;
                let mut mse = 0.0;
                for (k, (t, a)) in cache.out.iter().zip(h_a).enumerate() {
                    let d = t - a;
                    mse += d * d;
                    upstream[k] += config.mse_weight * 2.0 * d / dim;
                }
                epoch_loss += nce.loss + config.mse_weight * mse / dim;
                target.backward_acc(x, &cache, &upstream, &mut grads);
            }
            grads.scale(1.0 / batch.len() as f64);
            let lr = schedule.lr_at(step);
            opt.step(&mut target.slices_mut(), &grads.slices(), lr);
            step += 1;
        }
        epoch_losses.push(epoch_loss / train_n as f64);
    }

    let final_eval = evaluate_alignment(anchor, &target, anchor_states, target_states, eval_range)?;
    let digest_after = anchor.digest();
    let report = AlignTrainReport {
        paradigm: target_states.first().map(|s| s.paradigm.to_string()).unwrap_or_default(),
        epoch_losses,
        steps: step,
        initial_eval,
        final_eval,
        anchor_digest_before: hex(&digest_before),
        anchor_digest_after: hex(&digest_after),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((target, report))
}
