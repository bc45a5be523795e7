//! Label-smoothed teacher and the KL + CE distillation objective.
//!
//! With `p` the teacher distribution, `z` the student logits, `y` the gold
//! token and `T` the temperature, the loss over `L` steps is
//!
//! ```text
//! kl_weight · T² · (1/L) Σ KL(p ‖ softmax(z / T)) + ce_weight · (1/L) Σ −log softmax(z)[y]
//! ```

use serde::{Deserialize, Serialize};

use super::vocab::TokenId;
use super::RetrieverError;
use crate::tensor::{log_sum_exp, softmax};

/// Sum tolerance for teacher distributions.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub kl_weight: f64,
    pub kl_temperature: f64,
    pub ce_weight: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub per_device_batch_size: usize,
    pub gradient_accumulation_steps: usize,
    /// Fraction of optimizer steps spent in linear warmup.
    pub warmup: f64,
    /// Upper bound on query words.
    pub max_input_length: usize,
    /// Upper bound on linearized gold tokens.
    pub max_output_length: usize,
    /// Teacher label smoothing `ε`.
    pub teacher_epsilon: f64,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            kl_weight: 0.5,
            kl_temperature: 2.0,
            ce_weight: 1.0,
            epochs: 3,
            learning_rate: 1e-5,
            weight_decay: 0.01,
            per_device_batch_size: 4,
            gradient_accumulation_steps: 4,
            warmup: 0.05,
            max_input_length: 4096,
            max_output_length: 512,
            teacher_epsilon: 0.05,
            seed: 42,
        }
    }
}

impl DistillConfig {
    /// Schedule for the small recurrent student trained from scratch. The
    /// defaults (3 epochs at 1e-5, effective batch 16) are sized for
    /// adapter fine-tuning of a large pretrained model and barely move a
    /// randomly initialized one.
    pub fn desk_scale() -> Self {
        Self { epochs: 30, learning_rate: 1e-2, gradient_accumulation_steps: 1, ..Self::default() }
    }

    pub fn effective_batch_size(&self) -> usize {
        self.per_device_batch_size * self.gradient_accumulation_steps
    }

    pub fn validate(&self) -> Result<(), RetrieverError> {
        let fail = |m: &str| Err(RetrieverError::Config(m.to_string()));
        if !(self.kl_temperature > 0.0) {
            return fail("kl_temperature must be positive");
        }
        if !(0.0..1.0).contains(&self.teacher_epsilon) {
            return fail("teacher_epsilon must be in [0, 1)");
        }
        if self.kl_weight < 0.0 || self.ce_weight < 0.0 || self.weight_decay < 0.0 || !(self.learning_rate >= 0.0) {
            return fail("loss weights, weight_decay and learning_rate must be non-negative");
        }
        if self.effective_batch_size() == 0 {
            return fail("per_device_batch_size and gradient_accumulation_steps must be positive");
        }
        if !(0.0..=1.0).contains(&self.warmup) {
            return fail("warmup must be in [0, 1]");
        }
        Ok(())
    }
}

/// `(1 − ε)·onehot(gold[step]) + ε/V`.
pub fn teacher_distribution(gold: &[TokenId], step: usize, epsilon: f64, vocab: usize) -> Result<Vec<f64>, RetrieverError> {
    if step >= gold.len() {
        return Err(RetrieverError::StepOutOfRange { step, len: gold.len() });
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(RetrieverError::Config(format!("epsilon must be in [0, 1), got {epsilon}")));
    }
    let token = gold[step] as usize;
    if token >= vocab {
        return Err(RetrieverError::TokenOutOfRange { token: gold[step], vocab });
    }
    let mut p = vec![epsilon / vocab as f64; vocab];
    p[token] += 1.0 - epsilon;
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillLoss {
    pub loss: f64,
    /// Mean per-step KL divergence, before weighting and the `T²` factor.
    pub kl: f64,
    /// Mean per-step gold cross-entropy, before weighting.
    pub ce: f64,
    /// Gradient of `loss` with respect to each step's logits.
    pub grad_logits: Vec<Vec<f64>>,
}

/// Distillation loss and its logit gradients. `gold[t]` is the token the
/// cross-entropy term scores at step `t`.
pub fn distill_loss(
    teacher: &[Vec<f64>],
    logits: &[Vec<f64>],
    gold: &[TokenId],
    config: &DistillConfig,
) -> Result<DistillLoss, RetrieverError> {
    if teacher.len() != logits.len() || gold.len() != logits.len() {
        return Err(RetrieverError::LengthMismatch { teacher: teacher.len(), student: logits.len(), gold: gold.len() });
    }
    if !(config.kl_temperature > 0.0) {
        return Err(RetrieverError::Config("kl_temperature must be positive".into()));
    }
    let steps = logits.len();
    if steps == 0 {
        return Ok(DistillLoss { loss: 0.0, kl: 0.0, ce: 0.0, grad_logits: Vec::new() });
    }
    let t = config.kl_temperature;
    let inv_l = 1.0 / steps as f64;
    let (mut kl_sum, mut ce_sum) = (0.0, 0.0);
    let mut grads = Vec::with_capacity(steps);
    for (step, ((p, z), &y)) in teacher.iter().zip(logits).zip(gold).enumerate() {
        let v = z.len();
        if p.len() != v {
            return Err(RetrieverError::Dimension { what: "teacher distribution", expected: v, found: p.len() });
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE || p.iter().any(|&x| !(x >= 0.0)) {
            return Err(RetrieverError::NotNormalized { step, sum });
        }
        if y as usize >= v {
            return Err(RetrieverError::TokenOutOfRange { token: y, vocab: v });
        }
        let scaled: Vec<f64> = z.iter().map(|x| x / t).collect();
        let lse_t = log_sum_exp(&scaled);
        let kl: f64 = p
            .iter()
            .zip(&scaled)
            .filter(|(&pi, _)| pi > 0.0)
            .map(|(&pi, &si)| pi * (pi.ln() - (si - lse_t)))
            .sum();
        kl_sum += kl;
        ce_sum += log_sum_exp(z) - z[y as usize];

        let q_t = softmax(&scaled);
        let q_1 = softmax(z);
        let kl_scale = config.kl_weight * t * inv_l;
        let ce_scale = config.ce_weight * inv_l;
        let mut g: Vec<f64> = (0..v).map(|i| kl_scale * (q_t[i] - p[i]) + ce_scale * q_1[i]).collect();
        g[y as usize] -= ce_scale;
        grads.push(g);
    }
    let kl = kl_sum * inv_l;
    let ce = ce_sum * inv_l;
    Ok(DistillLoss { loss: config.kl_weight * t * t * kl + config.ce_weight * ce, kl, ce, grad_logits: grads })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kl_weight: f64, kl_temperature: f64, ce_weight: f64) -> DistillConfig {
        DistillConfig { kl_weight, kl_temperature, ce_weight, ..DistillConfig::default() }
    }

    #[test]
    fn teacher_examples() {
        assert_eq!(teacher_distribution(&[3, 1], 1, 0.0, 4).unwrap(), vec![0.0, 1.0, 0.0, 0.0]);
        let p = teacher_distribution(&[0, 2], 1, 0.1, 5).unwrap();
        assert!((p[2] - 0.92).abs() < 1e-15);
        for i in [0, 1, 3, 4] {
            assert!((p[i] - 0.02).abs() < 1e-15);
        }
        let p = teacher_distribution(&[7], 0, 0.37, 11).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(matches!(teacher_distribution(&[1], 1, 0.1, 5), Err(RetrieverError::StepOutOfRange { .. })));
    }

    #[test]
    fn uniform_student_against_one_hot_is_log_v() {
        let out = distill_loss(&[vec![0.0, 0.0, 1.0, 0.0]], &[vec![0.3; 4]], &[2], &cfg(1.0, 1.0, 0.0)).unwrap();
        assert!((out.loss - 4f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn matched_student_has_zero_kl() {
        let p = vec![0.1, 0.6, 0.3];
        let t = 2.0;
        let logits: Vec<f64> = p.iter().map(|x: &f64| x.ln() * t).collect();
        let out = distill_loss(&[p.clone()], &[logits.clone()], &[1], &cfg(0.5, t, 1.0)).unwrap();
        assert!(out.kl.abs() < 1e-9);
        let ce = -crate::tensor::softmax(&logits)[1].ln();
        assert!((out.loss - ce).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = DistillConfig::default();
        assert!(matches!(distill_loss(&[vec![0.5, 0.4]], &[vec![0.0, 0.0]], &[0], &c), Err(RetrieverError::NotNormalized { .. })));
        assert!(matches!(distill_loss(&[], &[vec![0.0]], &[0], &c), Err(RetrieverError::LengthMismatch { .. })));
    }
}
