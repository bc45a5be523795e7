//! AdamW with decoupled weight decay, plus a linear-warmup cosine schedule.
//!
//! Update for each parameter `p` with gradient `g` at step `t` (1-based):
//!
//! ```text
//! p ← p − lr·wd·p
//! m ← β1·m + (1−β1)·g
//! v ← β2·v + (1−β2)·g²
//! p ← p − lr · (m / (1−β1^t)) / (√(v / (1−β2^t)) + ε)
//! ```

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWParams {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW {
    params: AdamWParams,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    /// One moment buffer per parameter tensor, sized by `lengths`.
    pub fn new(params: AdamWParams, lengths: &[usize]) -> Self {
        Self {
            params,
            step: 0,
            m: lengths.iter().map(|&n| vec![0.0; n]).collect(),
            v: lengths.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Panics if the tensor layout differs from the one given to [`AdamW::new`].
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) {
        assert_eq!(params.len(), self.m.len(), "parameter tensor count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient tensor count changed");
        self.step += 1;
        let AdamWParams { beta1, beta2, eps, weight_decay } = self.params;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            assert_eq!(p.len(), self.m[k].len());
            assert_eq!(g.len(), self.m[k].len());
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                p[i] -= lr * weight_decay * p[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// Linear warmup to `base_lr`, then cosine annealing towards zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineSchedule {
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl CosineSchedule {
    pub fn new(base_lr: f64, total_steps: u64, warmup_ratio: f64) -> Self {
        let warmup_steps = (warmup_ratio * total_steps as f64).round() as u64;
        Self { base_lr, warmup_steps, total_steps: total_steps.max(1) }
    }

    /// Learning rate for 0-based step `step`.
    pub fn lr_at(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.base_lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = (self.total_steps - self.warmup_steps).max(1) as f64;
        let progress = ((step - self.warmup_steps) as f64 / span).min(1.0);
        0.5 * self.base_lr * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}
