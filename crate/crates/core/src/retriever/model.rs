//! Gated single-layer recurrent decoder over graph tokens.
//!
//! ```text
//! s₀ = tanh(W_c [q; h] + b_c)
//! z  = σ(W_z x + U_z s + b_z)
//! r  = σ(W_r x + U_r s + b_r)
//! n  = tanh(W_n x + U_n (r ⊙ s) + b_n)
//! s' = (1 − z) ⊙ n + z ⊙ s
//! logits = W_o s' + b_o
//! ```
//!
//! `x` is the embedding row of the current input token. Feeding token `t`
//! yields the distribution of token `t + 1`.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::query::QueryEmbedding;
use super::vocab::{TokenId, BOS};
use super::RetrieverError;
use crate::space::UnifiedVector;
use crate::tensor::{axpy, sigmoid, Matrix};

/// Initial update-gate bias. With `z ≈ 0.88` the state mostly carries over
/// between steps, so gradients still reach the conditioning state after
/// a dozen tokens.
pub const UPDATE_GATE_BIAS: f64 = 2.0;

pub const DEFAULT_MODEL_DIM: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrieverDims {
    pub vocab: usize,
    pub model: usize,
    pub query: usize,
    pub unified: usize,
}

impl RetrieverDims {
    pub fn cond(&self) -> usize {
        self.query + self.unified
    }
}

/// Parameter tensor names in storage order.
pub const PARAM_NAMES: [&str; 14] = [
    "embedding", "w_cond", "b_cond", "w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_n", "u_n", "b_n", "w_out", "b_out",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieverModel {
    dims: RetrieverDims,
    pub embedding: Matrix,
    pub w_cond: Matrix,
    pub b_cond: Vec<f64>,
    pub w_z: Matrix,
    pub u_z: Matrix,
    pub b_z: Vec<f64>,
    pub w_r: Matrix,
    pub u_r: Matrix,
    pub b_r: Vec<f64>,
    pub w_n: Matrix,
    pub u_n: Matrix,
    pub b_n: Vec<f64>,
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
}

/// Per-step activations kept for backpropagation.
#[derive(Debug, Clone)]
struct StepCache {
    token: TokenId,
    prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    next: Vec<f64>,
}

/// Forward pass of a whole teacher-forced sequence.
#[derive(Debug, Clone)]
pub struct SequenceForward {
    cond: Vec<f64>,
    s0: Vec<f64>,
    steps: Vec<StepCache>,
    /// `logits[t]` scores the token after input `t`.
    pub logits: Vec<Vec<f64>>,
}

impl RetrieverModel {
    pub fn zeros(dims: RetrieverDims) -> Self {
        let (v, m, c) = (dims.vocab, dims.model, dims.cond());
        Self {
            dims,
            embedding: Matrix::zeros(v, m),
            w_cond: Matrix::zeros(m, c),
            b_cond: vec![0.0; m],
            w_z: Matrix::zeros(m, m),
            u_z: Matrix::zeros(m, m),
            b_z: vec![0.0; m],
            w_r: Matrix::zeros(m, m),
            u_r: Matrix::zeros(m, m),
            b_r: vec![0.0; m],
            w_n: Matrix::zeros(m, m),
            u_n: Matrix::zeros(m, m),
            b_n: vec![0.0; m],
            w_out: Matrix::zeros(v, m),
            b_out: vec![0.0; v],
        }
    }

    /// Weights uniform in ±1/√fan_in, embeddings uniform in ±1, biases zero.
    pub fn random<R: Rng + ?Sized>(dims: RetrieverDims, rng: &mut R) -> Self {
        let mut model = Self::zeros(dims);
        let fill = |m: &mut Matrix, bound: f64, rng: &mut R| {
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            m.as_mut_slice().iter_mut().for_each(|w| *w = dist.sample(rng));
        };
        let inv = |n: usize| 1.0 / (n.max(1) as f64).sqrt();
        fill(&mut model.embedding, 1.0, rng);
        fill(&mut model.w_cond, inv(dims.cond()), rng);
        for w in [&mut model.w_z, &mut model.u_z, &mut model.w_r, &mut model.u_r, &mut model.w_n, &mut model.u_n] {
            fill(w, inv(dims.model), rng);
        }
        fill(&mut model.w_out, inv(dims.model), rng);
        model.b_z.fill(UPDATE_GATE_BIAS);
        model
    }

    pub fn dims(&self) -> RetrieverDims {
        self.dims
    }

    pub fn param_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn slices(&self) -> [&[f64]; 14] {
        [
            self.embedding.as_slice(),
            self.w_cond.as_slice(),
            &self.b_cond,
            self.w_z.as_slice(),
            self.u_z.as_slice(),
            &self.b_z,
            self.w_r.as_slice(),
            self.u_r.as_slice(),
            &self.b_r,
            self.w_n.as_slice(),
            self.u_n.as_slice(),
            &self.b_n,
            self.w_out.as_slice(),
            &self.b_out,
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 14] {
        [
            self.embedding.as_mut_slice(),
            self.w_cond.as_mut_slice(),
            &mut self.b_cond,
            self.w_z.as_mut_slice(),
            self.u_z.as_mut_slice(),
            &mut self.b_z,
            self.w_r.as_mut_slice(),
            self.u_r.as_mut_slice(),
            &mut self.b_r,
            self.w_n.as_mut_slice(),
            self.u_n.as_mut_slice(),
            &mut self.b_n,
            self.w_out.as_mut_slice(),
            &mut self.b_out,
        ]
    }

    /// `(rows, cols)` of each tensor in [`slices`](Self::slices) order;
    /// vectors report one column.
    pub fn shapes(&self) -> [(usize, usize); 14] {
        let d = self.dims;
        let (v, m, c) = (d.vocab, d.model, d.cond());
        [(v, m), (m, c), (m, 1), (m, m), (m, m), (m, 1), (m, m), (m, m), (m, 1), (m, m), (m, m), (m, 1), (v, m), (v, 1)]
    }

    /// Rebuilds a model from tensors in [`slices`](Self::slices) order.
    pub fn from_slices(dims: RetrieverDims, data: &[Vec<f64>]) -> Result<Self, RetrieverError> {
        let mut model = Self::zeros(dims);
        if data.len() != 14 {
            return Err(RetrieverError::Shape(format!("expected 14 parameter tensors, got {}", data.len())));
        }
        for (i, (dst, src)) in model.slices_mut().into_iter().zip(data).enumerate() {
            if dst.len() != src.len() {
                return Err(RetrieverError::Shape(format!(
                    "tensor {} has {} values, expected {}",
                    PARAM_NAMES[i],
                    src.len(),
                    dst.len()
                )));
            }
            dst.copy_from_slice(src);
        }
        Ok(model)
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.slices_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn fill(&mut self, value: f64) {
        for t in self.slices_mut() {
            t.iter_mut().for_each(|v| *v = value);
        }
    }

    pub fn add(&mut self, other: &RetrieverModel) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            axpy(1.0, b, a);
        }
    }

    fn condition(&self, q: &QueryEmbedding, h: &UnifiedVector) -> Result<Vec<f64>, RetrieverError> {
        if q.dim() != self.dims.query {
            return Err(RetrieverError::Dimension { what: "query embedding", expected: self.dims.query, found: q.dim() });
        }
        if h.dim() != self.dims.unified {
            return Err(RetrieverError::Dimension { what: "unified vector", expected: self.dims.unified, found: h.dim() });
        }
        let mut cond = Vec::with_capacity(self.dims.cond());
        cond.extend_from_slice(q.values());
        cond.extend_from_slice(h.values());
        Ok(cond)
    }

    fn initial_from_cond(&self, cond: &[f64]) -> Vec<f64> {
        let mut s0 = self.w_cond.matvec(cond);
        for (v, b) in s0.iter_mut().zip(&self.b_cond) {
            *v = (*v + b).tanh();
        }
        s0
    }

    /// The recurrent state before any token is fed.
    pub fn initial_state(&self, q: &QueryEmbedding, h: &UnifiedVector) -> Result<Vec<f64>, RetrieverError> {
        Ok(self.initial_from_cond(&self.condition(q, h)?))
    }

    fn check_token(&self, token: TokenId) -> Result<(), RetrieverError> {
        if token as usize >= self.dims.vocab {
            return Err(RetrieverError::TokenOutOfRange { token, vocab: self.dims.vocab });
        }
        Ok(())
    }

    fn cell(&self, token: TokenId, prev: &[f64]) -> StepCache {
        let m = self.dims.model;
        let x = self.embedding.row(token as usize);
        let mut z = vec![0.0; m];
        let mut r = vec![0.0; m];
        let mut tmp = vec![0.0; m];
        self.w_z.matvec_into(x, &mut z);
        self.u_z.matvec_into(prev, &mut tmp);
        for i in 0..m {
            z[i] = sigmoid(z[i] + tmp[i] + self.b_z[i]);
        }
        self.w_r.matvec_into(x, &mut r);
        self.u_r.matvec_into(prev, &mut tmp);
        for i in 0..m {
            r[i] = sigmoid(r[i] + tmp[i] + self.b_r[i]);
        }
        let rs: Vec<f64> = r.iter().zip(prev).map(|(a, b)| a * b).collect();
        let mut n = vec![0.0; m];
        self.w_n.matvec_into(x, &mut n);
        self.u_n.matvec_into(&rs, &mut tmp);
        for i in 0..m {
            n[i] = (n[i] + tmp[i] + self.b_n[i]).tanh();
        }
        let next: Vec<f64> = (0..m).map(|i| (1.0 - z[i]) * n[i] + z[i] * prev[i]).collect();
        StepCache { token, prev: prev.to_vec(), z, r, n, next }
    }

    fn head(&self, state: &[f64]) -> Vec<f64> {
        let mut logits = self.w_out.matvec(state);
        axpy(1.0, &self.b_out, &mut logits);
        logits
    }

    /// Feeds one token: returns the logits for the following token and the
    /// updated state.
    pub fn step(&self, state: &[f64], token: TokenId) -> Result<(Vec<f64>, Vec<f64>), RetrieverError> {
        self.check_token(token)?;
        if state.len() != self.dims.model {
            return Err(RetrieverError::Dimension { what: "recurrent state", expected: self.dims.model, found: state.len() });
        }
        let cache = self.cell(token, state);
        Ok((self.head(&cache.next), cache.next))
    }

    /// Runs the whole prefix from the conditioned initial state and returns
    /// the logits after its last token together with the final state.
    pub fn student_step(
        &self,
        prefix: &[TokenId],
        q: &QueryEmbedding,
        h: &UnifiedVector,
    ) -> Result<(Vec<f64>, Vec<f64>), RetrieverError> {
        if prefix.first() != Some(&BOS) {
            return Err(RetrieverError::MissingBos);
        }
        let mut state = self.initial_state(q, h)?;
        let mut logits = Vec::new();
        for &t in prefix {
            (logits, state) = self.step(&state, t)?;
        }
        Ok((logits, state))
    }

    /// Teacher-forced pass over `tokens[..len-1]`; `logits[t]` predicts
    /// `tokens[t + 1]`.
    pub fn forward_sequence(
        &self,
        tokens: &[TokenId],
        q: &QueryEmbedding,
        h: &UnifiedVector,
    ) -> Result<SequenceForward, RetrieverError> {
        if tokens.first() != Some(&BOS) {
            return Err(RetrieverError::MissingBos);
        }
        for &t in tokens {
            self.check_token(t)?;
        }
        let cond = self.condition(q, h)?;
        let s0 = self.initial_from_cond(&cond);
        let inputs = &tokens[..tokens.len().saturating_sub(1)];
        let mut steps = Vec::with_capacity(inputs.len());
        let mut logits = Vec::with_capacity(inputs.len());
        let mut state = s0.clone();
        for &t in inputs {
            let cache = self.cell(t, &state);
            logits.push(self.head(&cache.next));
            state = cache.next.clone();
            steps.push(cache);
        }
        Ok(SequenceForward { cond, s0, steps, logits })
    }

    /// Backpropagation through time. `grad_logits[t]` is the loss gradient
    /// with respect to `forward.logits[t]`; parameter gradients are added to
    /// `grads`.
    pub fn backward_sequence(&self, forward: &SequenceForward, grad_logits: &[Vec<f64>], grads: &mut RetrieverModel) {
        let m = self.dims.model;
        let mut ds = vec![0.0; m];
        let mut dx = vec![0.0; m];
        let mut da = vec![0.0; m];
        let mut drs = vec![0.0; m];
        for (cache, gl) in forward.steps.iter().zip(grad_logits).rev() {
            grads.w_out.add_outer(1.0, gl, &cache.next);
            axpy(1.0, gl, &mut grads.b_out);
            self.w_out.matvec_t_acc(gl, &mut ds);

            let x = self.embedding.row(cache.token as usize);
            let mut ds_prev: Vec<f64> = (0..m).map(|i| ds[i] * cache.z[i]).collect();
            dx.fill(0.0);

            // candidate n
            for i in 0..m {
                da[i] = ds[i] * (1.0 - cache.z[i]) * (1.0 - cache.n[i] * cache.n[i]);
            }
            let rs: Vec<f64> = cache.r.iter().zip(&cache.prev).map(|(a, b)| a * b).collect();
            grads.w_n.add_outer(1.0, &da, x);
            grads.u_n.add_outer(1.0, &da, &rs);
            axpy(1.0, &da, &mut grads.b_n);
            self.w_n.matvec_t_acc(&da, &mut dx);
            drs.fill(0.0);
            self.u_n.matvec_t_acc(&da, &mut drs);
            let dr: Vec<f64> = (0..m).map(|i| drs[i] * cache.prev[i]).collect();
            for i in 0..m {
                ds_prev[i] += drs[i] * cache.r[i];
            }

            // update gate z
            for i in 0..m {
                let dz = ds[i] * (cache.prev[i] - cache.n[i]);
                da[i] = dz * cache.z[i] * (1.0 - cache.z[i]);
            }
            grads.w_z.add_outer(1.0, &da, x);
            grads.u_z.add_outer(1.0, &da, &cache.prev);
            axpy(1.0, &da, &mut grads.b_z);
            self.w_z.matvec_t_acc(&da, &mut dx);
            self.u_z.matvec_t_acc(&da, &mut ds_prev);

            // reset gate r
            for i in 0..m {
                da[i] = dr[i] * cache.r[i] * (1.0 - cache.r[i]);
            }
            grads.w_r.add_outer(1.0, &da, x);
            grads.u_r.add_outer(1.0, &da, &cache.prev);
            axpy(1.0, &da, &mut grads.b_r);
            self.w_r.matvec_t_acc(&da, &mut dx);
            self.u_r.matvec_t_acc(&da, &mut ds_prev);

            axpy(1.0, &dx, grads.embedding.row_mut(cache.token as usize));
            ds = ds_prev;
        }
        for i in 0..m {
            da[i] = ds[i] * (1.0 - forward.s0[i] * forward.s0[i]);
        }
        grads.w_cond.add_outer(1.0, &da, &forward.cond);
        axpy(1.0, &da, &mut grads.b_cond);
    }
}
