use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{MemoryState, SpaceError, UnifiedVector};
use crate::seed::fnv1a64_extend;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    /// Linear map; used to build hand-checkable modules.
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Self::Tanh => x.tanh(),
            Self::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Self::Tanh => 1.0 - y * y,
            Self::Identity => 1.0,
        }
    }
}

/// Two-layer feed-forward map `W2 · act(W1 x + b1) + b2` from a paradigm's
/// raw state into the unified space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentModule {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub activation: Activation,
}

/// Gradients with the same layout as [`AlignmentModule`].
#[derive(Debug, Clone, PartialEq)]
pub struct AlignGrads {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl AlignGrads {
    pub fn zeros_like(m: &AlignmentModule) -> Self {
        Self {
            w1: Matrix::zeros(m.w1.rows(), m.w1.cols()),
            b1: vec![0.0; m.b1.len()],
            w2: Matrix::zeros(m.w2.rows(), m.w2.cols()),
            b2: vec![0.0; m.b2.len()],
        }
    }

    pub fn slices(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [self.w1.as_mut_slice(), &mut self.b1, self.w2.as_mut_slice(), &mut self.b2]
    }

    pub fn scale(&mut self, s: f64) {
        for p in self.slices_mut() {
            p.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn add(&mut self, other: &AlignGrads) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
    }
}

pub(crate) struct ForwardCache {
    pub hidden: Vec<f64>,
    pub out: Vec<f64>,
}

impl AlignmentModule {
    /// Uniform `[-1/√fan_in, 1/√fan_in]` weights and zero biases.
    pub fn random<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, output_dim: usize, rng: &mut R) -> Self {
        let bound1 = 1.0 / (input_dim as f64).sqrt();
        let bound2 = 1.0 / (hidden_dim as f64).sqrt();
        let w1 = Matrix::from_fn(hidden_dim, input_dim, |_, _| rng.random_range(-bound1..=bound1));
        let w2 = Matrix::from_fn(output_dim, hidden_dim, |_, _| rng.random_range(-bound2..=bound2));
        Self { w1, b1: vec![0.0; hidden_dim], w2, b2: vec![0.0; output_dim], activation: Activation::Tanh }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        Self {
            w1: Matrix::zeros(hidden_dim, input_dim),
            b1: vec![0.0; hidden_dim],
            w2: Matrix::zeros(output_dim, hidden_dim),
            b2: vec![0.0; output_dim],
            activation: Activation::Tanh,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.rows()
    }

    pub fn param_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn slices(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [self.w1.as_mut_slice(), &mut self.b1, self.w2.as_mut_slice(), &mut self.b2]
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// FNV-1a over the little-endian bytes of every parameter.
    pub fn digest(&self) -> [u8; 8] {
        let mut h = crate::seed::fnv1a64(b"");
        for s in self.slices() {
            for v in s {
                h = fnv1a64_extend(h, &v.to_bits().to_le_bytes());
            }
        }
        h.to_le_bytes()
    }

    pub(crate) fn forward_cached(&self, x: &[f64]) -> ForwardCache {
        let mut hidden = self.w1.matvec(x);
        for (h, b) in hidden.iter_mut().zip(&self.b1) {
            *h = self.activation.apply(*h + b);
        }
        let mut out = self.w2.matvec(&hidden);
        for (o, b) in out.iter_mut().zip(&self.b2) {
            *o += b;
        }
        ForwardCache { hidden, out }
    }

    pub fn forward_raw(&self, x: &[f64]) -> Result<Vec<f64>, SpaceError> {
        if x.len() != self.input_dim() {
            return Err(SpaceError::DimensionMismatch { expected: self.input_dim(), found: x.len() });
        }
        Ok(self.forward_cached(x).out)
    }

    /// Accumulates `∂L/∂params` into `grads` given `∂L/∂out = upstream`.
    pub(crate) fn backward_acc(&self, x: &[f64], cache: &ForwardCache, upstream: &[f64], grads: &mut AlignGrads) {
        grads.w2.add_outer(1.0, upstream, &cache.hidden);
        grads.b2.iter_mut().zip(upstream).for_each(|(g, u)| *g += u);
        let mut dhidden = vec![0.0; self.hidden_dim()];
        self.w2.matvec_t_acc(upstream, &mut dhidden);
        for (d, h) in dhidden.iter_mut().zip(&cache.hidden) {
            *d *= self.activation.derivative_from_output(*h);
        }
        grads.w1.add_outer(1.0, &dhidden, x);
        grads.b1.iter_mut().zip(&dhidden).for_each(|(g, d)| *g += d);
    }
}

pub fn align_forward(module: &AlignmentModule, state: &MemoryState) -> Result<UnifiedVector, SpaceError> {
    let out = module.forward_raw(&state.raw)?;
    UnifiedVector::new(out)
}

/// Parameter gradients for a single state given the gradient of the loss
/// with respect to the module output.
pub fn align_gradients(
    module: &AlignmentModule,
    state: &MemoryState,
    upstream: &[f64],
) -> Result<AlignGrads, SpaceError> {
    if state.raw.len() != module.input_dim() {
        return Err(SpaceError::DimensionMismatch { expected: module.input_dim(), found: state.raw.len() });
    }
    if upstream.len() != module.output_dim() {
        return Err(SpaceError::DimensionMismatch { expected: module.output_dim(), found: upstream.len() });
    }
    let cache = module.forward_cached(&state.raw);
    let mut grads = AlignGrads::zeros_like(module);
    module.backward_acc(&state.raw, &cache, upstream, &mut grads);
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::ParadigmId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(raw: Vec<f64>) -> MemoryState {
        MemoryState { paradigm: ParadigmId::unregistered("test"), raw }
    }

    fn random_module(rng: &mut ChaCha8Rng, i: usize, h: usize, o: usize) -> AlignmentModule {
        let mut m = AlignmentModule::random(i, h, o, rng);
        m.b1.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        m.b2.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        m
    }

    #[test]
    fn constant_map() {
        let mut m = AlignmentModule::zeros(3, 4, 2);
        m.b2 = vec![1.5, -2.0];
        assert_eq!(align_forward(&m, &state(vec![9.0, -1.0, 3.0])).unwrap().0, vec![1.5, -2.0]);
    }

    #[test]
    fn identity_composition() {
        let n = 5;
        let m = AlignmentModule {
            w1: Matrix::identity(n),
            b1: vec![0.0; n],
            w2: Matrix::identity(n),
            b2: vec![0.0; n],
            activation: Activation::Identity,
        };
        let raw = vec![0.3, -1.0, 2.5, 0.0, 7.0];
        assert_eq!(align_forward(&m, &state(raw.clone())).unwrap().0, raw);
    }

    #[test]
    fn dimension_mismatch() {
        let m = AlignmentModule::zeros(3, 4, 2);
        assert_eq!(
            align_forward(&m, &state(vec![1.0; 4])),
            Err(SpaceError::DimensionMismatch { expected: 3, found: 4 })
        );
        assert!(align_gradients(&m, &state(vec![1.0; 3]), &[1.0; 3]).is_err());
    }

    #[test]
    fn forward_matches_naive_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = random_module(&mut rng, 7, 6, 5);
            let x: Vec<f64> = (0..7).map(|_| rng.random_range(-2.0..2.0)).collect();
            // Naive triple loop, written independently of Matrix::matvec.
            let mut hidden = [0.0; 6];
            for r in 0..6 {
                let mut acc = m.b1[r];
                for c in 0..7 {
                    acc += m.w1.as_slice()[r * 7 + c] * x[c];
                }
                hidden[r] = acc.tanh();
            }
            let got = align_forward(&m, &state(x)).unwrap().0;
            for r in 0..5 {
                let mut acc = m.b2[r];
                for c in 0..6 {
                    acc += m.w2.as_slice()[r * 6 + c] * hidden[c];
                }
                assert!((got[r] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn output_bias_shift_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_module(&mut rng, 4, 4, 3);
        let s = state(vec![0.1, 0.2, -0.3, 0.4]);
        let base = align_forward(&m, &s).unwrap().0;
        let mut shifted = m.clone();
        let delta = [0.5, -0.25, 2.0];
        shifted.b2.iter_mut().zip(delta).for_each(|(b, d)| *b += d);
        let out = align_forward(&shifted, &s).unwrap().0;
        for i in 0..3 {
            // Equal up to the rounding of one addition.
            assert!((out[i] - base[i] - delta[i]).abs() <= 4.0 * f64::EPSILON * (base[i].abs() + delta[i].abs()));
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_module(&mut rng, 3, 3, 2);
        let g = align_gradients(&m, &state(vec![1.0, 2.0, 3.0]), &[0.0, 0.0]).unwrap();
        assert!(g.slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn single_unit_hand_derivative() {
        // y = w2 * tanh(w1 x + b1) + b2; L = u * y
        let (w1, b1, w2, b2, x, u) = (0.7, -0.2, 1.3, 0.1, 0.9, 2.0);
        let m = AlignmentModule {
            w1: Matrix::from_vec(1, 1, vec![w1]),
            b1: vec![b1],
            w2: Matrix::from_vec(1, 1, vec![w2]),
            b2: vec![b2],
            activation: Activation::Tanh,
        };
        let g = align_gradients(&m, &state(vec![x]), &[u]).unwrap();
        let a: f64 = (w1 * x + b1).tanh();
        let sech2 = 1.0 - a * a;
        assert!((g.w2.get(0, 0) - u * a).abs() < 1e-15);
        assert!((g.b2[0] - u).abs() < 1e-15);
        assert!((g.w1.get(0, 0) - u * w2 * sech2 * x).abs() < 1e-15);
        assert!((g.b1[0] - u * w2 * sech2).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = 1e-4;
        for _ in 0..10 {
            let m = random_module(&mut rng, 4, 5, 3);
            let s = state((0..4).map(|_| rng.random_range(-1.5..1.5)).collect());
            let up: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let loss = |m: &AlignmentModule| -> f64 {
                align_forward(m, &s).unwrap().0.iter().zip(&up).map(|(y, u)| y * u).sum()
            };
            let g = align_gradients(&m, &s, &up).unwrap();
            for (p, gslice) in g.slices().iter().enumerate() {
                for i in 0..gslice.len() {
                    let mut plus = m.clone();
                    plus.slices_mut()[p][i] += h;
                    let mut minus = m.clone();
                    minus.slices_mut()[p][i] -= h;
                    let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                    let an = gslice[i];
                    let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-6);
                    assert!(rel < 1e-4, "param {p}[{i}]: fd {fd} analytic {an}");
                }
            }
        }
    }

    #[test]
    fn digest_tracks_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random_module(&mut rng, 3, 3, 3);
        let mut n = m.clone();
        assert_eq!(m.digest(), n.digest());
        n.b1[0] += 1e-12;
        assert_ne!(m.digest(), n.digest());
    }
}
