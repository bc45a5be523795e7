use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SpaceError;
use crate::tensor::Matrix;

/// Name and raw-state width of the four built-in paradigms.
pub const DEFAULT_PARADIGMS: [(&str, usize); 4] =
    [("anchor-graph", 64), ("explicit-sim", 96), ("parametric-sim", 64), ("latent-sim", 48)];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParadigmId(String);

impl ParadigmId {
    /// An id that has not gone through a registry; only for states built by
    /// hand.
    #[cfg(test)]
    pub(crate) fn unregistered(name: &str) -> Self {
        Self(name.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for ParadigmId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Desk-scale stand-in for a long-horizon memory: one content vector whose
/// coordinate blocks correspond to context segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceContent {
    pub id: String,
    pub content_vector: Vec<f64>,
    pub gold_answer: String,
    pub segment_count: usize,
    /// Which paradigm view covers which segment.
    #[serde(default)]
    pub segment_tags: Vec<(usize, ParadigmId)>,
}

/// Coordinates of segment `index` when `dim` coordinates are split into
/// `count` contiguous blocks.
pub fn segment_range(dim: usize, count: usize, index: usize) -> Range<usize> {
    (index * dim / count)..((index + 1) * dim / count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryState {
    pub paradigm: ParadigmId,
    pub raw: Vec<f64>,
}

/// Serializable description of one registered paradigm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParadigmEntry {
    pub name: String,
    pub dim: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
struct Encoder {
    entry: ParadigmEntry,
    weight: Matrix,
}

/// Registered paradigms and their fixed encoders `tanh(W c)`, with `W` of
/// shape `d_t × d_c` drawn from a standard normal scaled by `1/√d_c`.
#[derive(Debug, Clone)]
pub struct ParadigmRegistry {
    content_dim: usize,
    encoders: Vec<Encoder>,
}

impl ParadigmRegistry {
    pub fn new(content_dim: usize) -> Result<Self, SpaceError> {
        if content_dim == 0 {
            return Err(SpaceError::ZeroDimension);
        }
        Ok(Self { content_dim, encoders: Vec::new() })
    }

    pub fn with_entries(content_dim: usize, entries: &[ParadigmEntry]) -> Result<Self, SpaceError> {
        let mut reg = Self::new(content_dim)?;
        for e in entries {
            reg.register_paradigm(&e.name, e.dim, e.seed)?;
        }
        Ok(reg)
    }

    pub fn content_dim(&self) -> usize {
        self.content_dim
    }

    pub fn register_paradigm(&mut self, name: &str, dim: usize, encoder_seed: u64) -> Result<ParadigmId, SpaceError> {
        if dim == 0 {
            return Err(SpaceError::ZeroDimension);
        }
        if self.encoders.iter().any(|e| e.entry.name == name) {
            return Err(SpaceError::DuplicateParadigm(name.to_string()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(encoder_seed);
        let scale = 1.0 / (self.content_dim as f64).sqrt();
        let weight = Matrix::from_fn(dim, self.content_dim, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        });
        self.encoders.push(Encoder { entry: ParadigmEntry { name: name.to_string(), dim, seed: encoder_seed }, weight });
        Ok(ParadigmId(name.to_string()))
    }

    pub fn id(&self, name: &str) -> Result<ParadigmId, SpaceError> {
        self.encoder(name).map(|e| ParadigmId(e.entry.name.clone()))
    }

    pub fn dim(&self, paradigm: &ParadigmId) -> Result<usize, SpaceError> {
        self.encoder(paradigm.as_str()).map(|e| e.entry.dim)
    }

    pub fn entries(&self) -> Vec<ParadigmEntry> {
        self.encoders.iter().map(|e| e.entry.clone()).collect()
    }

    fn encoder(&self, name: &str) -> Result<&Encoder, SpaceError> {
        self.encoders
            .iter()
            .find(|e| e.entry.name == name)
            .ok_or_else(|| SpaceError::UnknownParadigm(name.to_string()))
    }

    /// Encodes a raw content vector (already masked) with a paradigm's encoder.
    pub fn encode_raw(&self, paradigm: &ParadigmId, content: &[f64]) -> Result<Vec<f64>, SpaceError> {
        let enc = self.encoder(paradigm.as_str())?;
        if content.len() != self.content_dim {
            return Err(SpaceError::DimensionMismatch { expected: self.content_dim, found: content.len() });
        }
        let mut raw = enc.weight.matvec(content);
        raw.iter_mut().for_each(|v| *v = v.tanh());
        Ok(raw)
    }
}

/// Builds a paradigm's memory state for one instance. With a mask, only
/// the listed segments of the content vector are visible; the rest are
/// zeroed before encoding.
pub fn encode_state(
    registry: &ParadigmRegistry,
    paradigm: &ParadigmId,
    content: &InstanceContent,
    segment_mask: Option<&[usize]>,
) -> Result<MemoryState, SpaceError> {
    if content.content_vector.iter().any(|v| !v.is_finite()) {
        return Err(SpaceError::NonFinite("content vector"));
    }
    let raw = match segment_mask {
        None => registry.encode_raw(paradigm, &content.content_vector)?,
        Some(mask) => {
            let dim = content.content_vector.len();
            let count = content.segment_count.max(1);
            let mut masked = vec![0.0; dim];
            for &s in mask {
                if s >= count {
                    return Err(SpaceError::MaskOutOfRange { index: s, count });
                }
                let range = segment_range(dim, count, s);
                masked[range.clone()].copy_from_slice(&content.content_vector[range]);
            }
            registry.encode_raw(paradigm, &masked)?
        }
    };
    Ok(MemoryState { paradigm: paradigm.clone(), raw })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::cosine;
    use rand::Rng;

    fn content(v: Vec<f64>, segments: usize) -> InstanceContent {
        InstanceContent { id: "x".into(), content_vector: v, gold_answer: String::new(), segment_count: segments, segment_tags: vec![] }
    }

    fn random_content(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| StandardNormal.sample(rng)).collect()
    }

    #[test]
    fn encoders_are_deterministic() {
        let mut a = ParadigmRegistry::new(64).unwrap();
        let mut b = ParadigmRegistry::new(64).unwrap();
        let pa = a.register_paradigm("latent-sim", 48, 7).unwrap();
        let pb = b.register_paradigm("latent-sim", 48, 7).unwrap();
        let probe: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(a.encode_raw(&pa, &probe).unwrap(), b.encode_raw(&pb, &probe).unwrap());
    }

    #[test]
    fn registration_errors() {
        let mut r = ParadigmRegistry::new(64).unwrap();
        assert_eq!(r.register_paradigm("x", 0, 1), Err(SpaceError::ZeroDimension));
        r.register_paradigm("x", 4, 1).unwrap();
        assert!(matches!(r.register_paradigm("x", 4, 2), Err(SpaceError::DuplicateParadigm(_))));
        assert!(matches!(r.id("nope"), Err(SpaceError::UnknownParadigm(_))));
    }

    #[test]
    fn different_seeds_give_unrelated_encodings() {
        let mut r = ParadigmRegistry::new(64).unwrap();
        let p = r.register_paradigm("p", 64, 1).unwrap();
        let q = r.register_paradigm("q", 64, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mean: f64 = (0..100)
            .map(|_| {
                let c = random_content(&mut rng, 64);
                cosine(&r.encode_raw(&p, &c).unwrap(), &r.encode_raw(&q, &c).unwrap())
            })
            .sum::<f64>()
            / 100.0;
        assert!(mean.abs() < 0.3, "mean cosine {mean}");
    }

    #[test]
    fn masks() {
        let mut r = ParadigmRegistry::new(64).unwrap();
        let p = r.register_paradigm("p", 48, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let zero_state = r.encode_raw(&p, &[0.0; 64]).unwrap();
        for _ in 0..100 {
            let c = content(random_content(&mut rng, 64), 4);
            let full = encode_state(&r, &p, &c, None).unwrap();
            assert_eq!(encode_state(&r, &p, &c, Some(&[0, 1, 2, 3])).unwrap(), full);
            assert_eq!(encode_state(&r, &p, &c, Some(&[])).unwrap().raw, zero_state);
            let split: usize = rng.random_range(1..4);
            let a: Vec<usize> = (0..split).collect();
            let b: Vec<usize> = (split..4).collect();
            assert_ne!(encode_state(&r, &p, &c, Some(&a)).unwrap(), full);
            assert_ne!(encode_state(&r, &p, &c, Some(&b)).unwrap(), full);
        }
        let c = content(vec![1.0; 64], 4);
        assert_eq!(
            encode_state(&r, &p, &c, Some(&[4])),
            Err(SpaceError::MaskOutOfRange { index: 4, count: 4 })
        );
    }

    #[test]
    fn segment_ranges_tile_the_vector() {
        let mut next = 0;
        for s in 0..5 {
            let r = segment_range(64, 5, s);
            assert_eq!(r.start, next);
            next = r.end;
        }
        assert_eq!(next, 64);
    }
}
