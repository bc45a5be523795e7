//! Seeded synthetic QA corpora over a small fixed world.
//!
//! The world is a set of named entities and relation facts `(s, r) → t`.
//! Some facts are ambiguous and list two possible targets; an instance
//! picks one, and only the instance's content vector records which. An
//! instance is a path of up to two hops. The query names the start entity
//! and the relations; the answer is the name of the last entity.
//!
//! Segment `k` of the content vector carries the embedding of the entity
//! reached at hop `k`. Remaining segments carry embeddings of entities
//! outside the instance's graph. All segments get Gaussian noise.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::corpus::CorpusInstance;
use crate::graph::{emit, EmitMode, Edge, MemoryGraph, Node, NodeId};
use crate::seed::component_rng;
use crate::space::segment_range;

const TYPES: [&str; 6] = ["city", "person", "guild", "river", "tower", "order"];
const RELATIONS: [&str; 12] = [
    "capital", "mayor", "founder", "rival", "ally", "owner", "mentor", "neighbor", "patron", "heir", "warden", "scribe",
];
const ONSETS: [&str; 12] = ["k", "v", "m", "t", "s", "r", "l", "d", "b", "n", "z", "p"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
/// Words the generator adds besides ids, names, types and relations.
const CONFIDENCE_WORDS: [&str; 3] = ["1.0", "0.9", "0.85"];
const SPECIAL_TOKENS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    /// Inclusive range of full-graph node counts.
    pub nodes: (usize, usize),
    /// Inclusive range of full-graph edge counts.
    pub edges: (usize, usize),
    pub segment_count: usize,
    /// Upper bound on the vocabulary the corpus needs, special tokens included.
    pub vocab_size: usize,
    pub content_dim: usize,
    pub entities: usize,
    pub relations: usize,
    /// Facts per entity.
    pub out_degree: usize,
    /// Probability that a fact has two candidate targets.
    pub ambiguity: f64,
    /// Fewest hops of a gold path; clamped to the effective maximum.
    pub min_hops: usize,
    pub max_hops: usize,
    /// Standard deviation of the noise added to every content coordinate.
    pub noise: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            nodes: (5, 8),
            edges: (4, 9),
            segment_count: 4,
            vocab_size: 200,
            content_dim: 64,
            entities: 20,
            relations: 10,
            out_degree: 2,
            ambiguity: 0.5,
            min_hops: 1,
            max_hops: 2,
            noise: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("infeasible shape parameters: {0}")]
    Infeasible(String),
}

impl SynthParams {
    /// Vocabulary size a corpus with these parameters can need.
    pub fn vocab_needed(&self) -> usize {
        SPECIAL_TOKENS + 2 * self.entities + TYPES.len() + self.relations + CONFIDENCE_WORDS.len()
    }

    pub fn validate(&self, n: usize) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::Infeasible(m));
        let (nmin, nmax) = self.nodes;
        let (emin, emax) = self.edges;
        if n == 0 {
            return fail("n must be at least 1".into());
        }
        if nmin == 0 || nmin > nmax {
            return fail(format!("node range [{nmin}, {nmax}] is empty or starts at 0"));
        }
        if emin > emax {
            return fail(format!("edge range [{emin}, {emax}] is empty"));
        }
        if emin > nmax * (nmax - 1) {
            return fail(format!("{emin} edges need more than {nmax} nodes"));
        }
        if nmax >= self.entities {
            return fail(format!("{nmax} nodes per graph leave none of the {} entities outside the graph", self.entities));
        }
        if self.relations == 0 || self.relations > RELATIONS.len() {
            return fail(format!("relations must be in 1..={}", RELATIONS.len()));
        }
        if self.out_degree == 0 || self.out_degree > self.relations || self.entities < 3 {
            return fail("out_degree must be in 1..=relations and there must be at least 3 entities".into());
        }
        if self.segment_count == 0 || self.content_dim < self.segment_count {
            return fail("content_dim must be at least segment_count ≥ 1".into());
        }
        if self.vocab_needed() > self.vocab_size {
            return fail(format!("the world needs {} tokens, vocab_size is {}", self.vocab_needed(), self.vocab_size));
        }
        if self.min_hops > self.max_hops {
            return fail(format!("min_hops {} exceeds max_hops {}", self.min_hops, self.max_hops));
        }
        if !(0.0..=1.0).contains(&self.ambiguity) || !(self.noise >= 0.0) {
            return fail("ambiguity must be in [0, 1] and noise non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Fact {
    relation: usize,
    targets: Vec<usize>,
}

/// The fixed world a corpus is drawn from.
#[derive(Debug, Clone)]
pub struct World {
    names: Vec<String>,
    types: Vec<&'static str>,
    facts: Vec<Vec<Fact>>,
    embeddings: Vec<Vec<f64>>,
}

fn make_name(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.random_range(2..=3);
    (0..syllables)
        .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
        .collect()
}

impl World {
    pub fn new(params: &SynthParams, seed: u64) -> Self {
        let mut rng = component_rng(seed, "synth-world");
        let mut seen: HashSet<String> = RELATIONS.iter().chain(TYPES.iter()).map(|s| s.to_string()).collect();
        let mut names = Vec::with_capacity(params.entities);
        while names.len() < params.entities {
            let name = make_name(&mut rng);
            if seen.insert(name.clone()) {
                names.push(name);
            }
        }
        let types = (0..params.entities).map(|_| *TYPES.choose(&mut rng).unwrap()).collect();
        let width = params.content_dim.div_ceil(params.segment_count);
        let embeddings =
            (0..params.entities).map(|_| (0..width).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let mut facts = Vec::with_capacity(params.entities);
        for e in 0..params.entities {
            let mut rels: Vec<usize> = (0..params.relations).collect();
            rels.shuffle(&mut rng);
            let mut list = Vec::new();
            for &relation in rels.iter().take(params.out_degree) {
                let mut targets = vec![other_than(&mut rng, params.entities, &[e])];
                if rng.random_bool(params.ambiguity) {
                    let t = other_than(&mut rng, params.entities, &[e, targets[0]]);
                    targets.push(t);
                }
                list.push(Fact { relation, targets });
            }
            facts.push(list);
        }
        Self { names, types, facts, embeddings }
    }

    pub fn name(&self, entity: usize) -> &str {
        &self.names[entity]
    }

    fn description(&self, entity: usize) -> String {
        format!("{} {}", self.names[entity], self.types[entity])
    }

    fn node(&self, entity: usize) -> Node {
        Node::new(NodeId::from_index(entity as u64 + 1), self.description(entity)).expect("generated text is valid")
    }
}

fn other_than(rng: &mut ChaCha8Rng, count: usize, exclude: &[usize]) -> usize {
    loop {
        let c = rng.random_range(0..count);
        if !exclude.contains(&c) {
            return c;
        }
    }
}

/// One hop of a gold path.
struct Hop {
    relation: usize,
    target: usize,
    /// The other candidate target of an ambiguous fact.
    alternative: Option<usize>,
}

fn sample_path(world: &World, rng: &mut ChaCha8Rng, hops: usize) -> (usize, Vec<Hop>) {
    'retry: loop {
        let start = rng.random_range(0..world.names.len());
        let mut visited = vec![start];
        let mut path = Vec::new();
        let mut here = start;
        for _ in 0..hops {
            let options: Vec<&Fact> =
                world.facts[here].iter().filter(|f| f.targets.iter().any(|t| !visited.contains(t))).collect();
            let Some(fact) = options.choose(rng) else { continue 'retry };
            let open: Vec<usize> = fact.targets.iter().copied().filter(|t| !visited.contains(t)).collect();
            let target = *open.choose(rng).unwrap();
            let alternative = fact.targets.iter().copied().find(|&t| t != target);
            path.push(Hop { relation: fact.relation, target, alternative });
            visited.push(target);
            here = target;
        }
        return (start, path);
    }
}

fn confidence_for(hops: usize) -> f64 {
    match hops {
        0 => 1.0,
        1 => 0.9,
        _ => 0.85,
    }
}

fn query_text(world: &World, start: usize, path: &[Hop]) -> String {
    if path.is_empty() {
        return format!("who is {}", world.name(start));
    }
    let mut parts: Vec<&str> = path.iter().rev().map(|h| RELATIONS[h.relation]).collect();
    parts.push(world.name(start));
    parts.join(" of ")
}

fn instance(world: &World, params: &SynthParams, rng: &mut ChaCha8Rng, index: usize) -> CorpusInstance {
    let (nmin, nmax) = params.nodes;
    let (emin, emax) = params.edges;
    let max_hops = params.max_hops.min(nmax - 1).min(emax);
    let hops = if max_hops == 0 { 0 } else { rng.random_range(params.min_hops.clamp(1, max_hops)..=max_hops) };
    let (start, path) = sample_path(world, rng, hops);

    // Node count: enough for the path, and for the minimum edge count.
    let lo = (nmin.max(hops + 1)..=nmax).find(|&n| n * (n - 1) >= emin.max(hops)).expect("validated");
    let n_nodes = rng.random_range(lo..=nmax);
    let mut entities = vec![start];
    entities.extend(path.iter().map(|h| h.target));
    let gold_count = entities.len();
    for h in &path {
        if let Some(a) = h.alternative {
            if entities.len() < n_nodes && !entities.contains(&a) {
                entities.push(a);
            }
        }
    }
    while entities.len() < n_nodes {
        let e = rng.random_range(0..world.names.len());
        if !entities.contains(&e) {
            entities.push(e);
        }
    }

    let mut pairs: HashSet<(usize, usize)> = HashSet::new();
    let mut edges: Vec<(usize, usize, usize)> = Vec::new();
    let mut prev = start;
    for h in &path {
        pairs.insert((prev, h.target));
        edges.push((prev, h.target, h.relation));
        prev = h.target;
    }
    let gold_edges = edges.len();
    let n_edges = rng.random_range(emin.max(hops)..=emax.min(n_nodes * (n_nodes - 1)));
    // Alternatives first, then world facts among graph nodes, then random links.
    let mut prev = start;
    for h in &path {
        if let Some(a) = h.alternative.filter(|a| entities.contains(a)) {
            if edges.len() < n_edges && pairs.insert((prev, a)) {
                edges.push((prev, a, h.relation));
            }
        }
        prev = h.target;
    }
    let is_gold = |e: usize| entities[..gold_count].contains(&e);
    let mut candidates: Vec<(usize, usize, usize)> = Vec::new();
    for &s in &entities {
        for f in &world.facts[s] {
            for &t in &f.targets {
                if entities.contains(&t) && !(is_gold(s) && is_gold(t)) {
                    candidates.push((s, t, f.relation));
                }
            }
        }
    }
    candidates.shuffle(rng);
    for (s, t, r) in candidates {
        if edges.len() >= n_edges {
            break;
        }
        if pairs.insert((s, t)) {
            edges.push((s, t, r));
        }
    }
    let mut open: Vec<(usize, usize)> = Vec::new();
    for &s in &entities {
        for &t in &entities {
            if s != t && !pairs.contains(&(s, t)) {
                open.push((s, t));
            }
        }
    }
    open.shuffle(rng);
    open.sort_by_key(|&(s, t)| is_gold(s) && is_gold(t));
    for (s, t) in open {
        if edges.len() >= n_edges {
            break;
        }
        pairs.insert((s, t));
        edges.push((s, t, rng.random_range(0..params.relations)));
    }

    let to_edge = |&(s, t, r): &(usize, usize, usize)| {
        Edge::new(NodeId::from_index(s as u64 + 1), NodeId::from_index(t as u64 + 1), RELATIONS[r]).expect("valid")
    };
    let gold_nodes: Vec<Node> = entities[..gold_count].iter().map(|&e| world.node(e)).collect();
    let gold_graph = MemoryGraph::new(gold_nodes, edges[..gold_edges].iter().map(to_edge).collect()).expect("valid");
    let mut full_nodes: Vec<Node> = entities.iter().map(|&e| world.node(e)).collect();
    let mut full_edges: Vec<Edge> = edges.iter().map(to_edge).collect();
    full_nodes.shuffle(rng);
    full_edges.shuffle(rng);
    let full_graph = MemoryGraph::new(full_nodes, full_edges).expect("valid");

    let noise = Normal::new(0.0, params.noise).expect("validated");
    let mut content = vec![0.0; params.content_dim];
    for seg in 0..params.segment_count {
        let entity = match path.get(seg) {
            Some(h) => h.target,
            None => other_than(rng, world.names.len(), &entities),
        };
        let range = segment_range(params.content_dim, params.segment_count, seg);
        for (k, i) in range.enumerate() {
            content[i] = world.embeddings[entity][k] + noise.sample(rng);
        }
    }

    let answer = *entities[..gold_count].last().unwrap();
    CorpusInstance {
        id: format!("syn-{index:05}"),
        query: query_text(world, start, &path),
        gold_answer: world.name(answer).to_string(),
        full_graph_text: emit(&full_graph, EmitMode::Full, None).expect("valid"),
        gold_subgraph_text: emit(&gold_graph, EmitMode::Evidence, Some(confidence_for(hops))).expect("valid"),
        content_vector: Some(content),
        segment_count: params.segment_count,
    }
}

/// `n` instances drawn from the world of `seed`. Output is a pure function
/// of the arguments.
pub fn generate_synthetic_corpus(n: usize, seed: u64, params: &SynthParams) -> Result<Vec<CorpusInstance>, SynthError> {
    params.validate(n)?;
    let world = World::new(params, seed);
    let mut rng = component_rng(seed, "synth-instances");
    Ok((0..n).map(|i| instance(&world, params, &mut rng, i)).collect())
}
